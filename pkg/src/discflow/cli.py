"""
Command-line front end.

Subcommands ``ode``, ``pde``, ``verify`` and ``figures`` read a scenario (a
JSON path or the name of a shipped scenario), write CSV/JSON data into
``--out`` and signal the outcome through the exit code:

=====  ==========================================================
0      all checks passed
1      a verification suite failed (``verify``)
2      bound violation (``ode``) or audit failure (``pde``)
3      integration failure, non-contraction or too coarse a grid
64     usage or configuration error
=====  ==========================================================
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ._io import write_csv, write_json
from .funcrep import InvalidParameterError
from .rk import IntegrationError

EXIT_OK = 0
EXIT_SUITE_FAILED = 1
EXIT_VIOLATION = 2
EXIT_NUMERICS = 3
EXIT_USAGE = 64

TOL_RANGE = (1e-12, 1e-2)
PDE_TIMES = (0.0, 0.5, 1.0)
MASS_DRIFT = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _tol(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not TOL_RANGE[0] <= val <= TOL_RANGE[1]:
        raise argparse.ArgumentTypeError(f"tol must lie in [{TOL_RANGE[0]:g}, {TOL_RANGE[1]:g}]")
    return val


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    from .suites import SUITES

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH", help="scenario JSON file or shipped scenario name")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--tol", type=_tol, help="tolerance override in [1e-12, 1e-2]")
    common.add_argument("--ny", type=_positive_int, help="Lagrangian cells")
    common.add_argument("--nt", type=_positive_int, help="stored time levels")
    common.add_argument("--seed", type=int, default=0, help="seed for sampling-based checks")

    parser = _Parser(prog="discflow", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("ode", parents=[common], help="solve a batch of discontinuous ODEs (default scenario fig1)")
    p = sub.add_parser("pde", parents=[common], help="solve a nonlocal conservation law (default fig2_middle)")
    p.add_argument("--times", type=float, nargs="+", default=list(PDE_TIMES), help="density snapshot times")
    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("--suite", required=True, choices=list(SUITES))
    sub.add_parser("figures", parents=[common], help="emit the data behind the shipped figures")
    return parser


# ---------------------------------------------------------------------------


def _load(ref, default, kind):
    from .nonlocal_ import Scenario
    from .scenario import OdeScenario, load_scenario

    sc = load_scenario(ref if ref is not None else default)
    want = OdeScenario if kind == "ode" else Scenario
    if not isinstance(sc, want):
        raise UsageError(f"scenario {ref} is not {'an ODE' if kind == 'ode' else 'a nonlocal'} scenario")
    return sc


def _column(name: str, x0: float) -> str:
    return f"{name}_x0={x0:g}"


def run_ode(sc, out: Path, tol=None) -> tuple[int, dict]:
    """Trajectories, secant bounds and residuals of every (field, x0) pair."""
    from .disc_ode import derivative_bounds_report, solve_trajectory

    tol = sc.tol if tol is None else tol
    ts = sc.times
    header, cols = ["t"], [ts]
    bound_rows = []
    cases = []
    ok = True
    for name, lam in sc.items():
        traj = solve_trajectory(sc.v, lam, sc.x0, sc.T, tol, t_eval=ts)
        X = traj(ts)
        case = {"name": name, "residual": traj.residual, "residual_ok": traj.residual_ok, "bounds_ok": True}
        ok &= traj.residual_ok
        for j, x0 in enumerate(sc.x0):
            header.append(_column(name, x0))
            cols.append(X[:, j])
            r = derivative_bounds_report(sc.v, lam, float(x0), ts[1:], tol=tol)
            case["bounds_ok"] &= r.ok
            bound_rows.extend((name, x0, t, q, lo, hi) for t, q, lo, hi in zip(r.t, r.observed, r.lower, r.upper))
        ok &= case["bounds_ok"]
        cases.append(case)
    write_csv(out / "trajectories.csv", header, zip(*cols))
    write_csv(out / "bounds.csv", ["case", "x0", "t", "fd_ratio", "lower", "upper"], bound_rows)
    report = {"scenario": sc.name, "tol": tol, "passed": bool(ok), "cases": cases}
    write_json(out / "report.json", report)
    return (EXIT_OK if ok else EXIT_VIOLATION), report


def _pde_audit(sol) -> list[dict]:
    from .nonlocal_ import max_principle_audit

    checks = []
    lag = sol.mass_lagrangian
    m0 = float(lag[0])
    rel_lag = float(np.max(np.abs(lag - m0))) / m0 if m0 > 0 else 0.0
    checks.append({"name": "lagrangian mass", "observed": rel_lag, "bound": 1e-12, "passed": rel_lag <= 1e-12})
    drift = float(np.max(np.abs(sol.mass_eulerian - m0))) / m0 if m0 > 0 else 0.0
    checks.append({"name": "eulerian mass drift", "observed": drift, "bound": MASS_DRIFT, "passed": drift <= MASS_DRIFT})
    for case in ("increasing", "negative", "exponential"):
        a = max_principle_audit(sol, case, strict=False)
        if a["unmet_assumptions"]:
            continue
        checks.append({"name": f"maximum principle ({case})", "observed": a["observed"],
                       "bound": a["bound"] + a["slack"], "passed": a["passed"]})
    return checks


def run_pde(sc, out: Path, tol=None, times=PDE_TIMES, ny=None, nt=None) -> tuple[int, dict, object]:
    """Density snapshots, the ``(t, max, mass, tv)`` audit table and the report."""
    from .nonlocal_ import PICARD_TOL, fixed_point_solve

    sc = sc.with_grid(ny=ny, nt=nt)
    tol = PICARD_TOL if tol is None else tol
    levels_at = []
    for t in times:
        if not 0.0 <= t <= sc.T:
            raise UsageError(f"snapshot time {t:g} outside [0, {sc.T:g}]")
        k = int(np.argmin(np.abs(sc.levels - t)))
        if abs(sc.levels[k] - t) > 1e-12 * max(1.0, sc.T):
            raise UsageError(f"snapshot time {t:g} is not a stored level; choose nt so that it is")
        levels_at.append(k)
    sol = fixed_point_solve(sc, tol=tol)
    x = sol.centers
    for t, k in zip(times, levels_at):
        write_csv(out / f"density_t{t:g}.csv", ["x", "q"], zip(x, sol.density[k]))
    write_csv(out / "audit.csv", ["t", "max", "mass", "tv"], zip(sol.levels, sol.sup, sol.mass_eulerian, sol.tv))
    checks = _pde_audit(sol)
    ok = all(c["passed"] for c in checks)
    report = {
        "scenario": sc.name,
        "tol": tol,
        "ny": sc.ny,
        "nt": sc.nt,
        "windows": len(sol.history),
        "max_iterations": int(sol.iterations.max()) if sol.history else 0,
        "passed": ok,
        "checks": checks,
    }
    write_json(out / "report.json", report)
    return (EXIT_OK if ok else EXIT_VIOLATION), report, sol


def run_verify(name: str, out: Path, scenario=None, tol=None, ny=None, nt=None, seed=0) -> tuple[int, dict]:
    from .scenario import load_scenario
    from .suites import run_suite

    kwargs = {"seed": seed}
    if scenario is not None:
        kwargs["sc"] = load_scenario(scenario)
    for key, val in (("tol", tol), ("ny", ny), ("nt", nt)):
        if val is not None:
            kwargs[key] = val
    try:
        rep = run_suite(name, **kwargs)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    data = rep.to_dict()
    write_json(out / "report.json", data)
    return (EXIT_OK if rep.passed else EXIT_SUITE_FAILED), data


def run_figures(out: Path, tol=None, ny=None, nt=None) -> int:
    """Fig. 1 trajectories and bounds, Fig. 2 snapshots, Fig. 3 max/TV curves."""
    from .suites import FIG2

    code, _ = run_ode(_load(None, "fig1", "ode"), out / "fig1", tol)
    for name in FIG2:
        c, _, sol = run_pde(_load(name, name, "pde"), out / "fig2" / name, tol, ny=ny, nt=nt)
        write_csv(out / "fig3" / f"{name}.csv", ["t", "max", "tv"], zip(sol.levels, sol.sup, sol.tv))
        code = max(code, c)
    return code


# ---------------------------------------------------------------------------


def _summary(report: dict) -> str:
    items = report.get("checks") or report.get("cases") or []
    lines = []
    for c in items:
        flag = c.get("passed", c.get("residual_ok", True) and c.get("bounds_ok", True))
        lines.append(f"{'PASS' if flag else 'FAIL'}  {c['name']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    from .nonlocal_ import GridTooCoarseError, NonContractionError

    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.command == "ode":
            code, rep = run_ode(_load(args.scenario, "fig1", "ode"), out, args.tol)
        elif args.command == "pde":
            code, rep, _ = run_pde(_load(args.scenario, "fig2_middle", "pde"), out, args.tol, args.times, args.ny, args.nt)
        elif args.command == "verify":
            code, rep = run_verify(args.suite, out, args.scenario, args.tol, args.ny, args.nt, args.seed)
        else:
            code, rep = run_figures(out, args.tol, args.ny, args.nt), {}
    except (UsageError, InvalidParameterError) as exc:
        print(f"discflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, NonContractionError, GridTooCoarseError) as exc:
        print(f"discflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    text = _summary(rep)
    if text:
        print(text)
    print(f"exit {code}; output in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())

"""
Verification suites: each returns a report of named checks with observed
value, bound and verdict. The CLI ``verify`` subcommand is a thin wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .disc_ode import (
    derivative_bounds_report,
    filippov_enclosure,
    solve_trajectory,
    stability_bound,
    z_eval,
    z_invert,
)
from .funcrep import LipschitzField, PiecewiseConstantFn, VelocityFn, mollify
from .scenario import OdeScenario, load_scenario

__all__ = ["Check", "SuiteReport", "SUITES", "run_suite"]

FIG2 = ("fig2_left", "fig2_middle", "fig2_right")


@dataclass
class Check:
    name: str
    observed: float
    bound: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "observed": self.observed, "bound": self.bound, "passed": bool(self.passed), **self.detail}


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, observed, bound, passed, **detail) -> Check:
        c = Check(name, float(observed), float(bound), bool(passed), detail)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _is_constant(lam: LipschitzField) -> bool:
    return lam.params is not None and lam.params[1] == 0.0 and (lam.params[2] == 0.0 or lam.params[3] == 0.0)


def _ode(sc) -> OdeScenario:
    sc = load_scenario("fig1") if sc is None else sc
    if not isinstance(sc, OdeScenario):
        raise TypeError("this suite needs an ODE scenario")
    return sc


# ---------------------------------------------------------------------------


def suite_ode_bounds(sc=None, tol=None, **_) -> SuiteReport:
    """Exact anchor for constant fields, residual certificates, secant bounds
    and their tightness for constant fields."""
    sc = _ode(sc)
    tol = sc.tol if tol is None else tol
    rep = SuiteReport("ode-bounds")
    ts = sc.times
    fine = np.linspace(0.0, sc.T, 1001)
    for name, lam in sc.items():
        traj = solve_trajectory(sc.v, lam, sc.x0, sc.T, tol, t_eval=fine)
        rep.add(f"{name}: residual", traj.residual, 10 * tol, traj.residual_ok)
        if _is_constant(lam):
            a, b, c, omega = lam.params
            rate = a + c
            exact = np.stack([z_invert(sc.v, float(x0), rate * fine) for x0 in sc.x0], axis=1)
            err = float(np.max(np.abs(traj(fine) - exact)))
            rep.add(f"{name}: exact anchor", err, 1e-8, err <= 1e-8)
        closest = math.inf
        worst = 0.0
        ok = True
        for x0 in sc.x0:
            r = derivative_bounds_report(sc.v, lam, float(x0), ts[1:], tol=tol)
            ok &= r.ok
            worst = max(worst, float(np.max(np.maximum(r.lower - r.observed, r.observed - r.upper))))
            closest = min(closest, r.closeness)
        rep.add(f"{name}: secant bounds", worst, 1e-6, ok, note="largest excess over [lower, upper]")
        if _is_constant(lam):
            rep.add(f"{name}: bound tightness", closest, 0.05, closest <= 0.05)
    return rep


def _random_velocity(rng, lo=1.0, hi=3.0, n_jumps=6, span=1.5) -> VelocityFn:
    bp = np.sort(rng.uniform(-span, span, n_jumps))
    vals = rng.uniform(lo, hi, n_jumps + 1)
    return VelocityFn(PiecewiseConstantFn(bp, vals), lo)


def suite_stability(sc=None, seed=0, n_pairs=100, tol=1e-10, **_) -> SuiteReport:
    """Random perturbation pairs against both stability estimates."""
    rng = np.random.default_rng(seed)
    rep = SuiteReport("stability")
    times = (0.25, 0.5, 1.0)
    strong_ok = weak_ok = 0
    worst_strong = worst_weak = -math.inf
    failures = []
    for k in range(n_pairs):
        v = _random_velocity(rng)
        bp_t = v.base.breakpoints + rng.uniform(-0.05, 0.05, v.base.breakpoints.size)
        if np.any(np.diff(bp_t) <= 0.0):
            bp_t = v.base.breakpoints
        vals_t = np.clip(v.base.values + rng.uniform(-0.3, 0.3, v.base.values.size), 1.0, 3.0)
        vt = VelocityFn(PiecewiseConstantFn(bp_t, vals_t), 1.0)
        a, b = rng.uniform(0.5, 1.5), rng.uniform(-1.0, 1.0)
        lam = LipschitzField.affine_cos(a=a, b=b, window=(-5, 5))
        lamt = LipschitzField.affine_cos(a=a + rng.uniform(-0.1, 0.1), b=b + rng.uniform(-0.1, 0.1), window=(-5, 5))
        x0 = rng.uniform(-0.5, 0.5)
        x0t = x0 + rng.uniform(-0.1, 0.1)
        X = solve_trajectory(v, lam, x0, 1.0, tol, t_eval=times)(np.array(times))
        Xt = solve_trajectory(vt, lamt, x0t, 1.0, tol, t_eval=times)(np.array(times))
        s_ok = w_ok = True
        for t, xa, xb in zip(times, X, Xt):
            sb = stability_bound(v, vt, lam, lamt, x0, x0t, t)
            d = abs(float(xa) - float(xb))
            worst_strong = max(worst_strong, d / sb.strong)
            worst_weak = max(worst_weak, d / sb.weak)
            s_ok &= d <= sb.strong
            w_ok &= d <= sb.weak
            if d > sb.weak and len(failures) < 5:
                failures.append({"pair": k, "t": t, "observed": d, "weak": sb.weak})
        strong_ok += s_ok
        weak_ok += w_ok
    rep.add("strong estimate", worst_strong, 1.0, strong_ok == n_pairs, pairs_ok=strong_ok, pairs=n_pairs, note="largest observed/bound")
    rep.add("weak estimate", worst_weak, 1.0, weak_ok == n_pairs, pairs_ok=weak_ok, pairs=n_pairs, note="largest observed/bound", failures=failures)
    return rep


def suite_mollify(sc=None, ladder=None, ny=500, nt=100, pde=True, **_) -> SuiteReport:
    """ODE sup errors against the weak estimate and PDE weak errors along the ladder."""
    from .nonlocal_ import Scenario
    from .verify import mollification_ladder, mollified_chain, ode_mollified_chain

    ladder = mollification_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    rep = SuiteReport("mollify")
    ode = load_scenario("fig1") if sc is None or not isinstance(sc, OdeScenario) else sc
    for name, lam in ode.items():
        st = ode_mollified_chain(ode.v, lam, ladder, T=ode.T)
        rep.add(f"{name}: sup error monotone", float(st.error[-1, 0]), float(st.error[0, 0]), bool(st.monotone[0]),
                errors=st.error[:, 0].tolist(), ladder=ladder.tolist())
        ratio = float(np.max(st.error / st.bound))
        rep.add(f"{name}: weak estimate", ratio, 1.0, st.within_bound, bounds=st.bound[:, 0].tolist(), note="largest error/bound")
    if pde:
        psc = sc if isinstance(sc, Scenario) else load_scenario("fig2_middle")
        st = mollified_chain(psc.with_grid(ny=ny, nt=nt), ladder)
        for j, lab in enumerate(st.labels):
            rep.add(f"pde weak error {lab} monotone", float(st.error[-1, j]), float(st.error[0, j]), bool(st.monotone[j]),
                    errors=st.error[:, j].tolist())
    return rep


def suite_filippov(sc=None, seed=0, n_samples=500, tol=None, **_) -> SuiteReport:
    """One-sided difference quotients inside the Filippov enclosure."""
    sc = _ode(sc)
    tol = sc.tol if tol is None else tol
    rng = np.random.default_rng(seed)
    ts = np.sort(rng.uniform(0.0, sc.T * 0.999, n_samples))
    rep = SuiteReport("filippov")
    for name, lam in sc.items():
        traj = solve_trajectory(sc.v, lam, sc.x0, sc.T, tol)
        X = traj(ts)
        Q = traj.difference_quotient(ts)
        for j, x0 in enumerate(sc.x0):
            inside = [filippov_enclosure(sc.v, lam, t, X[i, j]).contains(Q[i, j], 1e-6) for i, t in enumerate(ts)]
            frac = float(np.mean(inside))
            rep.add(f"{name} x0={x0:g}: containment", frac, 0.99, frac >= 0.99, note="fraction of sample times")
    return rep


def suite_pde_audit(sc=None, tol=None, ny=None, nt=None, **_) -> SuiteReport:
    """Contraction, conservation, maximum principle, jump relation and flow inversion."""
    from .nonlocal_ import PICARD_TOL, Scenario, fixed_point_solve, flow_map, max_principle_audit

    tol = PICARD_TOL if tol is None else tol
    scs = [load_scenario(n) for n in FIG2] if sc is None else [sc]
    rep = SuiteReport("pde-audit")
    for s in scs:
        if not isinstance(s, Scenario):
            raise TypeError("pde-audit needs nonlocal scenarios")
        s = s.with_grid(ny=ny, nt=nt)
        tag = s.name or "scenario"
        sol = fixed_point_solve(s, tol=tol)
        ratios = [r for r in sol.contraction_ratios() if r.size]
        rmax = max((float(r.max()) for r in ratios), default=0.0)
        rep.add(f"{tag}: contraction ratio", rmax, 0.6, rmax <= 0.6, windows=len(sol.history), max_iterations=int(sol.iterations.max()))
        drift = float(np.max(np.abs(sol.mass_eulerian / sol.mass_lagrangian[0] - 1.0))) if sol.mass_lagrangian[0] > 0 else 0.0
        rep.add(f"{tag}: eulerian mass drift", drift, 1e-6, drift <= 1e-6)
        applied = False
        for case in ("increasing", "negative", "exponential"):
            audit = max_principle_audit(sol, case, strict=False)
            if not audit["unmet_assumptions"]:
                applied = True
                rep.add(f"{tag}: maximum principle ({case})", audit["observed"], audit["bound"] + audit["slack"], audit["passed"])
        if not applied:
            # no case applies; the exponential bound is still reported
            audit = max_principle_audit(sol, "exponential", strict=False)
            rep.add(f"{tag}: exponential bound (assumptions unmet)", audit["observed"], audit["bound"] + audit["slack"],
                    audit["passed"], unmet=audit["unmet_assumptions"])
        for xb in np.asarray(getattr(s.v, "breakpoints", []), dtype=float):
            k = sol.level_index(0.5)
            left, right = sol.eulerian_one_sided(float(sol.levels[k]), float(xb))
            vl = float(s.v.left_limit(np.array([xb]))[0])
            vr = float(s.v(np.array([xb]))[0])
            if right > 0.0:
                expect = vr / vl
                ratio = left / right
                rel = abs(ratio / expect - 1.0)
                rep.add(f"{tag}: jump relation at x={xb:g}", rel, 0.05, rel <= 0.05, ratio=ratio, expected=expect, t=float(sol.levels[k]))
        x = np.linspace(*s.support, 21)
        y = flow_map(sol, 0.2, x, 0.9)
        back = flow_map(sol, 0.9, y, 0.2)
        err = float(np.max(np.abs(back - x)))
        rep.add(f"{tag}: flow inversion", err, 10 * tol, err <= 10 * tol)
    return rep


def suite_composition(sc=None, ladder=None, t=0.5, tol=None, **_) -> SuiteReport:
    """Compositions ``v_eps o X[v_eps](.; t)`` against ``v o X[v](.; t)`` on ``(-1, 0)``."""
    from .disc_ode import derivative_bounds
    from .verify import composition_l1_check, mollification_ladder

    sc = _ode(sc)
    tol = sc.tol if tol is None else tol
    ladder = mollification_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    rep = SuiteReport("composition")
    window = (-1.0, 0.0)
    z = np.linspace(window[0] - 0.01, window[1] + 0.01, 401)

    def as_map(traj):
        vals = traj(np.array([t]))[0]
        return lambda x: np.interp(x, z, vals)

    for name, lam in sc.items():
        ref = as_map(solve_trajectory(sc.v, lam, z, t, tol, t_eval=[t]))
        fs, gs = [], []
        for eps in ladder:
            ve = mollify(sc.v, float(eps))
            fs.append(ve)
            gs.append(as_map(solve_trajectory(ve, lam, z, t, tol, t_eval=[t])))
        C = float(derivative_bounds(sc.v, lam, t)[0])
        r = composition_l1_check(sc.v, ref, fs, gs, window, C)
        rep.add(f"{name}: within estimate", float(np.max(r.errors / r.bounds)), 1.0, r.within, **r.to_dict())
    return rep


SUITES = {
    "ode-bounds": suite_ode_bounds,
    "stability": suite_stability,
    "mollify": suite_mollify,
    "filippov": suite_filippov,
    "pde-audit": suite_pde_audit,
    "composition": suite_composition,
}


def run_suite(name: str, **kwargs) -> SuiteReport:
    try:
        func = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return func(**kwargs)

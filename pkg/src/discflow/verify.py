"""
Independent oracles and convergence-study drivers.

The oracles deliberately avoid the adaptive machinery they check: the
brute-force trajectory is fixed-step RK4 on the transformed equation with
Richardson extrapolation, and the composition check pulls breakpoints back
by bisection instead of integrating anything.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._io import write_csv
from .disc_ode import (
    CaratheodoryCurve,
    Trajectory,
    _residual,
    _sup_lambda_gap,
    _zmap,
    solve_trajectory,
)
from .funcrep import (
    InvalidParameterError,
    LipschitzField,
    PiecewiseConstantFn,
    VelocityFn,
    mollify,
    mollify_field,
)
from .rk import DenseSolution

__all__ = [
    "ConvergenceStudy",
    "CompositionReport",
    "brute_force_trajectory",
    "mollified_chain",
    "ode_mollified_chain",
    "composition_l1_check",
    "hat",
    "default_hats",
    "mollification_ladder",
    "worker_count",
]

MIN_BRUTE_STEPS = 100_000
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def worker_count() -> int:
    """Thread cap from ``NONLOCAL_THREADS`` (default 1)."""
    raw = os.environ.get("NONLOCAL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParameterError(f"NONLOCAL_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _map_rungs(func, items):
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def mollification_ladder(eps0: float = 0.1, n: int = 5) -> np.ndarray:
    """``eps0 * 2**-k`` for ``k = 0 .. n-1``."""
    return eps0 * 2.0 ** -np.arange(n)


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class ConvergenceStudy:
    """Errors along a strictly decreasing parameter ladder.

    ``error`` has one row per rung and one column per metric (``labels``).
    ``bound`` optionally holds an evaluated upper bound per rung and metric.
    Rates are reported, never asserted.
    """

    param: np.ndarray
    error: np.ndarray
    labels: tuple = ("error",)
    bound: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.param, dtype=float).reshape(-1)
        e = np.asarray(self.error, dtype=float)
        if e.ndim == 1:
            e = e[:, None]
        if e.shape[0] != p.size:
            raise InvalidParameterError("one error row per ladder rung expected")
        if p.size > 1 and not np.all(np.diff(p) < 0.0):
            raise InvalidParameterError("parameter ladder must be strictly decreasing")
        if not np.all(np.isfinite(e)):
            raise InvalidParameterError("errors must be finite")
        if len(self.labels) != e.shape[1]:
            raise InvalidParameterError("one label per error column expected")
        object.__setattr__(self, "param", p)
        object.__setattr__(self, "error", e)
        if self.bound is not None:
            b = np.asarray(self.bound, dtype=float)
            object.__setattr__(self, "bound", np.broadcast_to(b.reshape(p.size, -1), e.shape).copy())

    @property
    def rates(self) -> np.ndarray:
        """Local orders ``log(e_k / e_{k+1}) / log(p_k / p_{k+1})``; the first row is NaN."""
        out = np.full(self.error.shape, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.log(self.error[:-1] / self.error[1:])
            den = np.log(self.param[:-1] / self.param[1:])[:, None]
            out[1:] = num / den
        return out

    @property
    def fitted_rate(self) -> np.ndarray:
        """Least-squares slope of ``log error`` against ``log param`` per metric."""
        if self.param.size < 2:
            return np.full(self.error.shape[1], np.nan)
        x = np.log(self.param)
        with np.errstate(divide="ignore"):
            y = np.log(self.error)
        out = np.full(self.error.shape[1], np.nan)
        for j in range(y.shape[1]):
            if np.all(np.isfinite(y[:, j])):
                out[j] = np.polyfit(x, y[:, j], 1)[0]
        return out

    @property
    def monotone(self) -> np.ndarray:
        """Per metric: errors strictly decrease along the ladder."""
        return np.all(np.diff(self.error, axis=0) < 0.0, axis=0)

    @property
    def within_bound(self) -> bool:
        return True if self.bound is None else bool(np.all(self.error <= self.bound))

    def rows(self):
        r = self.rates
        for k in range(self.param.size):
            row = [self.param[k]]
            for j in range(self.error.shape[1]):
                row.extend((self.error[k, j], r[k, j]))
            yield row

    def header(self) -> list[str]:
        if self.error.shape[1] == 1:
            return ["param", "error", "rate"]
        out = ["param"]
        for lab in self.labels:
            out.extend((f"error_{lab}", f"rate_{lab}"))
        return out

    def to_csv(self, path):
        return write_csv(path, self.header(), self.rows())

    def summary(self) -> dict:
        return {
            "param": self.param.tolist(),
            "labels": list(self.labels),
            "error": self.error.tolist(),
            "bound": None if self.bound is None else self.bound.tolist(),
            "fitted_rate": self.fitted_rate.tolist(),
            "monotone": self.monotone.tolist(),
            "within_bound": self.within_bound,
            **self.meta,
        }


# ---------------------------------------------------------------------------
# brute force ODE oracle


def _rk4_generic(lam, zm, p0, T, n_steps, stride):
    h = T / n_steps
    y = np.zeros_like(p0)
    out = np.empty((n_steps // stride + 1, p0.size))
    out[0] = y

    def f(t, c):
        return np.asarray(lam(t, zm.Pinv(p0 + c)), dtype=float) * np.ones_like(c)

    for k in range(n_steps):
        t = k * h
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            out[(k + 1) // stride] = y
    return out


def brute_force_trajectory(v, lam: LipschitzField, x0, T: float, n_steps: int = MIN_BRUTE_STEPS, n_out: int = 1000) -> Trajectory:
    """Fixed-step RK4 on ``c' = lambda(t, Z^{-1}(x0; c))`` with Richardson
    extrapolation against the run with half as many steps.

    The result is a :class:`Trajectory` whose curve interpolates the
    extrapolated values at ``n_out + 1`` equispaced times with slopes taken
    from the field; its residual is computed like any solver output.

    Parameters
    ----------
    n_steps : int
        At least ``100_000`` and a multiple of ``2 * n_out``.
    """
    n_steps, n_out = int(n_steps), int(n_out)
    if n_steps < MIN_BRUTE_STEPS:
        raise InvalidParameterError(f"n_steps must be at least {MIN_BRUTE_STEPS}")
    if n_out < 1 or n_steps % (2 * n_out):
        raise InvalidParameterError("n_steps must be a multiple of 2 * n_out")
    if not T > 0.0:
        raise InvalidParameterError("T must be positive")
    xs = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(-1)
    zm = _zmap(v)
    p0 = zm.P(xs)
    if lam.params is not None:
        fine = _kernels.rk4_affine_cos(p0, T, n_steps, n_steps // n_out, lam.params, zm.arrays)
        coarse = _kernels.rk4_affine_cos(p0, T, n_steps // 2, n_steps // (2 * n_out), lam.params, zm.arrays)
    else:
        fine = _rk4_generic(lam, zm, p0, T, n_steps, n_steps // n_out)
        coarse = _rk4_generic(lam, zm, p0, T, n_steps // 2, n_steps // (2 * n_out))
    c = fine + (fine - coarse) / 15.0
    ts = np.linspace(0.0, T, n_out + 1)
    f = np.asarray(lam(ts[:, None], zm.Pinv(p0[None, :] + c)), dtype=float) * np.ones_like(c)
    dense = DenseSolution(ts, c, f[:-1], f[1:], 0)
    curve = CaratheodoryCurve((dense,), float(T))
    scalar = np.ndim(x0) == 0
    probe = Trajectory(xs, v, lam, curve, 0.0, 0.0, scalar)
    return Trajectory(xs, v, lam, curve, _residual(probe, n_out), 0.0, scalar)


# ---------------------------------------------------------------------------
# mollification chains


def hat(center: float, half_width: float):
    """Continuous test function ``max(0, 1 - |x - center| / half_width)``."""
    if not half_width > 0.0:
        raise InvalidParameterError("half_width must be positive")

    def g(x):
        return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float) - center) / half_width)

    g.center, g.half_width = float(center), float(half_width)
    return g


def default_hats():
    """Hats on ``[-1, 1]``, ``[-1, 0]`` and ``[-0.1, 0.7]``."""
    return (hat(0.0, 1.0), hat(-0.5, 0.5), hat(0.3, 0.4))


def _check_ladder(ladder) -> np.ndarray:
    ladder = np.asarray(ladder, dtype=float).reshape(-1)
    if ladder.size == 0 or np.any(ladder <= 0.0):
        raise InvalidParameterError("ladder must be positive")
    if np.any(np.diff(ladder) >= 0.0):
        raise InvalidParameterError("ladder must be strictly decreasing")
    return ladder


def mollified_chain(scenario, eps_ladder, tests=None, reference=None, tol: float | None = None) -> ConvergenceStudy:
    """Weak errors of mollified nonlocal runs against the discontinuous run.

    Each rung solves the problem with ``(v_eps, V_eps, q0_eps)`` and records
    ``weak_error`` for every test function. ``reference`` may carry an
    already computed discontinuous solution.
    """
    from .nonlocal_ import PICARD_TOL, fixed_point_solve, weak_error

    ladder = _check_ladder(eps_ladder)
    tests = default_hats() if tests is None else tuple(tests)
    if not tests:
        raise InvalidParameterError("at least one test function is needed")
    tol = PICARD_TOL if tol is None else tol
    ref = fixed_point_solve(scenario, tol=tol) if reference is None else reference

    def rung(eps):
        sol = fixed_point_solve(scenario.mollified(float(eps)), tol=tol)
        return [weak_error(ref, sol, g) for g in tests]

    errs = np.array(_map_rungs(rung, ladder))
    labels = tuple(f"g{j}" for j in range(len(tests)))
    return ConvergenceStudy(ladder, errs, labels, meta={"kind": "pde-weak", "scenario": getattr(scenario, "name", "")})


def ode_mollified_chain(
    v: VelocityFn,
    lam: LipschitzField,
    eps_ladder,
    x0s=None,
    T: float = 1.0,
    n_t: int = 200,
    tol: float = 1e-9,
) -> ConvergenceStudy:
    """``sup |X[v_eps, lam_eps] - X[v, lam]|`` over sampled ``(t, x0)`` per rung.

    The bound per rung is the weak stability estimate at ``T`` with the
    integrated velocity difference majorised by ``4 eps ||v||``: the
    primitive of ``v - v_eps`` from 0 is at most ``2 eps ||v||`` in modulus,
    and the integral over any interval is a difference of two such values.
    """
    ladder = _check_ladder(eps_ladder)
    x0s = np.linspace(-1.0, 1.0, 41) if x0s is None else np.asarray(x0s, dtype=float).reshape(-1)
    ts = np.linspace(0.0, T, n_t + 1)
    ref = solve_trajectory(v, lam, x0s, T, tol, t_eval=ts)(ts)
    vmax = v.upper_bound

    def rung(eps):
        ve, le = mollify(v, float(eps)), mollify_field(lam, float(eps))
        X = solve_trajectory(ve, le, x0s, T, tol, t_eval=ts)(ts)
        err = float(np.max(np.abs(X - ref)))
        # the pieces of stability_bound that survive x0 = x0~, with the
        # lambda gap taken over the hull of all reachable sets at once
        L2 = max(lam.lip_x_bound, le.lip_x_bound)
        e = vmax * math.exp(T * vmax * L2)
        reach = T * vmax * lam.sup_bound
        lam_term = 0.0 if le is lam else e * _sup_lambda_gap(lam, le, T, x0s.min() - reach, x0s.max() + reach)
        vmin = min(v.lower_bound, ve.lower_bound)
        growth = e * T * L2 + 1.0
        return err, lam_term + growth * (ve.upper_bound / vmin**2) * 4.0 * eps * vmax

    res = np.array(_map_rungs(rung, ladder))
    return ConvergenceStudy(ladder, res[:, 0], ("sup_error",), bound=res[:, 1], meta={"kind": "ode-sup"})


# ---------------------------------------------------------------------------
# composition of L1 and uniformly increasing maps


@dataclass(frozen=True)
class CompositionReport:
    """``||f_k o g_k - f o g||_{L1(window)}`` along a ladder with the
    quantitative estimate ``||f_k - f||_{L1(g_k(window))} / C +
    2 |f|_TV ||g_k - g||_inf / C``."""

    errors: np.ndarray
    bounds: np.ndarray
    f_gap: np.ndarray
    g_gap: np.ndarray
    slope_lower: float

    @property
    def within(self) -> bool:
        return bool(np.all(self.errors <= self.bounds * (1.0 + 1e-9) + 1e-14))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.errors) <= 0.0))

    def to_dict(self) -> dict:
        return {
            "errors": self.errors.tolist(),
            "bounds": self.bounds.tolist(),
            "f_gap": self.f_gap.tolist(),
            "g_gap": self.g_gap.tolist(),
            "slope_lower": self.slope_lower,
            "within": self.within,
            "monotone": self.monotone,
        }


def _pcf(f):
    if isinstance(f, VelocityFn):
        return f.base
    return f if isinstance(f, PiecewiseConstantFn) else None


def _breaks(f) -> np.ndarray:
    bp = getattr(f, "breakpoints", None)
    return np.zeros(0) if bp is None else np.asarray(bp, dtype=float)


def _pull_back(g, targets, a, b, n_iter: int = 80):
    """Solve ``g(z) = target`` on ``[a, b]`` for increasing ``g`` by bisection."""
    targets = np.asarray(targets, dtype=float)
    ga, gb = float(np.asarray(g(np.array([a])))[0]), float(np.asarray(g(np.array([b])))[0])
    inside = targets[(targets > ga) & (targets < gb)]
    lo = np.full(inside.shape, a)
    hi = np.full(inside.shape, b)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        right = np.asarray(g(mid), dtype=float) >= inside
        hi = np.where(right, mid, hi)
        lo = np.where(right, lo, mid)
    return 0.5 * (lo + hi)


def _composition_l1(f1, g1, f2, g2, a, b, n_sub: int = 16) -> float:
    cuts = [a, b]
    for f, g in ((f1, g1), (f2, g2)):
        cuts.extend(_pull_back(g, _breaks(f), a, b))
    cuts = np.unique(cuts)
    s = np.linspace(0.0, 1.0, n_sub + 1)
    edges = np.unique((cuts[:-1, None] + np.diff(cuts)[:, None] * s[None, :]).reshape(-1))
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    z = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).reshape(-1)
    d = np.abs(np.asarray(f1(np.asarray(g1(z), dtype=float))) - np.asarray(f2(np.asarray(g2(z), dtype=float))))
    d = d.reshape(mid.size, -1)
    return float(((d * _GL_WEIGHTS).sum(axis=1) * half).sum())


def _f_l1(f, fk, a, b) -> float:
    """``int_a^b |fk - f|`` with cuts at both breakpoint sets."""
    ident = lambda z: z  # noqa: E731
    return _composition_l1(fk, ident, f, ident, a, b)


def _sup_gap(g, gk, a, b, n: int = 4001) -> float:
    z = np.linspace(a, b, n)
    return float(np.max(np.abs(np.asarray(gk(z), dtype=float) - np.asarray(g(z), dtype=float))))


def composition_l1_check(f, g, f_ladder, g_ladder, window, slope_lower: float) -> CompositionReport:
    """L1 distance of compositions on ``window`` along paired ladders.

    Parameters
    ----------
    f : PiecewiseConstantFn or VelocityFn
        Limit of ``f_ladder`` (piecewise constant, so ``|f|_TV`` is exact).
    g : callable
        Increasing limit map; ``g_ladder`` entries are increasing callables.
    slope_lower : float
        Declared uniform lower slope ``C`` of ``g`` and every ladder map.
    """
    from .funcrep import total_variation

    a, b = window
    if not a < b:
        raise InvalidParameterError("window needs a < b")
    if not slope_lower > 0.0:
        raise InvalidParameterError("slope_lower must be positive")
    if len(f_ladder) != len(g_ladder):
        raise InvalidParameterError("ladders must have the same length")
    base = _pcf(f)
    if base is None:
        raise InvalidParameterError("the limit f must be piecewise constant")
    errs, bounds, fg, gg = [], [], [], []
    for fk, gk in zip(f_ladder, g_ladder):
        err = _composition_l1(fk, gk, f, g, a, b)
        ends = np.asarray(gk(np.array([a, b])), dtype=float)
        ends_g = np.asarray(g(np.array([a, b])), dtype=float)
        dg = _sup_gap(g, gk, a, b)
        lo, hi = min(ends[0], ends_g[0]) - dg, max(ends[1], ends_g[1]) + dg
        df = _f_l1(f, fk, float(ends[0]), float(ends[1]))
        tv = total_variation(base, lo, hi) if hi > lo else 0.0
        errs.append(err)
        fg.append(df)
        gg.append(dg)
        bounds.append(df / slope_lower + 2.0 * tv * dg / slope_lower)
    return CompositionReport(np.array(errs), np.array(bounds), np.array(fg), np.array(gg), float(slope_lower))

"""
Nonlocal conservation law ``q_t + (v(x) V(w) q)_x = 0`` with a discontinuous
speed factor ``v`` and nonlocal term ``w(t, x) = int gamma(y - x) q(t, y) dy``.

The solver follows the fixed-point construction: for a given ``w`` the
characteristics ``xi' = v(xi) V(w(t, xi))`` are discontinuous ODEs, solved in
the coordinate ``p = P(xi)`` with ``P' = 1/v`` where ``p' = V(w)`` is
Lipschitz. The density is the push-forward of ``q0`` along them, and ``w`` is
recomputed from that push-forward until it stops changing. Time is split into
restart windows short enough for the map to be a contraction.

Mass is carried by Lagrangian cells between consecutive nodes. Inside a cell
it is spread uniformly in ``p``, so the density there is ``rho_j / v(x)``:
piecewise constant whenever ``v`` is, with the exact jump ratio across every
discontinuity of ``v``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import lambertw

from . import _kernels
from .disc_ode import ZMap
from .rk import IntegrationError
from .funcrep import (
    InvalidParameterError,
    Kernel,
    MollifiedFn,
    PiecewiseConstantFn,
    VelocityFn,
    mollify,
    total_variation,
)

__all__ = [
    "AffineLaw",
    "Scenario",
    "NonlocalTerm",
    "CharacteristicsField",
    "NonlocalSolution",
    "NonContractionError",
    "GridTooCoarseError",
    "AssumptionError",
    "omega_bounds",
    "horizon_estimate",
    "fixed_point_solve",
    "apply_F",
    "reconstruct_density",
    "mass",
    "max_principle_audit",
    "max_principle_bound",
    "weak_error",
    "l1_self_difference",
    "total_variation_at",
    "flow_map",
]

PICARD_TOL = 1e-8
PICARD_MAX_ITER = 50
OMEGA_CONSTANT = 42.0
ODE_RTOL = 1e-9
ODE_ATOL = 1e-10

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class NonContractionError(RuntimeError):
    """Picard iteration did not reach the tolerance; ``history`` holds the
    sup-norm differences of the failing window."""

    def __init__(self, message: str, history, t_window):
        super().__init__(message)
        self.history = list(history)
        self.t_window = tuple(t_window)


class GridTooCoarseError(RuntimeError):
    """Characteristics lost their ordering (Lagrangian cells collapsed)."""


class AssumptionError(InvalidParameterError):
    """A hypothesis of the requested maximum principle is not satisfied."""


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class AffineLaw:
    """Velocity law ``V(u) = a + b u``; ``b = 0`` gives a constant law."""

    a: float = 1.0
    b: float = 0.0

    @classmethod
    def constant(cls, c: float) -> "AffineLaw":
        return cls(float(c), 0.0)

    @classmethod
    def from_dict(cls, data: dict) -> "AffineLaw":
        kind = data.get("kind", "affine")
        if kind == "constant":
            return cls.constant(data["c"])
        if kind == "affine":
            return cls(float(data["a"]), float(data["b"]))
        raise InvalidParameterError(f"unknown velocity law kind {kind!r}")

    def to_dict(self) -> dict:
        if self.b == 0.0:
            return {"kind": "constant", "c": self.a}
        return {"kind": "affine", "a": self.a, "b": self.b}

    def __call__(self, u):
        return self.a + self.b * np.asarray(u, dtype=float)

    @property
    def lip(self) -> float:
        """``||V'||`` on any interval."""
        return abs(self.b)

    @property
    def sup_derivative(self) -> float:
        return self.b

    def sup_abs(self, lo: float, hi: float) -> float:
        return float(max(abs(self.a + self.b * lo), abs(self.a + self.b * hi)))


def _density_support(q0) -> tuple[float, float]:
    base = q0.base if isinstance(q0, MollifiedFn) else q0
    s = base.simplified()
    if s.values[0] != 0.0 or s.values[-1] != 0.0:
        raise InvalidParameterError("initial datum must have compact support")
    if s.breakpoints.size == 0:
        return (0.0, 0.0)
    lo, hi = float(s.breakpoints[0]), float(s.breakpoints[-1])
    if isinstance(q0, MollifiedFn):
        lo, hi = lo - q0.eps, hi + q0.eps
    return lo, hi


def _l1_norm(q0) -> float:
    base = q0.base if isinstance(q0, MollifiedFn) else q0
    lo, hi = _density_support(q0)
    if hi <= lo:
        return 0.0
    s = base.simplified()
    return float(np.sum(np.abs(s.values[1:-1]) * np.diff(s.breakpoints)))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Input data of one nonlocal problem.

    Parameters
    ----------
    q0 : PiecewiseConstantFn or MollifiedFn
        Initial density with compact support.
    gamma : Kernel
        Look-ahead weight supported in ``[0, A]``.
    V : AffineLaw
    v : VelocityFn or MollifiedFn
        Discontinuous speed factor, bounded below by a positive constant.
    T : float
    window : (float, float)
        Spatial computational window; the support of ``q0`` must stay clear of
        its edges by ``T ||v|| L`` with ``L`` the largest ``|V|`` that the
        nonlocal term can produce.
    ny, nt : int
        Lagrangian cells and stored time levels.
    nx : int, optional
        Points of the Eulerian grid for ``w``; defaults to ``ny + 1``.
    """

    q0: object
    gamma: Kernel
    V: AffineLaw
    v: object
    T: float
    window: tuple
    ny: int = 2000
    nt: int = 400
    nx: int | None = None
    name: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise InvalidParameterError("final time T must be positive")
        lo, hi = (float(w) for w in self.window)
        if not hi > lo:
            raise InvalidParameterError("window must satisfy x_min < x_max")
        object.__setattr__(self, "window", (lo, hi))
        if int(self.ny) < 1 or int(self.nt) < 1:
            raise InvalidParameterError("ny and nt must be positive")
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "nt", int(self.nt))
        nx = self.ny + 1 if self.nx is None else int(self.nx)
        if nx < 2:
            raise InvalidParameterError("nx must be at least 2")
        object.__setattr__(self, "nx", nx)
        a, b = self.support
        if b > a:
            need = self.margin
            if a - lo < need or hi - b < need:
                raise InvalidParameterError(
                    f"support [{a}, {b}] of q0 is closer than T*||v||*L = {need:g} to the window edge"
                )

    # derived quantities ---------------------------------------------------

    @property
    def support(self) -> tuple[float, float]:
        return _density_support(self.q0)

    @property
    def q0_sup(self) -> float:
        base = self.q0.base if isinstance(self.q0, MollifiedFn) else self.q0
        return base.sup_abs

    @property
    def q0_l1(self) -> float:
        return _l1_norm(self.q0)

    @property
    def v_max(self) -> float:
        return float(self.v.upper_bound)

    @property
    def v_min(self) -> float:
        return float(self.v.lower_bound)

    @property
    def w_range(self) -> tuple[float, float]:
        """Interval that contains every value of ``w``."""
        r = self.gamma.sup * self.q0_l1
        base = self.q0.base if isinstance(self.q0, MollifiedFn) else self.q0
        return (0.0 if base.inf >= 0.0 else -r, r)

    @property
    def speed_bound(self) -> float:
        """``L = sup |V|`` over the attainable range of ``w``."""
        return self.V.sup_abs(*self.w_range)

    @property
    def margin(self) -> float:
        return self.T * self.v_max * self.speed_bound

    @property
    def zmap(self) -> ZMap:
        return self.v.zmap

    @property
    def levels(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def xgrid(self) -> np.ndarray:
        return np.linspace(self.window[0], self.window[1], self.nx)

    def with_grid(self, ny: int | None = None, nt: int | None = None, nx: int | None = None) -> "Scenario":
        """Copy with other grid sizes; ``nx`` falls back to ``ny + 1``."""
        return replace(self, ny=self.ny if ny is None else ny, nt=self.nt if nt is None else nt, nx=nx)

    def mollified(self, eps: float) -> "Scenario":
        """Same problem with ``v`` and ``q0`` replaced by their hat mollifications
        (an affine ``V`` is left unchanged by mollification)."""
        v = self.v.base if isinstance(self.v, MollifiedFn) else self.v
        q0 = self.q0.base if isinstance(self.q0, MollifiedFn) else self.q0
        v_eps = MollifiedFn(v.base if isinstance(v, VelocityFn) else v, eps, self.v_min)
        return replace(self, v=v_eps, q0=mollify(q0, eps), name=f"{self.name}-eps{eps:g}" if self.name else "")

    # io -------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        grid = data.get("grid", {})
        return cls(
            q0=PiecewiseConstantFn.from_dict(data["q0"]),
            gamma=Kernel.from_dict(data["gamma"]),
            V=AffineLaw.from_dict(data["V"]),
            v=VelocityFn.from_dict(data["v"]),
            T=float(data["T"]),
            window=tuple(data["window"]),
            ny=int(grid.get("ny", 2000)),
            nt=int(grid.get("nt", 400)),
            nx=grid.get("nx"),
            name=data.get("name", ""),
        )

    @classmethod
    def from_json(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        if isinstance(self.q0, MollifiedFn) or isinstance(self.v, MollifiedFn):
            raise InvalidParameterError("mollified scenarios have no JSON form")
        grid = {"ny": self.ny, "nt": self.nt}
        if self.nx != self.ny + 1:
            grid["nx"] = self.nx
        out = {
            "q0": self.q0.to_dict(),
            "gamma": self.gamma.to_dict(),
            "V": self.V.to_dict(),
            "v": self.v.to_dict(),
            "T": self.T,
            "window": list(self.window),
            "grid": grid,
        }
        if self.name:
            out["name"] = self.name
        return out


# ---------------------------------------------------------------------------
# constants of the fixed-point space


def omega_bounds(scenario: Scenario, q_sup: float | None = None) -> tuple[float, float]:
    """``(M, M')``: bounds on ``|w|`` and its spatial Lipschitz constant."""
    q_sup = scenario.q0_sup if q_sup is None else float(q_sup)
    ratio = scenario.v_max / scenario.v_min
    M = OMEGA_CONSTANT * scenario.gamma.l1_norm * q_sup * ratio
    Mp = OMEGA_CONSTANT * scenario.gamma.tv_seminorm * q_sup * ratio
    return M, Mp


def horizon_estimate(scenario: Scenario, q_sup: float | None = None) -> float:
    """Longest window on which the fixed-point map is a self-map and a
    contraction with factor at most 1/2.

    With ``K = ||v|| ||V'|| M'`` the self-map condition is ``e^{KT} <= 42``
    and the contraction condition ``K T e^{KT} <= 1/2``, whose boundary is
    ``KT = W(1/2)``. Returns ``inf`` when ``K = 0``.
    """
    _, Mp = omega_bounds(scenario, q_sup)
    K = scenario.v_max * scenario.V.lip * Mp
    if K == 0.0:
        return math.inf
    return min(math.log(OMEGA_CONSTANT), float(lambertw(0.5).real)) / K


# ---------------------------------------------------------------------------
# solution objects


@dataclass(frozen=True, eq=False)
class NonlocalTerm:
    """``w`` sampled on a uniform spatial grid at a set of time levels;
    bilinear in between and zero outside the grid."""

    levels: np.ndarray
    x: np.ndarray
    values: np.ndarray
    M: float
    M_prime: float

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def __call__(self, t, x):
        return _kernels.field_eval(t, x, self.levels, self.values, float(self.x[0]), self.dx)

    @property
    def slope_max(self) -> float:
        return float(np.abs(np.diff(self.values, axis=1)).max() / self.dx) if self.values.size else 0.0

    @property
    def within_bounds(self) -> bool:
        tiny = 1e-12 * max(self.M, 1.0)
        return bool(np.all(np.abs(self.values) <= self.M + tiny) and self.slope_max <= self.M_prime * (1 + 1e-12) + tiny)


@dataclass(frozen=True, eq=False)
class CharacteristicsField:
    """Lagrangian nodes and their positions at every stored level.

    Attributes
    ----------
    y : ndarray
        Node positions at ``t = 0``.
    p : ndarray, shape (n_levels, n_nodes)
        Node positions in the coordinate ``P``.
    masses : ndarray
        Mass of each cell between consecutive nodes.
    """

    levels: np.ndarray
    y: np.ndarray
    p: np.ndarray
    masses: np.ndarray
    zmap: ZMap

    @property
    def positions(self) -> np.ndarray:
        return self.zmap.Pinv(self.p)

    @property
    def cum(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.masses)))

    @property
    def rho(self) -> np.ndarray:
        """Mass per unit ``p`` in each cell, ``(n_levels, n_cells)``."""
        return self.masses / np.diff(self.p, axis=1)

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.p, axis=1) > 0.0))

    def ratios(self) -> np.ndarray:
        """Difference quotients ``(xi_{j+1} - xi_j) / (y_{j+1} - y_j)``."""
        return np.diff(self.positions, axis=1) / np.diff(self.y)


@dataclass(frozen=True, eq=False)
class NonlocalSolution:
    """Converged solution with its audit trail.

    Attributes
    ----------
    w : NonlocalTerm
        Nonlocal term at the stored levels.
    chars : CharacteristicsField
    edges : ndarray
        Eulerian cell edges (uniform grid with the jumps of ``v`` inserted).
    density : ndarray, shape (n_levels, n_cells)
        Eulerian cell averages of ``q``.
    history : list of ndarray
        Picard sup-norm differences, one array per restart window.
    windows : ndarray, shape (n_windows, 2)
        Start and end time of every restart window.
    """

    scenario: Scenario
    w: NonlocalTerm
    chars: CharacteristicsField
    edges: np.ndarray
    density: np.ndarray
    history: list
    windows: np.ndarray
    mass_lagrangian: np.ndarray
    mass_eulerian: np.ndarray
    sup: np.ndarray
    tv: np.ndarray

    @property
    def levels(self) -> np.ndarray:
        return self.w.levels

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([h.size for h in self.history])

    def contraction_ratios(self) -> list[np.ndarray]:
        """Ratios of successive Picard differences in each window."""
        out = []
        for h in self.history:
            out.append(h[1:] / h[:-1] if h.size > 1 else np.zeros(0))
        return out

    def level_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.levels - t)))
        if abs(self.levels[k] - t) > 1e-12 * max(1.0, self.scenario.T):
            raise InvalidParameterError(f"t={t} is not a stored level")
        return k

    def density_fn(self, t: float) -> PiecewiseConstantFn:
        """Exact density at a stored level as a piecewise-constant function."""
        return _density_pcf(self.scenario, self.chars.p[self.level_index(t)], self.chars.masses)

    def one_sided(self, t: float, x: float) -> tuple[float, float]:
        """Left and right limits of the Lagrangian density at ``x``."""
        k = self.level_index(t)
        p_nodes = self.chars.p[k]
        zm = self.scenario.zmap
        px = float(zm.P(np.array([x]))[0])
        j = int(np.searchsorted(p_nodes, px, side="right")) - 1
        rho = np.concatenate(([0.0], self.chars.masses / np.diff(p_nodes), [0.0]))
        jl = int(np.searchsorted(p_nodes, px, side="left")) - 1
        v = self.scenario.v
        left = rho[jl + 1] / float(_left_value(v, x))
        right = rho[j + 1] / float(np.asarray(v(np.array([x])))[0])
        return left, right

    def eulerian_one_sided(self, t: float, x: float) -> tuple[float, float]:
        """Averages over the Eulerian cells adjacent to the edge ``x``."""
        i = int(np.argmin(np.abs(self.edges - x)))
        if abs(self.edges[i] - x) > 1e-12 * max(1.0, abs(x)):
            raise InvalidParameterError(f"x={x} is not an Eulerian edge")
        row = self.density[self.level_index(t)]
        return float(row[i - 1]), float(row[i])


def _left_value(v, x):
    if hasattr(v, "left_limit"):
        return v.left_limit(np.array([x]))[0]
    return v(np.array([x]))[0]


# ---------------------------------------------------------------------------
# Lagrangian discretisation


def _initial_nodes(scenario: Scenario):
    """Nodes uniform in ``p`` on each piece of ``q0`` and exact cell masses."""
    q0, zm = scenario.q0, scenario.zmap
    a, b = scenario.support
    if not b > a:
        return np.zeros(0), np.zeros(0)
    # cells never straddle a jump of q0 or of v, so the initial density is exact
    cuts = np.concatenate((np.asarray(q0.breakpoints, float), np.asarray(scenario.v.breakpoints, float)))
    cuts = np.unique(np.concatenate(([a, b], cuts[(cuts > a) & (cuts < b)])))
    pc = zm.P(cuts)
    share = np.diff(pc) / (pc[-1] - pc[0])
    counts = np.maximum(1, np.round(share * scenario.ny).astype(int))
    p = np.concatenate([pc[:1]] + [np.linspace(pc[i], pc[i + 1], n + 1)[1:] for i, n in enumerate(counts)])
    idx = np.concatenate(([0], np.cumsum(counts)))
    p[idx] = pc
    y = zm.Pinv(p)
    y[idx] = cuts
    if isinstance(q0, PiecewiseConstantFn):
        m = np.diff(y) * q0(0.5 * (y[1:] + y[:-1]))
    else:
        m = np.diff(q0.primitive(y, a))
    base = q0.base if isinstance(q0, MollifiedFn) else q0
    if base.inf >= 0.0:
        m = np.maximum(m, 0.0)
    return p, m


def _w_row(scenario: Scenario, p_nodes, cum, edges_g, heights, xg):
    """``w`` on the grid for masses ``cum`` carried by nodes ``p_nodes``."""
    out = np.zeros(xg.size)
    if p_nodes.size < 2 or heights.size == 0:
        return out
    zm = scenario.zmap
    x_lo, x_hi = zm.Pinv(np.array([p_nodes[0], p_nodes[-1]]))
    dx = xg[1] - xg[0]
    i0 = max(0, int(math.floor((x_lo - edges_g[-1] - xg[0]) / dx)))
    i1 = min(xg.size, int(math.ceil((x_hi - edges_g[0] - xg[0]) / dx)) + 1)
    if i1 > i0:
        out[i0:i1] = _kernels.nonlocal_eval(xg[i0:i1], p_nodes, cum, edges_g, heights, zm.arrays)
    return out


def _cell_sup(scenario: Scenario, p_nodes, masses) -> float:
    """``sup q`` for the cells carried by ``p_nodes`` (exact for piecewise
    constant ``v``, cell-endpoint evaluation for smooth ``v``)."""
    if masses.size == 0:
        return 0.0
    rho = masses / np.diff(p_nodes)
    v = scenario.v
    x = scenario.zmap.Pinv(p_nodes)
    vmin = np.minimum(v(x[:-1]), v(x[1:]))
    if not getattr(v, "smooth", False):
        vmin = np.minimum(vmin, _left_value_vec(v, x[1:]))
        bp = np.asarray(v.breakpoints)
        bp = bp[(bp > x[0]) & (bp < x[-1])]
        if bp.size:
            j = np.searchsorted(x, bp, side="right") - 1
            np.minimum.at(vmin, j, np.minimum(v(bp), _left_value_vec(v, bp)))
    return float(np.max(np.abs(rho) / vmin))


def _left_value_vec(v, x):
    return v.left_limit(x) if hasattr(v, "left_limit") else v(x)


def _density_pcf(scenario: Scenario, p_nodes, masses) -> PiecewiseConstantFn:
    v = scenario.v
    if getattr(v, "smooth", False):
        raise InvalidParameterError("density is piecewise constant only for piecewise-constant v")
    if masses.size == 0:
        return PiecewiseConstantFn.constant(0.0)
    x = scenario.zmap.Pinv(p_nodes)
    bp = np.asarray(v.breakpoints)
    pts = np.unique(np.concatenate((x, bp[(bp > x[0]) & (bp < x[-1])])))
    mid = 0.5 * (pts[1:] + pts[:-1])
    j = np.clip(np.searchsorted(x, mid, side="right") - 1, 0, masses.size - 1)
    rho = masses / np.diff(p_nodes)
    vals = rho[j] / v(mid)
    return PiecewiseConstantFn(pts, np.concatenate(([0.0], vals, [0.0])))


def _eulerian_edges(scenario: Scenario) -> np.ndarray:
    lo, hi = scenario.window
    e = np.linspace(lo, hi, scenario.nx)
    bp = np.asarray(scenario.v.breakpoints, dtype=float)
    e = np.unique(np.concatenate((e, bp[(bp > lo) & (bp < hi)])))
    # drop slivers created by inserted points that nearly coincide with grid points
    keep = np.concatenate(([True], np.diff(e) > 1e-12 * (hi - lo)))
    return e[keep]


def reconstruct_density(chars: CharacteristicsField, scenario: Scenario, k: int, edges=None) -> np.ndarray:
    """Eulerian cell averages of ``q`` at level ``k``.

    The averages are differences of the exact cumulative mass, so they are
    monotone-consistent with the Lagrangian cells and keep one-sided values
    sharp at every inserted jump of ``v``.
    """
    edges = _eulerian_edges(scenario) if edges is None else np.asarray(edges, dtype=float)
    if chars.masses.size == 0:
        return np.zeros(edges.size - 1)
    Q = _kernels.mass_cdf(edges, chars.p[k], chars.cum, scenario.zmap.arrays)
    return np.diff(Q) / np.diff(edges)


def mass(sol: NonlocalSolution, t: float) -> tuple[float, float]:
    """``(Lagrangian, Eulerian)`` mass at a stored level."""
    k = sol.level_index(t)
    return float(sol.mass_lagrangian[k]), float(sol.mass_eulerian[k])


# ---------------------------------------------------------------------------
# fixed point


def _window_picard(scenario, p_start, cum, t0, t1, kernel, xg, tol, max_iter):
    """Picard iteration on one restart window; returns end nodes and the
    history of sup differences of ``w`` at the window end."""
    V, zm = scenario.V, scenario.zmap
    p_end, hist, status = _kernels.picard_window(
        p_start, t0, t1, cum, kernel[0], kernel[1], xg, zm.arrays, V.a, V.b, ODE_RTOL, ODE_ATOL, tol, max_iter
    )
    span = f"[{t0:.6g}, {t1:.6g}]"
    if status == 1:
        raise IntegrationError(f"step size underflow on {span}")
    if status == 2:
        raise NonContractionError(f"Picard iteration did not reach {tol:g} in {max_iter} iterations on {span}", hist, (t0, t1))
    if status == 3:
        raise GridTooCoarseError(f"characteristics crossed on {span}; refine ny or shorten the windows")
    return p_end, np.asarray(hist, dtype=float)


def fixed_point_solve(scenario: Scenario, tol: float = PICARD_TOL, max_iter: int = PICARD_MAX_ITER) -> NonlocalSolution:
    """Solve the nonlocal problem by windowed Picard iteration on ``w``.

    Every stored level interval is split into restart windows no longer than
    :func:`horizon_estimate`, evaluated with the current ``sup q``. On a
    window ``[t0, t1]`` the iterate is ``w`` at ``t1``, represented by the node
    positions that generate it, and ``w`` is linear in time in between. The
    first guess comes from an explicit Euler step; the first iteration
    chooses the integration steps adaptively and later iterations replay them,
    so successive iterates differ only through ``w``. Differences are measured
    in the sup norm on the Eulerian grid.

    Raises
    ------
    NonContractionError
        ``max_iter`` exceeded on a window.
    GridTooCoarseError
        Neighbouring characteristics crossed.
    """
    if not tol > 0.0:
        raise InvalidParameterError("tol must be positive")
    levels, xg = scenario.levels, scenario.xgrid
    zm = scenario.zmap
    p, masses = _initial_nodes(scenario)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    kernel = scenario.gamma.pieces()
    n_lev = levels.size

    P_hist = np.empty((n_lev, p.size))
    W = np.empty((n_lev, xg.size))
    P_hist[0] = p
    W[0] = _w_row(scenario, p, cum, *kernel, xg)
    history, windows = [], []
    M_used, Mp_used = omega_bounds(scenario)
    for k in range(n_lev - 1):
        t, t_end = levels[k], levels[k + 1]
        while t < t_end:
            q_sup = _cell_sup(scenario, p, masses)
            t_star = horizon_estimate(scenario, q_sup)
            M, Mp = omega_bounds(scenario, q_sup)
            M_used, Mp_used = max(M_used, M), max(Mp_used, Mp)
            remaining = t_end - t
            n_sub = 1 if t_star >= remaining else math.ceil(remaining / t_star)
            t_next = t_end if n_sub == 1 else t + remaining / n_sub
            if p.size:
                p, hist = _window_picard(scenario, p, cum, t, t_next, kernel, xg, tol, max_iter)
            else:
                hist = np.zeros(1)
            history.append(hist)
            windows.append((t, t_next))
            t = t_next
        P_hist[k + 1] = p
        W[k + 1] = _w_row(scenario, p, cum, *kernel, xg)

    w = NonlocalTerm(levels, xg, W, M_used, Mp_used)
    y = zm.Pinv(P_hist[0]) if p.size else np.zeros(0)
    chars = CharacteristicsField(levels, y, P_hist, masses, zm)
    return _assemble(scenario, w, chars, history, np.array(windows).reshape(-1, 2))


def _assemble(scenario, w, chars, history, windows) -> NonlocalSolution:
    edges = _eulerian_edges(scenario)
    n_lev = w.levels.size
    dens = np.empty((n_lev, edges.size - 1))
    sup = np.empty(n_lev)
    tv = np.empty(n_lev)
    total = math.fsum(chars.masses)
    m_lag = np.full(n_lev, total)
    m_eul = np.empty(n_lev)
    widths = np.diff(edges)
    smooth = getattr(scenario.v, "smooth", False)
    for k in range(n_lev):
        dens[k] = reconstruct_density(chars, scenario, k, edges)
        m_eul[k] = math.fsum(dens[k] * widths)
        if chars.masses.size == 0:
            sup[k] = tv[k] = 0.0
        elif smooth:
            sup[k] = _cell_sup(scenario, chars.p[k], chars.masses)
            tv[k] = float(np.abs(np.diff(np.concatenate(([0.0], dens[k], [0.0])))).sum())
        else:
            f = _density_pcf(scenario, chars.p[k], chars.masses)
            sup[k] = f.sup_abs
            tv[k] = float(np.abs(f.jumps).sum())
    return NonlocalSolution(scenario, w, chars, edges, dens, history, windows, m_lag, m_eul, sup, tv)


def apply_F(w: NonlocalTerm, scenario: Scenario) -> NonlocalTerm:
    """One application of the fixed-point map on all of ``w.levels``.

    Characteristics from all Lagrangian nodes are integrated under
    ``lambda = V(w)``, and the new ``w`` is the exact convolution of the
    kernel with the pushed-forward density at each level.
    """
    p, masses = _initial_nodes(scenario)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    kernel = scenario.gamma.pieces()
    out = np.zeros((w.levels.size, w.x.size))
    if p.size:
        V = scenario.V
        pos, _, _ = _kernels.advance(
            p, w.levels, w.values, float(w.x[0]), w.dx, scenario.zmap.arrays, V.a, V.b, ODE_RTOL, ODE_ATOL
        )
        if not np.all(np.diff(pos, axis=1) > 0.0):
            raise GridTooCoarseError("characteristics crossed; refine ny")
        for k in range(w.levels.size):
            out[k] = _w_row(scenario, pos[k], cum, *kernel, w.x)
    M, Mp = omega_bounds(scenario)
    return NonlocalTerm(w.levels, w.x, out, M, Mp)


# ---------------------------------------------------------------------------
# characteristics through arbitrary points


def flow_map(sol: NonlocalSolution, t: float, x, tau: float, tol: float = 1e-12) -> np.ndarray:
    """``xi(t, x; tau)``: position at time ``tau`` of the characteristic
    through ``x`` at time ``t``.

    The nonlocal term is the exact one of the stored node positions, linear
    in time between stored levels.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == tau:
        return x.copy()
    sc, zm, V = sol.scenario, sol.scenario.zmap, sol.scenario.V
    lv = sol.levels
    if not (lv[0] - 1e-14 <= min(t, tau) and max(t, tau) <= lv[-1] + 1e-14):
        raise InvalidParameterError("t and tau must lie in [0, T]")
    lo, hi = min(t, tau), max(t, tau)
    stops = np.concatenate(([lo], lv[(lv > lo) & (lv < hi)], [hi]))
    cum, (edges, heights) = sol.chars.cum, sc.gamma.pieces()
    p0 = zm.P(x)
    order = np.argsort(p0)
    if tau > t:
        pos, _, _ = _kernels.advance_lagr(p0[order], stops, lv, sol.chars.p, cum, edges, heights, zm.arrays, V.a, V.b, tol, tol)
    else:
        # time reversal s = -t runs forward with the field mirrored in time
        pos, _, _ = _kernels.advance_lagr(
            p0[order], -stops[::-1], -lv[::-1], sol.chars.p[::-1], cum, edges, heights, zm.arrays, -V.a, -V.b, tol, tol
        )
    out = np.empty_like(p0)
    out[order] = pos[-1]
    return zm.Pinv(out)


# ---------------------------------------------------------------------------
# audits


_CASES = ("increasing", "negative", "exponential")


def _audit_assumptions(sc: Scenario, case: str) -> list[str]:
    unmet = []
    base_q = sc.q0.base if isinstance(sc.q0, MollifiedFn) else sc.q0
    if sc.V.sup_derivative > 0.0:
        unmet.append("V' <= 0")
    if not sc.gamma.monotone_decreasing:
        unmet.append("gamma monotonically decreasing on (0, inf)")
    if base_q.inf < 0.0:
        unmet.append("q0 >= 0")
    if case == "increasing":
        vb = sc.v.base if hasattr(sc.v, "base") else sc.v
        vb = vb.base if hasattr(vb, "base") else vb
        if np.any(np.diff(vb.values) < 0.0):
            unmet.append("v monotonically increasing")
    else:
        if sc.gamma.tv_positive > 0.0:
            unmet.append("gamma in W^{1,inf}((0, inf))")
        if case == "negative" and not sc.V.sup_derivative < 0.0:
            unmet.append("ess sup V' < 0 on X(q0, gamma)")
        if case == "exponential" and sc.V.sup_derivative != 0.0:
            unmet.append("ess sup V' = 0 on X(q0, gamma)")
    return unmet


def _vq0_sup(sc: Scenario) -> float:
    q = sc.q0.base if isinstance(sc.q0, MollifiedFn) else sc.q0
    v = sc.v.base if isinstance(sc.v, MollifiedFn) else sc.v
    v = v.base if isinstance(v, VelocityFn) else v
    prod = q.combine(v, np.multiply)
    return prod.sup_abs


def max_principle_bound(sc: Scenario, case: str, t) -> np.ndarray:
    """Evaluated upper bound of the requested maximum principle at times ``t``."""
    t = np.asarray(t, dtype=float)
    if case == "increasing":
        return np.full(t.shape, sc.q0_sup)
    base = _vq0_sup(sc) / sc.v_min
    if case == "negative":
        second = (sc.v_max / sc.v_min) * (sc.V.lip / -sc.V.sup_derivative) * sc.q0_l1 if sc.V.sup_derivative < 0 else math.inf
        return np.full(t.shape, max(base, second))
    if case == "exponential":
        return base * np.exp(t * sc.v_max * sc.V.lip * sc.gamma.value_at_zero * sc.q0_l1)
    raise InvalidParameterError(f"unknown case {case!r}; expected one of {_CASES}")


def max_principle_audit(sol: NonlocalSolution, case: str, strict: bool = True, slack: float = 1e-3) -> dict:
    """Compare ``sup q(t, .)`` with the bound of one maximum principle case.

    Parameters
    ----------
    case : {"increasing", "negative", "exponential"}
        Monotonically increasing ``v``; ``V'`` strictly negative; ``sup V' = 0``.
    strict : bool
        Raise :class:`AssumptionError` when a hypothesis of the case fails.
        Otherwise the failed clauses are listed in the report and the bound
        is still evaluated.
    """
    if case not in _CASES:
        raise InvalidParameterError(f"unknown case {case!r}; expected one of {_CASES}")
    sc = sol.scenario
    unmet = _audit_assumptions(sc, case)
    if strict and unmet:
        raise AssumptionError(f"maximum principle case {case!r} needs: {'; '.join(unmet)}")
    bound = max_principle_bound(sc, case, sol.levels)
    observed = sol.sup
    margin = bound - observed
    k = int(np.argmin(margin))
    return {
        "case": case,
        "bound": float(bound.max()),
        "observed": float(observed.max()),
        "margin": float(margin[k]),
        "worst_t": float(sol.levels[k]),
        "slack": slack,
        "passed": bool(np.all(observed <= bound + slack)),
        "unmet_assumptions": unmet,
    }


def _lagrangian_moments(sol: NonlocalSolution, g) -> np.ndarray:
    """``int q(t_k, x) g(x) dx`` at every level via ``sum_j rho_j int g(P^{-1}(p)) dp``."""
    ch, zm = sol.chars, sol.scenario.zmap
    out = np.zeros(sol.levels.size)
    if ch.masses.size == 0:
        return out
    for k in range(sol.levels.size):
        p = ch.p[k]
        half = 0.5 * np.diff(p)
        mid = 0.5 * (p[1:] + p[:-1])
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = np.asarray(g(zm.Pinv(nodes)), dtype=float)
        out[k] = float(np.sum(ch.masses * (vals @ _GL_WEIGHTS) * 0.5))
    return out


def weak_error(sol_a: NonlocalSolution, sol_b: NonlocalSolution, g) -> float:
    """``max_k |int (q_a - q_b)(t_k, .) g|`` over the common stored levels."""
    la, lb = sol_a.levels, sol_b.levels
    if la.shape != lb.shape or not np.allclose(la, lb, rtol=0, atol=1e-12):
        raise InvalidParameterError("weak_error needs both solutions on the same time levels")
    return float(np.max(np.abs(_lagrangian_moments(sol_a, g) - _lagrangian_moments(sol_b, g))))


def l1_self_difference(sol_a: NonlocalSolution, sol_b: NonlocalSolution, t: float) -> float:
    """``||q_a(t) - q_b(t)||_1`` between exact densities (piecewise-constant ``v``)."""
    from .funcrep import l1_distance

    fa, fb = sol_a.density_fn(t), sol_b.density_fn(t)
    lo, hi = sol_a.scenario.window
    return l1_distance(fa, fb, lo, hi)


def total_variation_at(sol: NonlocalSolution, t: float) -> float:
    f = sol.density_fn(t)
    lo, hi = sol.scenario.window
    return total_variation(f, lo, hi)

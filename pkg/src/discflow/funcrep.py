"""
Piecewise-constant BV functions, their hat mollifications and Lipschitz fields.

Everything here is an immutable value. Integrals, total variation and
mollified values of piecewise-constant data are computed in closed form, so
downstream solvers never pay a sampling error for the discontinuous data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "InvalidParameterError",
    "PiecewiseConstantFn",
    "VelocityFn",
    "MollifiedFn",
    "LipschitzField",
    "Kernel",
    "integrate",
    "total_variation",
    "l1_distance",
    "mollify",
    "mollify_field",
    "primitive_gap",
    "sgn_sin_velocity",
]


class InvalidParameterError(ValueError):
    """Raised when an input violates a documented precondition."""


def _as_readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """Right-continuous piecewise-constant function with finitely many jumps.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing jump locations ``b_0 < ... < b_{n-1}``.
    values : sequence of float
        ``n + 1`` finite values; ``values[0]`` on ``(-inf, b_0)``,
        ``values[i]`` on ``[b_{i-1}, b_i)`` and ``values[n]`` on
        ``[b_{n-1}, inf)``.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = _as_readonly(self.breakpoints)
        vals = _as_readonly(self.values)
        if vals.size != bp.size + 1:
            raise InvalidParameterError(
                f"need len(values) == len(breakpoints) + 1, got {vals.size} and {bp.size}"
            )
        if not np.all(np.isfinite(bp)) or not np.all(np.isfinite(vals)):
            raise InvalidParameterError("breakpoints and values must be finite")
        if bp.size > 1 and np.any(np.diff(bp) <= 0.0):
            raise InvalidParameterError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    # constructors -----------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "PiecewiseConstantFn":
        return cls([], [c])

    @classmethod
    def step(cls, at: float, left: float, right: float) -> "PiecewiseConstantFn":
        return cls([at], [left, right])

    @classmethod
    def indicator(cls, a: float, b: float, height: float = 1.0) -> "PiecewiseConstantFn":
        """``height`` times the indicator of ``[a, b)``."""
        if not b > a:
            raise InvalidParameterError("indicator needs a < b")
        return cls([a, b], [0.0, height, 0.0])

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseConstantFn":
        return cls(data["breakpoints"], data["values"])

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    # evaluation -------------------------------------------------------------

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right")
        return self.values[idx]

    def left_limit(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="left")
        return self.values[idx]

    @property
    def jumps(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def inf(self) -> float:
        return float(self.values.min())

    @property
    def sup_abs(self) -> float:
        return float(np.abs(self.values).max())

    @cached_property
    def _cumulative(self) -> np.ndarray:
        # primitive anchored at 0, evaluated at every breakpoint
        bp, vals = self.breakpoints, self.values
        if bp.size == 0:
            return np.zeros(0)
        widths = np.diff(bp)
        acc = np.concatenate(([0.0], np.cumsum(vals[1:-1] * widths)))
        # shift so that the primitive vanishes at 0
        k = np.searchsorted(bp, 0.0, side="right") - 1
        if k < 0:
            at0 = vals[0] * (0.0 - bp[0])
        else:
            at0 = acc[k] + vals[k + 1] * (0.0 - bp[k])
        return acc - at0

    def primitive(self, x, anchor: float = 0.0):
        """Exact ``int_anchor^x f``."""
        return self._primitive0(x) - self._primitive0(anchor)

    def _primitive0(self, x):
        x = np.asarray(x, dtype=float)
        bp, vals = self.breakpoints, self.values
        if bp.size == 0:
            return vals[0] * x
        k = np.searchsorted(bp, x, side="right") - 1
        kc = np.clip(k, 0, bp.size - 1)
        inside = self._cumulative[kc] + vals[kc + 1] * (x - bp[kc])
        left = self._cumulative[0] + vals[0] * (x - bp[0])
        return np.where(k < 0, left, inside)

    def restrict_min(self, a: float, b: float) -> float:
        """Minimum value taken on ``[a, b]``."""
        i = np.searchsorted(self.breakpoints, a, side="right")
        j = np.searchsorted(self.breakpoints, b, side="right")
        return float(self.values[i : j + 1].min())

    def restrict_max(self, a: float, b: float) -> float:
        i = np.searchsorted(self.breakpoints, a, side="right")
        j = np.searchsorted(self.breakpoints, b, side="right")
        return float(self.values[i : j + 1].max())

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "PiecewiseConstantFn":
        return PiecewiseConstantFn(self.breakpoints, func(self.values))

    def combine(self, other: "PiecewiseConstantFn", op) -> "PiecewiseConstantFn":
        """Pointwise ``op(self, other)`` on the merged breakpoint set."""
        bp = np.union1d(self.breakpoints, other.breakpoints)
        if bp.size == 0:
            return PiecewiseConstantFn([], [op(self.values[0], other.values[0])])
        probe = np.concatenate(([bp[0] - 1.0], bp))
        return PiecewiseConstantFn(bp, op(self(probe), other(probe)))

    def simplified(self) -> "PiecewiseConstantFn":
        """Drop breakpoints that carry no jump."""
        keep = self.jumps != 0.0
        vals = np.concatenate((self.values[:1], self.values[1:][keep]))
        return PiecewiseConstantFn(self.breakpoints[keep], vals)


@dataclass(frozen=True, eq=False)
class VelocityFn:
    """Piecewise-constant velocity bounded below by a positive constant.

    Parameters
    ----------
    base : PiecewiseConstantFn
    lower_bound : float, optional
        Declared ``v_min > 0``. Defaults to the smallest value of ``base``;
        a declared bound above that value is rejected.
    """

    base: PiecewiseConstantFn
    lower_bound: float | None = None

    def __post_init__(self):
        lo = self.base.inf if self.lower_bound is None else float(self.lower_bound)
        if not lo > 0.0:
            raise InvalidParameterError("velocity lower bound must be positive")
        if self.base.inf < lo * (1.0 - 1e-14):
            raise InvalidParameterError(
                f"velocity takes value {self.base.inf} below declared lower bound {lo}"
            )
        object.__setattr__(self, "lower_bound", lo)

    @classmethod
    def from_dict(cls, data: dict) -> "VelocityFn":
        return cls(PiecewiseConstantFn.from_dict(data), data.get("lower_bound"))

    def to_dict(self) -> dict:
        out = self.base.to_dict()
        out["lower_bound"] = self.lower_bound
        return out

    def __call__(self, x):
        return self.base(x)

    def left_limit(self, x):
        return self.base.left_limit(x)

    @property
    def upper_bound(self) -> float:
        return self.base.sup

    @property
    def breakpoints(self) -> np.ndarray:
        return self.base.breakpoints

    smooth = False

    def primitive(self, x, anchor: float = 0.0):
        return self.base.primitive(x, anchor)

    @cached_property
    def zmap(self):
        from .disc_ode import ZMap

        return ZMap.from_velocity(self)


@dataclass(frozen=True, eq=False)
class MollifiedFn:
    """Hat-kernel mollification ``f * phi_eps`` of a piecewise-constant function.

    The unit hat ``phi(s) = max(1 - |s|, 0)`` is scaled to support
    ``[-eps, eps]``. Values, derivative and primitive are evaluated in closed
    form from the jumps of ``base`` that fall within ``eps`` of the point.
    """

    base: PiecewiseConstantFn
    eps: float
    lower_bound: float | None = None

    def __post_init__(self):
        if not self.eps > 0.0:
            raise InvalidParameterError("mollification width must be positive")
        lo = self.base.inf if self.lower_bound is None else float(self.lower_bound)
        object.__setattr__(self, "lower_bound", lo)

    smooth = True

    @property
    def upper_bound(self) -> float:
        return self.base.sup

    @property
    def inf(self) -> float:
        return self.base.inf

    @property
    def sup(self) -> float:
        return self.base.sup

    @property
    def lip_bound(self) -> float:
        return (self.base.sup - self.base.inf) / self.eps

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where the piecewise-quadratic representation changes."""
        b = self.base.breakpoints
        return np.unique(np.concatenate((b - self.eps, b, b + self.eps)))

    @cached_property
    def _moments(self) -> np.ndarray:
        # prefix sums of J_k b_k^m, m = 0..3, over the sorted jumps
        b, j = self.base.breakpoints, self.base.jumps
        terms = np.stack([j * b**m for m in range(4)])
        return np.concatenate((np.zeros((4, 1)), np.cumsum(terms, axis=1)), axis=1)

    def _window_moments(self, x):
        """Jump moments on ``[x, x+eps)`` (hat rising) and ``(x-eps, x)``."""
        bp, C = self.base.breakpoints, self._moments
        mid = np.searchsorted(bp, x, side="left")
        hi = np.searchsorted(bp, x + self.eps, side="left")
        lo = np.searchsorted(bp, x - self.eps, side="right")
        ahead = C[:, hi] - C[:, mid]
        behind = C[:, mid] - C[:, lo]
        return ahead, behind

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e = self.eps
        (a0, a1, a2, _), (b0, b1, b2, _) = self._window_moments(x)
        y, z = x + e, x - e
        ahead = y * y * a0 - 2.0 * y * a1 + a2
        behind = b2 - 2.0 * z * b1 + z * z * b0
        return self.base(z) + ahead / (2 * e * e) + b0 - behind / (2 * e * e)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        e = self.eps
        (a0, a1, _, _), (b0, b1, _, _) = self._window_moments(x)
        return ((x + e) * a0 - a1 + b1 - (x - e) * b0) / (e * e)

    def primitive(self, x, anchor: float = 0.0):
        def g(y):
            y = np.asarray(y, dtype=float)
            e = self.eps
            (a0, a1, a2, a3), (b0, b1, b2, b3) = self._window_moments(y)
            u, z = y + e, y - e
            ahead = u**3 * a0 - 3 * u * u * a1 + 3 * u * a2 - a3
            behind = b3 - 3 * z * b2 + 3 * z * z * b1 - z**3 * b0
            return self.base.primitive(y) + (ahead + behind) / (6 * e * e)

        return g(x) - g(anchor)

    @cached_property
    def zmap(self):
        from .disc_ode import ZMap

        return ZMap.from_velocity(self)


@dataclass(frozen=True, eq=False)
class LipschitzField:
    """Field ``lambda(t, x)``, Lipschitz in ``x`` and piecewise continuous in ``t``.

    Parameters
    ----------
    evaluator : callable
        Vectorised ``(t, x) -> lambda(t, x)``.
    sup_bound : float
        Declared bound ``L >= |lambda|`` on the region of interest.
    lip_x_bound : float
        Declared spatial Lipschitz constant ``L2``.
    time_breakpoints : sequence of float
        Times where ``lambda`` may jump in ``t``; used as mandatory step
        boundaries by the integrators.
    dx : callable, optional
        Spatial derivative, needed by the explicit derivative formula.
    smooth : bool
        Whether ``lambda`` is continuously differentiable in ``x``.
    autonomous : bool
        Whether ``lambda`` does not depend on ``t``.
    params : tuple, optional
        ``(a, b, c, omega)`` when the field is the catalogue member
        ``a + b x + c cos(omega t)``; enables compiled kernels.
    """

    evaluator: Callable
    sup_bound: float
    lip_x_bound: float
    time_breakpoints: tuple = ()
    dx: Callable | None = None
    smooth: bool = False
    autonomous: bool = False
    params: tuple | None = None
    time_regularity: str = field(default="piecewise-continuous-in-t")

    def __call__(self, t, x):
        return self.evaluator(t, x)

    @classmethod
    def affine_cos(
        cls,
        a: float = 0.0,
        b: float = 0.0,
        c: float = 0.0,
        omega: float = 0.0,
        window: Sequence[float] | None = None,
        sup_bound: float | None = None,
    ) -> "LipschitzField":
        """The catalogue field ``a + b x + c cos(omega t)``.

        ``window`` bounds the spatial region on which ``sup_bound`` is
        evaluated when ``b != 0``; pass ``sup_bound`` to override.
        """
        a, b, c, omega = float(a), float(b), float(c), float(omega)
        if sup_bound is None:
            if b != 0.0:
                if window is None:
                    raise InvalidParameterError("affine field needs a window or sup_bound")
                lo, hi = window
                sup_bound = max(abs(a + b * lo), abs(a + b * hi)) + abs(c)
            else:
                sup_bound = abs(a) + abs(c)

        def evaluator(t, x):
            t = np.asarray(t, dtype=float)
            return a + b * np.asarray(x, dtype=float) + c * np.cos(omega * t)

        def dx(t, x):
            return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, b)

        return cls(
            evaluator,
            float(sup_bound),
            abs(b),
            dx=dx,
            smooth=True,
            autonomous=(c == 0.0 or omega == 0.0),
            params=(a, b, c, omega),
        )

    @classmethod
    def constant(cls, a: float) -> "LipschitzField":
        return cls.affine_cos(a=a)

    def sampled_check(self, window, T: float, rng: np.random.Generator, n: int = 1000):
        """Sampled ``(sup_ok, lip_ok)`` on ``[0, T] x window``."""
        lo, hi = window
        t = rng.uniform(0.0, T, n)
        x = rng.uniform(lo, hi, n)
        y = rng.uniform(lo, hi, n)
        fx = np.asarray(self(t, x))
        fy = np.asarray(self(t, y))
        sup_ok = bool(np.all(np.abs(fx) <= self.sup_bound * (1 + 1e-12) + 1e-14))
        lip_ok = bool(np.all(np.abs(fx - fy) <= self.lip_x_bound * np.abs(x - y) * (1 + 1e-12) + 1e-14))
        return sup_ok, lip_ok


@dataclass(frozen=True, eq=False)
class Kernel:
    """Nonnegative piecewise-constant convolution weight supported in ``[0, A]``.

    Parameters
    ----------
    shape : PiecewiseConstantFn
        Kernel values; both tails must vanish.
    monotone_decreasing : bool, optional
        Declared monotonicity on ``(0, inf)``; checked against ``shape``.
        Inferred when omitted.
    """

    shape: PiecewiseConstantFn
    monotone_decreasing: bool | None = None

    def __post_init__(self):
        s = self.shape.simplified()
        if s.values[0] != 0.0 or s.values[-1] != 0.0:
            raise InvalidParameterError("kernel must vanish outside a bounded interval")
        if np.any(s.values < 0.0):
            raise InvalidParameterError("kernel must be nonnegative")
        if s.breakpoints.size and s.breakpoints[0] < 0.0:
            raise InvalidParameterError("kernel support must lie in [0, inf)")
        inner = s.values[1:-1]
        mono = bool(np.all(np.diff(inner) <= 0.0)) if s.breakpoints.size else True
        if s.breakpoints.size and s.breakpoints[0] > 0.0:
            mono = False
        if self.monotone_decreasing and not mono:
            raise InvalidParameterError("kernel declared monotone decreasing but is not")
        object.__setattr__(self, "shape", s)
        object.__setattr__(self, "monotone_decreasing", mono if self.monotone_decreasing is None else bool(self.monotone_decreasing))

    @classmethod
    def box(cls, height: float, width: float) -> "Kernel":
        return cls(PiecewiseConstantFn.indicator(0.0, width, height), True)

    @classmethod
    def from_dict(cls, data: dict) -> "Kernel":
        k = cls(PiecewiseConstantFn.from_dict(data), data.get("monotone_decreasing"))
        if "support_right" in data and k.support_right > float(data["support_right"]) + 1e-15:
            raise InvalidParameterError("kernel support exceeds declared support_right")
        return k

    def to_dict(self) -> dict:
        out = self.shape.to_dict()
        out["support_right"] = self.support_right
        out["monotone_decreasing"] = self.monotone_decreasing
        return out

    def __call__(self, x):
        return self.shape(x)

    @property
    def support_right(self) -> float:
        bp = self.shape.breakpoints
        return float(bp[-1]) if bp.size else 0.0

    @property
    def l1_norm(self) -> float:
        bp = self.shape.breakpoints
        return float(np.sum(self.shape.values[1:-1] * np.diff(bp))) if bp.size else 0.0

    @property
    def tv_seminorm(self) -> float:
        return float(np.abs(self.shape.jumps).sum())

    @property
    def tv_positive(self) -> float:
        """Total variation on the open half line ``(0, inf)``."""
        bp = self.shape.breakpoints
        return float(np.abs(self.shape.jumps[bp > 0.0]).sum())

    @property
    def value_at_zero(self) -> float:
        return float(self.shape(0.0))

    @property
    def sup(self) -> float:
        return self.shape.sup

    def pieces(self):
        """Edges ``a_0 < ... < a_m`` and heights ``g_i`` on ``[a_i, a_{i+1})``."""
        bp = self.shape.breakpoints
        return bp.copy(), self.shape.values[1:-1].copy()


# operations ----------------------------------------------------------------


def integrate(f: PiecewiseConstantFn, a: float, b: float) -> float:
    """Exact signed integral of ``f`` over ``[a, b]``."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidParameterError("integration limits must be finite")
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a)
    bp = f.breakpoints
    inner = bp[(bp > a) & (bp < b)]
    edges = np.concatenate(([a], inner, [b]))
    vals = f(edges[:-1])
    return math.fsum(vals * np.diff(edges))


def total_variation(f: PiecewiseConstantFn, a: float, b: float) -> float:
    """Sum of ``|jump|`` over breakpoints in the open interval ``(a, b)``."""
    if not a < b:
        raise InvalidParameterError("total_variation needs a < b")
    mask = (f.breakpoints > a) & (f.breakpoints < b)
    return float(np.abs(f.jumps[mask]).sum())


def l1_distance(f: PiecewiseConstantFn, g: PiecewiseConstantFn, a: float, b: float) -> float:
    """Exact ``int_a^b |f - g|``."""
    return integrate(f.combine(g, lambda u, w: np.abs(u - w)), a, b)


def mollify(f, eps: float) -> MollifiedFn:
    """Hat mollification of a piecewise-constant function or velocity."""
    if not eps > 0.0:
        raise InvalidParameterError("mollification width must be positive")
    if isinstance(f, VelocityFn):
        return MollifiedFn(f.base, float(eps), f.lower_bound)
    if isinstance(f, MollifiedFn):
        raise InvalidParameterError("mollify expects piecewise-constant data")
    return MollifiedFn(f, float(eps))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def mollify_field(lam: LipschitzField, eps: float) -> LipschitzField:
    """Mollify a field in ``x`` with the same hat kernel.

    Catalogue fields are affine in ``x``, which the symmetric hat leaves
    unchanged; other fields are convolved by Gauss-Legendre quadrature on
    each half of the hat.
    """
    if not eps > 0.0:
        raise InvalidParameterError("mollification width must be positive")
    if lam.params is not None:
        return lam
    # nodes on [-1, 0] and [0, 1] with hat weights folded in
    s_left = 0.5 * (_GL_NODES - 1.0)
    s = np.concatenate((s_left, -s_left))
    w = np.concatenate((0.5 * _GL_WEIGHTS * (1.0 + s_left),) * 2)
    dw = np.concatenate((0.5 * _GL_WEIGHTS, -0.5 * _GL_WEIGHTS))

    def evaluator(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        out = np.zeros(x.shape)
        for si, wi in zip(s, w):
            out += wi * lam(t, x - eps * si)
        return out

    def dx(t, x):
        # d/dx int lam(x - eps s) phi(s) ds = (1/eps) int lam(x - eps s) phi'(s) ds
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        out = np.zeros(x.shape)
        for si, wi in zip(s, dw):
            out += wi * lam(t, x - eps * si)
        return out / eps

    return LipschitzField(
        evaluator,
        lam.sup_bound,
        lam.lip_x_bound,
        time_breakpoints=lam.time_breakpoints,
        dx=dx,
        smooth=True,
        autonomous=lam.autonomous,
    )


def _breakpoint_set(g) -> np.ndarray:
    bp = getattr(g, "breakpoints", None)
    return np.zeros(0) if bp is None else np.asarray(bp, dtype=float)


def primitive_gap(f: PiecewiseConstantFn, g, R: float = 1.0, n_sub: int = 64) -> float:
    """``sup_{|y| <= R} |int_0^y (f - g)|`` by quadrature on merged breakpoints.

    Exact when ``g`` is piecewise constant; otherwise each refined piece is
    integrated with 8-point Gauss-Legendre and split into ``n_sub`` parts.
    """
    if isinstance(f, VelocityFn):
        f = f.base
    if isinstance(g, VelocityFn):
        g = g.base
    if not R > 0.0:
        raise InvalidParameterError("window radius must be positive")
    pts = np.concatenate((f.breakpoints, _breakpoint_set(g), [0.0, -R, R]))
    pts = np.unique(pts[(pts >= -R) & (pts <= R)])
    if isinstance(g, PiecewiseConstantFn):
        diff = f.combine(g, lambda u, w: u - w)
        prim = diff.primitive(pts)
        return float(np.abs(prim).max())
    # refine and integrate piecewise
    ts = np.linspace(0.0, 1.0, n_sub + 1)
    edges = (pts[:-1, None] + np.diff(pts)[:, None] * ts[None, :]).reshape(-1)
    edges = np.unique(np.concatenate((edges, pts)))
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    xq = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    gq = np.asarray(g(xq.reshape(-1)), dtype=float).reshape(xq.shape)
    gint = (gq * _GL_WEIGHTS[None, :]).sum(axis=1) * half
    # g-primitive anchored at 0
    k0 = int(np.searchsorted(edges, 0.0))
    cum = np.concatenate(([0.0], np.cumsum(gint)))
    cum -= cum[k0]
    fprim = f.primitive(edges)
    return float(np.abs(fprim - cum).max())


def sgn_sin_velocity(cutoff: float = 1e-3, inner_value: float = 2.0) -> VelocityFn:
    """Truncation of ``sgn(sin(pi / x)) + 2``.

    Jumps sit at ``x = +-1/k``; those with ``|x| >= cutoff`` are kept and the
    function is set to ``inner_value`` on ``(-cutoff, cutoff)``.
    """
    if not 0.0 < cutoff <= 1.0:
        raise InvalidParameterError("cutoff must lie in (0, 1]")
    kmax = int(math.floor(1.0 / cutoff * (1.0 + 1e-12)))
    ks = np.arange(1, kmax + 1, dtype=float)
    pos = np.sort(1.0 / ks)
    bp = np.concatenate((-pos[::-1], pos))
    # sample each open interval at its midpoint; the inner gap gets inner_value
    mids = 0.5 * (bp[:-1] + bp[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.sign(np.sin(np.pi / mids)) + 2.0
    inner[np.argmin(np.abs(mids))] = inner_value
    left = np.sign(np.sin(np.pi / (bp[0] - 1.0))) + 2.0
    right = np.sign(np.sin(np.pi / (bp[-1] + 1.0))) + 2.0
    vals = np.concatenate(([left], inner, [right]))
    base = PiecewiseConstantFn(bp, vals).simplified()
    return VelocityFn(base, 1.0)

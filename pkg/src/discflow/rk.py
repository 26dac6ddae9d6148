"""
Dormand-Prince 5(4) integrator with a shared adaptive step over a state vector.

All components advance with one step sequence and the error is measured in
the max norm, so a batch of initial values is integrated exactly as a single
trajectory would be. Declared stop times are hit exactly and the right-hand
side is re-evaluated there, which makes jumps of the field in ``t`` harmless.
The compiled PDE kernel in ``discflow._kernels`` mirrors this controller step
for step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["IntegrationError", "DenseSolution", "dopri5", "hermite"]

# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# crossings closer than this fraction of a step to either end are left alone
KINK_MARGIN = 1e-4
KINK_REFINE = 4


class IntegrationError(RuntimeError):
    """Step size underflow or step budget exhausted."""


@dataclass(frozen=True)
class DenseSolution:
    """Accepted steps with cubic Hermite dense output.

    Attributes
    ----------
    ts : ndarray, shape (n+1,)
        Accepted step boundaries.
    ys : ndarray, shape (n+1, m)
        States at ``ts``.
    f_start, f_end : ndarray, shape (n, m)
        Right-hand side at the start and end of each step (one-sided values,
        so jumps at stop times are represented).
    n_rejected : int
    """

    ts: np.ndarray
    ys: np.ndarray
    f_start: np.ndarray
    f_end: np.ndarray
    n_rejected: int

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.ts.size - 2)
        return hermite(
            self.ts[i], self.ts[i + 1], self.ys[i], self.ys[i + 1],
            self.f_start[i], self.f_end[i], t,
        )

    def at_stops(self, stops) -> np.ndarray:
        """States at declared stop times (exact step boundaries)."""
        idx = np.searchsorted(self.ts, stops)
        return self.ys[idx]


def hermite(t0, t1, y0, y1, f0, f1, t):
    t0, t1, t = (np.asarray(a, float) for a in (t0, t1, t))
    h = t1 - t0
    s = (t - t0) / h
    if s.ndim and np.ndim(y0) > s.ndim:
        s, h = s[..., None], h[..., None]
    s2 = s * s
    h00 = 2 * s2 * s - 3 * s2 + 1
    h10 = s2 * s - 2 * s2 + s
    h01 = -2 * s2 * s + 3 * s2
    h11 = s2 * s - s2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def dopri5(
    f,
    t0: float,
    t1: float,
    y0,
    rtol: float,
    atol: float,
    stops=(),
    hmax: float = np.inf,
    fixed_steps=None,
    max_steps: int = 10_000_000,
    knots=None,
) -> DenseSolution:
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1 > t0``.

    Parameters
    ----------
    f : callable
        Vectorised right-hand side ``f(t, y) -> array like y``.
    rtol, atol : float
        Local error tolerances, max norm over components.
    stops : sequence of float
        Mandatory step boundaries inside ``(t0, t1)``.
    hmax : float
        Upper bound on the step.
    fixed_steps : ndarray, optional
        Replay this sequence of step end times without error control.
    knots : tuple (offset, K), optional
        Component ``m`` has position ``offset[m] + y[m]`` and the right-hand
        side has a derivative jump whenever a position crosses a value in the
        sorted array ``K``. A trial step that crosses one is shortened to end
        at the linearly estimated crossing, so no accepted step straddles a
        kink and the embedded error estimate stays meaningful.

    Raises
    ------
    IntegrationError
        On step-size underflow or when ``max_steps`` is exhausted.
    """
    y = np.array(y0, dtype=float, copy=True)
    stops = np.asarray(stops, dtype=float)
    stops = _merge_close(np.unique(np.concatenate((stops[(stops > t0) & (stops < t1)], [t1]))), t0)

    ts, ys, fs0, fs1 = [t0], [y.copy()], [], []
    n_rej = 0
    if fixed_steps is not None:
        t = t0
        k1 = f(t, y)
        for t_new in fixed_steps:
            h = t_new - t
            y_new, k7, _ = _stage(f, t, y, h, k1)
            fs0.append(k1)
            fs1.append(k7)
            t, y = t_new, y_new
            ts.append(t)
            ys.append(y)
            k1 = f(t, y)
        return DenseSolution(np.array(ts), np.array(ys), np.array(fs0), np.array(fs1), 0)

    if knots is not None:
        offset = np.asarray(knots[0], dtype=float)
        kk = np.asarray(knots[1], dtype=float)
        if kk.size == 0:
            knots = None
    t = t0
    h_prop = min(hmax, stops[0] - t0)
    k1 = f(t, y)
    si = 0
    n_steps = 0
    h_cut = None
    n_cut = 0
    while si < stops.size:
        t_stop = stops[si]
        remaining = t_stop - t
        if h_cut is not None:
            h, last = h_cut, False
        else:
            last = h_prop >= remaining
            h = remaining if last else h_prop
        if not last and remaining - h <= 64 * np.finfo(float).eps * max(1.0, abs(t_stop)):
            h, last = remaining, True
        if h <= 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t!r} (h={h!r})")
        y_new, k7, err_vec = _stage(f, t, y, h, k1)
        if knots is not None and n_cut < KINK_REFINE:
            theta = _first_crossing(offset + y, offset + y_new, kk, KINK_MARGIN)
            if KINK_MARGIN < theta < 1.0 - KINK_MARGIN:
                if h_cut is None:
                    h_resume = h_prop
                h_cut = theta * h
                n_cut += 1
                continue
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale)) if y.size else 0.0
        n_steps += 1
        if n_steps > max_steps:
            raise IntegrationError(f"step budget of {max_steps} exhausted at t={t!r}")
        if err <= 1.0:
            fac = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err**-0.2))
            t_new = t_stop if last else t + h
            fs0.append(k1)
            fs1.append(k7)
            t, y = t_new, y_new
            ts.append(t)
            ys.append(y)
            if last:
                si += 1
                k1 = f(t, y)
            else:
                k1 = k7
            h_prop = min(hmax, h * fac)
            if h_cut is not None:
                h_prop = max(h_prop, h_resume)
            h_cut, n_cut = None, 0
        else:
            n_rej += 1
            h_prop = h * max(MIN_FACTOR, SAFETY * err**-0.2)
            h_cut, n_cut = None, 0
    return DenseSolution(np.array(ts), np.array(ys), np.array(fs0), np.array(fs1), n_rej)


def _stage(f, t, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        dy = sum(a * k for a, k in zip(A[i], ks) if a != 0.0)
        ks.append(f(t + C[i] * h, y + h * dy))
    y_new = y + h * sum(b * k for b, k in zip(B, ks) if b != 0.0)
    err = h * sum(e * k for e, k in zip(E, ks) if e != 0.0)
    return y_new, ks[6], err


def _merge_close(stops, t0):
    """Drop stops within a few ulps of the previous one (or of ``t0``); the
    final entry is always kept."""
    keep = []
    prev = t0
    for k, s in enumerate(stops):
        close = s - prev <= 64 * np.finfo(float).eps * max(1.0, abs(s))
        if close and k == stops.size - 1 and keep:
            keep[-1] = s
        elif not close:
            keep.append(s)
            prev = s
    return np.array(keep if keep else [stops[-1]])


def _first_crossing(a, b, kk, margin: float = 0.0) -> float:
    """Smallest fraction ``theta`` in ``(margin, 1)`` at which the segment from
    ``a`` to ``b`` (componentwise, linearly) meets a value of ``kk``; 1 if none.

    Values within ``margin`` of the start are skipped, so a step that begins
    on a kink still sees the next one.
    """
    a0 = a + margin * (b - a)
    lo = np.minimum(a0, b)
    hi = np.maximum(a0, b)
    i0 = np.searchsorted(kk, lo, side="right")
    i1 = np.searchsorted(kk, hi, side="left")
    hit = i1 > i0
    if not hit.any():
        return 1.0
    up = b[hit] >= a[hit]
    k = np.where(up, kk[np.minimum(i0[hit], kk.size - 1)], kk[np.maximum(i1[hit] - 1, 0)])
    return float(np.min((k - a[hit]) / (b[hit] - a[hit])))

"""
Hot kernels with a compiled and a pure-numpy implementation.

The compiled path is used when numba imports and ``DISCFLOW_BACKEND`` is not
``numpy``. Both paths implement the same algorithms; the wrappers below give
them one calling convention, where a Z-map is passed as the tuple
``(xk, pk, d0, d1, lin, sl, sr)`` produced by ``ZMap.arrays``.
"""

from __future__ import annotations

import os

import numpy as np

from ..rk import IntegrationError
from . import _numpy

try:  # numba is a hard dependency, but keep the fallback importable without it
    from . import _numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAS_NUMBA = False


def _select(name: str | None):
    name = (name or "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    if name == "numba" and not HAS_NUMBA:
        name = "numpy"
    return name


BACKEND = _select(os.environ.get("DISCFLOW_BACKEND"))


def _impl(backend: str | None):
    name = BACKEND if backend is None else _select(backend)
    return _numba if name == "numba" else _numpy


def _flat(a):
    a = np.asarray(a, dtype=float)
    return np.ascontiguousarray(a.reshape(-1)), a.shape


def zmap_forward(x, zm, backend=None):
    flat, shape = _flat(x)
    return _impl(backend).zmap_forward(flat, *zm).reshape(shape)


def zmap_inverse(p, zm, backend=None):
    flat, shape = _flat(p)
    return _impl(backend).zmap_inverse(flat, *zm).reshape(shape)


def mass_cdf(y, node_p, cum, zm, backend=None):
    flat, shape = _flat(y)
    impl = _impl(backend)
    if impl is _numpy:
        return _numpy.mass_cdf(flat, node_p, cum, zm).reshape(shape)
    return _numba.mass_cdf(flat, node_p, cum, *zm).reshape(shape)


def nonlocal_eval(xs, node_p, cum, edges, heights, zm, backend=None):
    flat, shape = _flat(xs)
    impl = _impl(backend)
    if impl is _numpy:
        out = _numpy.nonlocal_eval(flat, node_p, cum, edges, heights, zm)
    else:
        out = _numba.nonlocal_eval(flat, node_p, cum, edges, heights, *zm)
    return out.reshape(shape)


def field_eval(t, x, levels, wgrid, xg0, dx, backend=None):
    x, shape = _flat(x)
    t = np.ascontiguousarray(np.broadcast_to(np.asarray(t, float), shape).reshape(-1))
    return _impl(backend).field_eval(t, x, levels, wgrid, xg0, dx).reshape(shape)


def advance(p0, levels, wgrid, xg0, dx, zm, va, vb, rtol, atol, hmax=np.inf, fixed_steps=None, backend=None):
    """Integrate ``p' = va + vb * w(t, P^{-1}(p))`` through ``levels``.

    Returns ``(positions at levels, step end times, rejected count)``.
    """
    p0 = np.ascontiguousarray(p0, dtype=float)
    levels = np.ascontiguousarray(levels, dtype=float)
    wgrid = np.ascontiguousarray(wgrid, dtype=float)
    steps = np.zeros(0) if fixed_steps is None else np.ascontiguousarray(fixed_steps, dtype=float)
    impl = _impl(backend)
    if impl is _numpy:
        return _numpy.advance(p0, levels, wgrid, xg0, dx, zm, va, vb, rtol, atol, hmax, steps)
    out, st, n_rej, status = _numba.advance(
        p0, levels, wgrid, float(xg0), float(dx), *zm, float(va), float(vb),
        float(rtol), float(atol), float(hmax), steps,
    )
    if status != 0:
        raise IntegrationError(f"step size underflow while advancing characteristics (t~{st[-1] if st.size else levels[0]!r})")
    return out, st, n_rej


def rk4_affine_cos(p_start, T, n_steps, stride, params, zm, backend=None):
    a, b, c, omega = (float(v) for v in params)
    p_start = np.ascontiguousarray(p_start, dtype=float)
    impl = _impl(backend)
    if impl is _numpy:
        return _numpy.rk4_affine_cos(p_start, float(T), int(n_steps), int(stride), a, b, c, omega, zm)
    return _numba.rk4_affine_cos(p_start, float(T), int(n_steps), int(stride), a, b, c, omega, *zm)


def ode_affine(p0s, stops, params, zm, kinks, rtol, atol, hmax=np.inf, backend=None):
    """Solve ``c' = a + b P^{-1}(p0 + c) + c cos(omega t)`` separately for each
    ``p0``; each column gets its own adaptive step sequence.

    Returns a list of ``(ts, ys, f_start, f_end, n_rejected)``.
    """
    from ..rk import KINK_MARGIN, KINK_REFINE

    a, b, c, omega = (float(v) for v in params)
    stops = np.ascontiguousarray(stops, dtype=float)
    kinks = np.ascontiguousarray(kinks, dtype=float)
    impl = _impl(backend)
    out = []
    for p0 in np.asarray(p0s, dtype=float).reshape(-1):
        if impl is _numpy:
            res = _numpy.ode_affine1(p0, stops, a, b, c, omega, zm, kinks, rtol, atol, hmax)
        else:
            res = _numba.ode_affine1(
                float(p0), stops, a, b, c, omega, *zm, kinks, float(rtol), float(atol), float(hmax),
                KINK_MARGIN, KINK_REFINE,
            )
        ts, ys, f0, f1, n_rej, status = res
        if status != 0:
            raise IntegrationError(f"step size underflow near t={ts[-1]!r}")
        out.append((ts, ys, f0, f1, n_rej))
    return out


def advance_lagr(p0, levels, flev, plev, cum, edges, heights, zm, va, vb, rtol, atol, hmax=np.inf, fixed_steps=None, backend=None):
    """Integrate ``p' = va + vb * w(t, P^{-1}(p))`` where ``w`` is the exact
    nonlocal term of the node positions ``plev`` at field levels ``flev``.

    Returns ``(positions at levels, step end times, rejected count)``.
    """
    args = [np.ascontiguousarray(a, dtype=float) for a in (p0, levels, flev, plev, cum, edges, heights)]
    steps = np.zeros(0) if fixed_steps is None else np.ascontiguousarray(fixed_steps, dtype=float)
    impl = _impl(backend)
    if impl is _numpy:
        return _numpy.advance_lagr(*args, zm, va, vb, rtol, atol, hmax, steps)
    out, st, n_rej, status = _numba.advance_lagr(
        *args, *zm, float(va), float(vb), float(rtol), float(atol), float(hmax), steps
    )
    if status != 0:
        raise IntegrationError("step size underflow while advancing characteristics")
    return out, st, n_rej


def picard_window(p_start, t0, t1, cum, edges, heights, xg, zm, va, vb, rtol, atol, tol, max_iter, backend=None):
    """Fixed-point iteration on one restart window.

    Returns ``(end positions, history of sup differences, status)``; status 0
    converged, 1 step underflow, 2 iteration budget exhausted, 3 crossing.
    """
    p_start, cum, edges, heights, xg = (np.ascontiguousarray(a, dtype=float) for a in (p_start, cum, edges, heights, xg))
    impl = _impl(backend)
    if impl is _numpy:
        return _numpy.picard_window(p_start, float(t0), float(t1), cum, edges, heights, xg, zm, va, vb, rtol, atol, tol, int(max_iter))
    return _numba.picard_window(
        p_start, float(t0), float(t1), cum, edges, heights, xg, *zm, float(va), float(vb),
        float(rtol), float(atol), float(tol), int(max_iter),
    )


__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "zmap_forward",
    "zmap_inverse",
    "mass_cdf",
    "nonlocal_eval",
    "field_eval",
    "advance",
    "rk4_affine_cos",
    "ode_affine",
    "advance_lagr",
    "picard_window",
]

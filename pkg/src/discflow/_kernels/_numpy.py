"""Pure-numpy implementations of the hot kernels (reference and fallback path)."""

from __future__ import annotations

import numpy as np

from ..rk import KINK_MARGIN, KINK_REFINE, dopri5

NEWTON_MAX = 60


def zmap_forward(x, xk, pk, d0, d1, lin, sl, sr):
    x = np.asarray(x, dtype=float)
    n = xk.size - 1
    i = np.searchsorted(xk, x, side="right") - 1
    ic = np.clip(i, 0, max(n - 1, 0))
    out = np.empty(x.shape)
    left = i < 0
    right = i >= n
    mid = ~(left | right)
    out[left] = pk[0] + sl * (x[left] - xk[0])
    out[right] = pk[n] + sr * (x[right] - xk[n])
    if n > 0 and np.any(mid):
        j = ic[mid]
        h = xk[j + 1] - xk[j]
        s = (x[mid] - xk[j]) / h
        lin_val = pk[j] + s * (pk[j + 1] - pk[j])
        out[mid] = np.where(lin[j], lin_val, _hermite(s, h, pk[j], pk[j + 1], d0[j], d1[j]))
    return out


def _hermite(s, h, p0, p1, m0, m1):
    # relative to p0 so rounding scales with p1 - p0
    s2 = s * s
    return p0 + (p1 - p0) * (3 * s2 - 2 * s2 * s) + h * (m0 * (s2 * s - 2 * s2 + s) + m1 * (s2 * s - s2))


def _hermite_ds(s, h, p0, p1, m0, m1):
    s2 = s * s
    return (p1 - p0) * (6 * s - 6 * s2) + h * (m0 * (3 * s2 - 4 * s + 1) + m1 * (3 * s2 - 2 * s))


def zmap_inverse(p, xk, pk, d0, d1, lin, sl, sr):
    p = np.asarray(p, dtype=float)
    n = xk.size - 1
    i = np.searchsorted(pk, p, side="right") - 1
    ic = np.clip(i, 0, max(n - 1, 0))
    out = np.empty(p.shape)
    left = i < 0
    right = i >= n
    mid = ~(left | right)
    out[left] = xk[0] + (p[left] - pk[0]) / sl
    out[right] = xk[n] + (p[right] - pk[n]) / sr
    if n > 0 and np.any(mid):
        j = ic[mid]
        pm = p[mid]
        h = xk[j + 1] - xk[j]
        s = (pm - pk[j]) / (pk[j + 1] - pk[j])
        curved = ~lin[j]
        if np.any(curved):
            jc = j[curved]
            sc, hc, pc = s[curved], h[curved], pm[curved]
            a0, a1, m0, m1 = pk[jc], pk[jc + 1], d0[jc], d1[jc]
            active = np.ones(sc.shape, dtype=bool)
            for _ in range(NEWTON_MAX):
                if not active.any():
                    break
                s2 = sc * sc
                val = (a0 - pc) + (a1 - a0) * (3 * s2 - 2 * s2 * sc) + hc * (m0 * (s2 * sc - 2 * s2 + sc) + m1 * (s2 * sc - s2))
                der = _hermite_ds(sc, hc, a0, a1, m0, m1)
                step = np.where(active, val / der, 0.0)
                sc = np.clip(sc - step, 0.0, 1.0)
                active &= np.abs(step) > 1e-15
            s[curved] = sc
        out[mid] = xk[j] + s * h
    return out


def mass_cdf(y, node_p, cum, zm):
    """Cumulative mass left of ``y`` for mass spread uniformly in ``p`` per cell."""
    pp = zmap_forward(y, *zm)
    n = node_p.size - 1
    j = np.searchsorted(node_p, pp, side="right") - 1
    jc = np.clip(j, 0, n - 1)
    frac = (pp - node_p[jc]) / (node_p[jc + 1] - node_p[jc])
    val = cum[jc] + frac * (cum[jc + 1] - cum[jc])
    return np.where(j < 0, 0.0, np.where(j >= n, cum[n], val))


def nonlocal_eval(xs, node_p, cum, edges, heights, zm):
    """``w(x) = int gamma(y - x) q(y) dy`` for piecewise-constant ``gamma``."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros(xs.shape)
    if node_p.size < 2:
        return out
    q_prev = mass_cdf(xs + edges[0], node_p, cum, zm)
    for m in range(heights.size):
        q_next = mass_cdf(xs + edges[m + 1], node_p, cum, zm)
        out += heights[m] * (q_next - q_prev)
        q_prev = q_next
    return out


def field_eval(t, x, levels, wgrid, xg0, dx):
    """Bilinear interpolation of the stored nonlocal term."""
    nlev = levels.size
    k = np.clip(np.searchsorted(levels, t, side="right") - 1, 0, nlev - 2)
    theta = (t - levels[k]) / (levels[k + 1] - levels[k])
    nx = wgrid.shape[1]
    u = (x - xg0) / dx
    j = np.floor(u).astype(np.int64)
    inside = (j >= 0) & (j < nx - 1)
    jc = np.clip(j, 0, nx - 2)
    r = u - jc
    lo = (1 - r) * wgrid[k, jc] + r * wgrid[k, jc + 1]
    hi = (1 - r) * wgrid[k + 1, jc] + r * wgrid[k + 1, jc + 1]
    return np.where(inside, (1 - theta) * lo + theta * hi, 0.0)


def advance(p0, levels, wgrid, xg0, dx, zm, va, vb, rtol, atol, hmax, fixed_steps):
    """Advance nodes in the ``p = P(x)`` coordinate through all ``levels``.

    Returns positions at every level, the accepted step end times and the
    number of rejected steps.
    """

    def rhs(t, p):
        x = zmap_inverse(p, *zm)
        return va + vb * field_eval(t, x, levels, wgrid, xg0, dx)

    sol = dopri5(
        rhs, levels[0], levels[-1], p0, rtol, atol, stops=levels[1:-1], hmax=hmax,
        fixed_steps=None if fixed_steps is None or fixed_steps.size == 0 else fixed_steps,
    )
    return sol.at_stops(levels), sol.ts[1:].copy(), sol.n_rejected


def rk4_affine_cos(p_start, T, n_steps, stride, a, b, c, omega, zm):
    """Fixed-step classical RK4 for ``c' = a + b X + c cos(omega t)``,
    ``X = P^{-1}(p_start + c)``; returns ``c`` every ``stride`` steps."""
    h = T / n_steps
    y = np.zeros_like(p_start)
    n_out = n_steps // stride
    out = np.empty((n_out + 1, p_start.size))
    out[0] = y

    def f(t, y):
        return a + b * zmap_inverse(p_start + y, *zm) + c * np.cos(omega * t)

    for k in range(n_steps):
        t = k * h
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % stride == 0:
            out[(k + 1) // stride] = y
    return out


def ode_affine1(p0, stops, a, b, c, omega, zm, kinks, rtol, atol, hmax):
    """Reference for the compiled scalar solver: the generic integrator on a
    one-component problem."""
    p0 = float(p0)

    def f(t, y):
        return a + b * zmap_inverse(p0 + y, *zm) + c * np.cos(omega * t)

    sol = dopri5(
        f, 0.0, float(stops[-1]), np.zeros(1), rtol, atol, stops=stops[:-1], hmax=hmax,
        knots=(np.array([p0]), kinks),
    )
    return sol.ts, sol.ys[:, 0], sol.f_start[:, 0], sol.f_end[:, 0], sol.n_rejected, 0


def _lagr_field(flev, plev, cum, edges, heights, zm, va, vb):
    """Right-hand side ``p' = va + vb * w`` with ``w`` the exact term of node
    positions interpolated linearly in time between field levels."""

    def rhs(t, p):
        if vb == 0.0 or heights.size == 0:
            return np.full(p.shape, float(va))
        kf = min(max(int(np.searchsorted(flev, t, side="right")) - 1, 0), flev.size - 2)
        theta = (t - flev[kf]) / (flev[kf + 1] - flev[kf])
        x = zmap_inverse(p, *zm)
        nodes = plev[kf] + theta * (plev[kf + 1] - plev[kf])
        return va + vb * nonlocal_eval(x, nodes, cum, edges, heights, zm)

    return rhs


def advance_lagr(p0, levels, flev, plev, cum, edges, heights, zm, va, vb, rtol, atol, hmax, fixed_steps):
    rhs = _lagr_field(flev, plev, cum, edges, heights, zm, va, vb)
    if fixed_steps is not None and fixed_steps.size:
        sol = dopri5(rhs, levels[0], levels[-1], p0, rtol, atol, fixed_steps=fixed_steps)
    else:
        sol = dopri5(rhs, levels[0], levels[-1], p0, rtol, atol, stops=levels[1:-1], hmax=hmax)
    return sol.at_stops(levels), sol.ts[1:].copy(), sol.n_rejected


def _grid_gap(xg, pa, pb, cum, edges, heights, zm):
    xa = zmap_inverse(np.array([pa[0], pb[0], pa[-1], pb[-1]]), *zm)
    lo, hi = min(xa[0], xa[1]) - edges[-1], max(xa[2], xa[3]) - edges[0]
    x = xg[(xg >= lo) & (xg <= hi)]
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(nonlocal_eval(x, pa, cum, edges, heights, zm) - nonlocal_eval(x, pb, cum, edges, heights, zm))))


def picard_window(p_start, t0, t1, cum, edges, heights, xg, zm, va, vb, rtol, atol, tol, max_iter):
    """Reference for the compiled window iteration (same guess, same replay)."""
    flev = np.array([t0, t1])
    f0 = _lagr_field(flev, np.vstack((p_start, p_start)), cum, edges, heights, zm, va, vb)(t0, p_start)
    plev = np.vstack((p_start, p_start + (t1 - t0) * f0))
    hist = []
    steps = None
    for _ in range(max_iter):
        out, st, _ = advance_lagr(p_start, flev, flev, plev, cum, edges, heights, zm, va, vb, rtol, atol, t1 - t0, steps)
        pn = out[1]
        if np.any(np.diff(pn) <= 0.0):
            return pn, np.array(hist), 3
        if vb == 0.0 or heights.size == 0:
            hist.append(0.0)
            return pn, np.array(hist), 0
        hist.append(_grid_gap(xg, plev[1], pn, cum, edges, heights, zm))
        plev[1] = pn
        steps = st
        if hist[-1] <= tol:
            return pn, np.array(hist), 0
    return plev[1].copy(), np.array(hist), 2

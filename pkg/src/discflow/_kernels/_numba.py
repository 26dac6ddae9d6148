"""Compiled kernels; the numpy module holds the matching reference versions."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NEWTON_MAX = 60

# numpy error model: no zero-division checks, which otherwise block inlining
_JIT = dict(cache=True, nogil=True, error_model="numpy")

# Dormand-Prince tableau, same as discflow.rk
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 5.0


@njit(**_JIT)
def _right(a, x):
    # number of entries <= x (np.searchsorted side="right" on a scalar,
    # without the temporary array numba creates for it)
    lo, hi = 0, a.size
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(**_JIT)
def _left(a, x):
    lo, hi = 0, a.size
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(**_JIT)
def _fwd1(x, xk, pk, d0, d1, lin, sl, sr):
    n = xk.size - 1
    i = _right(xk, x) - 1
    if i < 0:
        return pk[0] + sl * (x - xk[0])
    if i >= n:
        return pk[n] + sr * (x - xk[n])
    h = xk[i + 1] - xk[i]
    s = (x - xk[i]) / h
    if lin[i]:
        return pk[i] + s * (pk[i + 1] - pk[i])
    s2 = s * s
    return (
        (2 * s2 * s - 3 * s2 + 1) * pk[i]
        + (s2 * s - 2 * s2 + s) * h * d0[i]
        + (-2 * s2 * s + 3 * s2) * pk[i + 1]
        + (s2 * s - s2) * h * d1[i]
    )


@njit(**_JIT)
def _inv1(p, xk, pk, d0, d1, lin, sl, sr):
    n = xk.size - 1
    i = _right(pk, p) - 1
    if i < 0:
        return xk[0] + (p - pk[0]) / sl
    if i >= n:
        return xk[n] + (p - pk[n]) / sr
    h = xk[i + 1] - xk[i]
    a0 = pk[i]
    a1 = pk[i + 1]
    s = (p - a0) / (a1 - a0)
    if not lin[i]:
        m0 = d0[i]
        m1 = d1[i]
        for _ in range(NEWTON_MAX):
            s2 = s * s
            val = (
                (2 * s2 * s - 3 * s2 + 1) * a0
                + (s2 * s - 2 * s2 + s) * h * m0
                + (-2 * s2 * s + 3 * s2) * a1
                + (s2 * s - s2) * h * m1
            ) - p
            der = (
                (6 * s2 - 6 * s) * a0
                + (3 * s2 - 4 * s + 1) * h * m0
                + (-6 * s2 + 6 * s) * a1
                + (3 * s2 - 2 * s) * h * m1
            )
            step = val / der
            s = min(max(s - step, 0.0), 1.0)
            if abs(step) <= 1e-15:
                break
    return xk[i] + s * h


@njit(**_JIT)
def zmap_forward(x, xk, pk, d0, d1, lin, sl, sr):
    # loop bodies are written out: calling _fwd1 per element costs more than the work
    out = np.empty(x.size)
    n = xk.size - 1
    for j in range(x.size):
        y = x[j]
        lo, hi = 0, xk.size
        while lo < hi:
            mid = (lo + hi) >> 1
            if xk[mid] <= y:
                lo = mid + 1
            else:
                hi = mid
        i = lo - 1
        if i < 0:
            out[j] = pk[0] + sl * (y - xk[0])
        elif i >= n:
            out[j] = pk[n] + sr * (y - xk[n])
        else:
            h = xk[i + 1] - xk[i]
            s = (y - xk[i]) / h
            if lin[i]:
                out[j] = pk[i] + s * (pk[i + 1] - pk[i])
            else:
                out[j] = _herm(s, h, pk[i], pk[i + 1], d0[i], d1[i])
    return out


@njit(**_JIT)
def zmap_inverse(p, xk, pk, d0, d1, lin, sl, sr):
    out = np.empty(p.size)
    n = xk.size - 1
    for j in range(p.size):
        q = p[j]
        lo, hi = 0, pk.size
        while lo < hi:
            mid = (lo + hi) >> 1
            if pk[mid] <= q:
                lo = mid + 1
            else:
                hi = mid
        i = lo - 1
        if i < 0:
            out[j] = xk[0] + (q - pk[0]) / sl
        elif i >= n:
            out[j] = xk[n] + (q - pk[n]) / sr
        else:
            h = xk[i + 1] - xk[i]
            s = (q - pk[i]) / (pk[i + 1] - pk[i])
            if not lin[i]:
                s = _herm_inv(s, q, h, pk[i], pk[i + 1], d0[i], d1[i])
            out[j] = xk[i] + s * h
    return out


@njit(**_JIT)
def _cdf1(y, node_p, cum, xk, pk, d0, d1, lin, sl, sr):
    pp = _fwd1(y, xk, pk, d0, d1, lin, sl, sr)
    n = node_p.size - 1
    j = _right(node_p, pp) - 1
    if j < 0:
        return 0.0
    if j >= n:
        return cum[n]
    frac = (pp - node_p[j]) / (node_p[j + 1] - node_p[j])
    return cum[j] + frac * (cum[j + 1] - cum[j])


@njit(**_JIT)
def mass_cdf(y, node_p, cum, xk, pk, d0, d1, lin, sl, sr):
    out = np.empty(y.size)
    for i in range(y.size):
        out[i] = _cdf1(y[i], node_p, cum, xk, pk, d0, d1, lin, sl, sr)
    return out


@njit(**_JIT)
def nonlocal_eval(xs, node_p, cum, edges, heights, xk, pk, d0, d1, lin, sl, sr):
    out = np.zeros(xs.size)
    if node_p.size < 2:
        return out
    for i in range(xs.size):
        x = xs[i]
        q_prev = _cdf1(x + edges[0], node_p, cum, xk, pk, d0, d1, lin, sl, sr)
        acc = 0.0
        for m in range(heights.size):
            q_next = _cdf1(x + edges[m + 1], node_p, cum, xk, pk, d0, d1, lin, sl, sr)
            acc += heights[m] * (q_next - q_prev)
            q_prev = q_next
        out[i] = acc
    return out


@njit(**_JIT)
def _field1(t, x, k, levels, wgrid, xg0, dx):
    theta = (t - levels[k]) / (levels[k + 1] - levels[k])
    nx = wgrid.shape[1]
    u = (x - xg0) / dx
    j = int(math.floor(u))
    if j < 0 or j >= nx - 1:
        return 0.0
    r = u - j
    lo = (1 - r) * wgrid[k, j] + r * wgrid[k, j + 1]
    hi = (1 - r) * wgrid[k + 1, j] + r * wgrid[k + 1, j + 1]
    return (1 - theta) * lo + theta * hi


@njit(**_JIT)
def field_eval(t, x, levels, wgrid, xg0, dx):
    out = np.empty(x.size)
    nlev = levels.size
    for i in range(x.size):
        k = _right(levels, t[i]) - 1
        k = min(max(k, 0), nlev - 2)
        out[i] = _field1(t[i], x[i], k, levels, wgrid, xg0, dx)
    return out


@njit(**_JIT)
def _rhs(t, p, k, out, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb):
    for i in range(p.size):
        x = _inv1(p[i], xk, pk, d0, d1, lin, sl, sr)
        out[i] = va + vb * _field1(t, x, k, levels, wgrid, xg0, dx)


@njit(**_JIT)
def _dp_step(t, y, h, k, ks, ytmp, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb):
    # ks[0] holds k1 on entry; fills ks[1..6]; returns y_new (in ytmp[0]) and error (ytmp[1])
    n = y.size
    k1, k2, k3, k4, k5, k6, k7 = ks[0], ks[1], ks[2], ks[3], ks[4], ks[5], ks[6]
    yy = ytmp[2]
    for i in range(n):
        yy[i] = y[i] + h * (A21 * k1[i])
    _rhs(t + C2 * h, yy, k, k2, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
    _rhs(t + C3 * h, yy, k, k3, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    _rhs(t + C4 * h, yy, k, k4, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    _rhs(t + C5 * h, yy, k, k5, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
    _rhs(t + h, yy, k, k6, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
    ynew = ytmp[0]
    for i in range(n):
        ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
    _rhs(t + h, ynew, k, k7, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
    err = ytmp[1]
    for i in range(n):
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])


@njit(**_JIT)
def advance(p0, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb, rtol, atol, hmax, fixed_steps):
    n = p0.size
    nlev = levels.size
    out = np.empty((nlev, n))
    y = p0.copy()
    out[0] = y
    ks = np.empty((7, n))
    ytmp = np.empty((3, n))
    cap = 64
    steps = np.empty(cap)
    n_acc = 0
    n_rej = 0
    t = levels[0]
    k = 0
    _rhs(t, y, k, ks[0], levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)

    if fixed_steps.size > 0:
        for s in range(fixed_steps.size):
            t_new = fixed_steps[s]
            h = t_new - t
            _dp_step(t, y, h, k, ks, ytmp, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
            y[:] = ytmp[0]
            t = t_new
            if t == levels[k + 1]:
                out[k + 1] = y
                k += 1
            if k < nlev - 1:
                _rhs(t, y, k, ks[0], levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
        return out, fixed_steps.copy(), 0, 0

    h_prop = min(hmax, levels[1] - t)
    while k < nlev - 1:
        t_stop = levels[k + 1]
        remaining = t_stop - t
        last = h_prop >= remaining
        h = remaining if last else h_prop
        if h <= 1e-14 * max(1.0, abs(t)):
            return out, steps[:n_acc], n_rej, 1
        _dp_step(t, y, h, k, ks, ytmp, levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
        ynew = ytmp[0]
        errv = ytmp[1]
        err = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e = abs(errv[i]) / sc
            if e > err:
                err = e
        if err <= 1.0:
            if err == 0.0:
                fac = MAX_FACTOR
            else:
                fac = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err**-0.2))
            t = t_stop if last else t + h
            y[:] = ynew
            if n_acc == cap:
                grown = np.empty(2 * cap)
                grown[:cap] = steps
                steps = grown
                cap *= 2
            steps[n_acc] = t
            n_acc += 1
            if last:
                out[k + 1] = y
                k += 1
                if k < nlev - 1:
                    _rhs(t, y, k, ks[0], levels, wgrid, xg0, dx, xk, pk, d0, d1, lin, sl, sr, va, vb)
            else:
                ks[0][:] = ks[6]
            h_prop = min(hmax, h * fac)
        else:
            n_rej += 1
            h_prop = h * max(MIN_FACTOR, SAFETY * err**-0.2)
    return out, steps[:n_acc].copy(), n_rej, 0


@njit(**_JIT)
def rk4_affine_cos(p_start, T, n_steps, stride, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr):
    m = p_start.size
    h = T / n_steps
    n_out = n_steps // stride
    out = np.empty((n_out + 1, m))
    for j in range(m):
        p0 = p_start[j]
        y = 0.0
        out[0, j] = 0.0
        for k in range(n_steps):
            t = k * h
            ct = c * math.cos(omega * t)
            cm = c * math.cos(omega * (t + 0.5 * h))
            ce = c * math.cos(omega * (t + h))
            k1 = a + b * _inv1(p0 + y, xk, pk, d0, d1, lin, sl, sr) + ct
            k2 = a + b * _inv1(p0 + y + 0.5 * h * k1, xk, pk, d0, d1, lin, sl, sr) + cm
            k3 = a + b * _inv1(p0 + y + 0.5 * h * k2, xk, pk, d0, d1, lin, sl, sr) + cm
            k4 = a + b * _inv1(p0 + y + h * k3, xk, pk, d0, d1, lin, sl, sr) + ce
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if (k + 1) % stride == 0:
                out[(k + 1) // stride, j] = y
    return out


@njit(**_JIT)
def _aff(t, y, p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr):
    return a + b * _inv1(p0 + y, xk, pk, d0, d1, lin, sl, sr) + c * math.cos(omega * t)


@njit(**_JIT)
def _crossing(pa, pb, kinks, margin):
    # fraction of the way from pa to pb at which the first kink past the
    # start margin is met, or 1
    if kinks.size == 0 or pa == pb:
        return 1.0
    pm = pa + margin * (pb - pa)
    lo = min(pm, pb)
    hi = max(pm, pb)
    i0 = _right(kinks, lo)
    i1 = _left(kinks, hi)
    if i1 <= i0:
        return 1.0
    k = kinks[i0] if pb >= pa else kinks[i1 - 1]
    return (k - pa) / (pb - pa)


@njit(**_JIT)
def ode_affine1(p0, stops, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr, kinks, rtol, atol, hmax, kink_margin, kink_refine):
    """Scalar ``c' = a + b P^{-1}(p0 + c) + c cos(omega t)`` from 0 through
    the increasing ``stops`` (last entry is the end time).

    Returns step boundaries, values, slopes at both ends of each step, the
    rejected count and a status (0 ok, 1 step underflow).
    """
    cap = 256
    ts = np.empty(cap)
    ys = np.empty(cap)
    f0 = np.empty(cap)
    f1 = np.empty(cap)
    ts[0] = 0.0
    ys[0] = 0.0
    n = 0
    n_rej = 0
    t = 0.0
    y = 0.0
    k1 = _aff(t, y, p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
    h_prop = min(hmax, stops[0])
    si = 0
    h_cut = -1.0
    h_resume = 0.0
    n_cut = 0
    while si < stops.size:
        t_stop = stops[si]
        remaining = t_stop - t
        if h_cut > 0.0:
            h = h_cut
            last = False
        else:
            last = h_prop >= remaining
            h = remaining if last else h_prop
        if not last and remaining - h <= 64 * 2.220446049250313e-16 * max(1.0, abs(t_stop)):
            h = remaining
            last = True
        if h <= 1e-14 * max(1.0, abs(t)):
            return ts[: n + 1].copy(), ys[: n + 1].copy(), f0[:n].copy(), f1[:n].copy(), n_rej, 1
        k2 = _aff(t + C2 * h, y + h * A21 * k1, p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
        k3 = _aff(t + C3 * h, y + h * (A31 * k1 + A32 * k2), p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
        k4 = _aff(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3), p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
        k5 = _aff(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
        k6 = _aff(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
        ynew = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = _aff(t + h, ynew, p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
        if n_cut < kink_refine:
            theta = _crossing(p0 + y, p0 + ynew, kinks, kink_margin)
            if kink_margin < theta < 1.0 - kink_margin:
                if h_cut <= 0.0:
                    h_resume = h_prop
                h_cut = theta * h
                n_cut += 1
                continue
        errv = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        err = abs(errv) / (atol + rtol * max(abs(y), abs(ynew)))
        if err <= 1.0:
            if err == 0.0:
                fac = MAX_FACTOR
            else:
                fac = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err**-0.2))
            t = t_stop if last else t + h
            y = ynew
            if n + 2 > cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty(cap)
                f02 = np.empty(cap)
                f12 = np.empty(cap)
                ts2[: n + 1] = ts[: n + 1]
                ys2[: n + 1] = ys[: n + 1]
                f02[:n] = f0[:n]
                f12[:n] = f1[:n]
                ts, ys, f0, f1 = ts2, ys2, f02, f12
            f0[n] = k1
            f1[n] = k7
            n += 1
            ts[n] = t
            ys[n] = y
            if last:
                si += 1
                k1 = _aff(t, y, p0, a, b, c, omega, xk, pk, d0, d1, lin, sl, sr)
            else:
                k1 = k7
            h_prop = min(hmax, h * fac)
            if h_cut > 0.0:
                h_prop = max(h_prop, h_resume)
            h_cut = -1.0
            n_cut = 0
        else:
            n_rej += 1
            h_prop = h * max(MIN_FACTOR, SAFETY * err**-0.2)
            h_cut = -1.0
            n_cut = 0
    return ts[: n + 1].copy(), ys[: n + 1].copy(), f0[:n].copy(), f1[:n].copy(), n_rej, 0


# ---------------------------------------------------------------------------
# characteristics driven by the exact nonlocal term of stored node positions


@njit(**_JIT)
def _w_walk(x, node_p, cum, edges, heights, jpos, xk, pk, d0, d1, lin, sl, sr):
    # exact w(x) for the masses carried by node_p; jpos holds one search
    # pointer per kernel edge so nearly sorted queries cost O(1) each
    n = node_p.size - 1
    acc = 0.0
    q_prev = 0.0
    for m in range(edges.size):
        pp = _fwd1(x + edges[m], xk, pk, d0, d1, lin, sl, sr)
        j = jpos[m]
        while j > 0 and node_p[j] > pp:
            j -= 1
        while j < n and node_p[j + 1] <= pp:
            j += 1
        jpos[m] = j
        if pp < node_p[0]:
            q = 0.0
        elif j >= n:
            q = cum[n]
        else:
            q = cum[j] + (pp - node_p[j]) / (node_p[j + 1] - node_p[j]) * (cum[j + 1] - cum[j])
        if m > 0:
            acc += heights[m - 1] * (q - q_prev)
        q_prev = q
    return acc


@njit(**_JIT)
def _herm(s, h, a0, a1, m0, m1):
    # written relative to a0 so rounding scales with a1 - a0, not with a0
    s2 = s * s
    return a0 + (a1 - a0) * (3 * s2 - 2 * s2 * s) + h * (m0 * (s2 * s - 2 * s2 + s) + m1 * (s2 * s - s2))


@njit(**_JIT)
def _herm_inv(s, p, h, a0, a1, m0, m1):
    for _ in range(NEWTON_MAX):
        s2 = s * s
        val = (a0 - p) + (a1 - a0) * (3 * s2 - 2 * s2 * s) + h * (m0 * (s2 * s - 2 * s2 + s) + m1 * (s2 * s - s2))
        der = (a1 - a0) * (6 * s - 6 * s2) + h * (m0 * (3 * s2 - 4 * s + 1) + m1 * (3 * s2 - 2 * s))
        step = val / der
        s = min(max(s - step, 0.0), 1.0)
        if abs(step) <= 1e-15:
            break
    return s


@njit(**_JIT)
def _rhs_l(t, p, kf, out, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb):
    # Node positions are interpolated in time, then convolved exactly: a kink
    # of w travels with the nodes that cause it instead of being smeared.
    # Everything is fused into one loop with walking search pointers (queries
    # arrive nearly sorted); helper calls taking arrays are far slower here.
    if vb == 0.0 or heights.size == 0:
        for i in range(p.size):
            out[i] = va
        return
    theta = (t - flev[kf]) / (flev[kf + 1] - flev[kf])
    for j in range(pbuf.size):
        pbuf[j] = plev[kf, j] + theta * (plev[kf + 1, j] - plev[kf, j])
    ne = edges.size
    nk = xk.size - 1
    nn = pbuf.size - 1
    jx = np.zeros(ne + 1, dtype=np.int64)  # xk pointers per edge, last slot for the inverse
    for m in range(ne):
        jpos[m] = 0
    for i in range(p.size):
        # x = P^{-1}(p_i)
        pi = p[i]
        k = jx[ne]
        while k > 0 and pk[k] > pi:
            k -= 1
        while k < nk and pk[k + 1] <= pi:
            k += 1
        jx[ne] = k
        if nk < 0 or pi < pk[0]:
            x = xk[0] + (pi - pk[0]) / sl
        elif k >= nk:
            x = xk[nk] + (pi - pk[nk]) / sr
        else:
            hh = xk[k + 1] - xk[k]
            s = (pi - pk[k]) / (pk[k + 1] - pk[k])
            if not lin[k]:
                s = _herm_inv(s, pi, hh, pk[k], pk[k + 1], d0[k], d1[k])
            x = xk[k] + s * hh
        acc = 0.0
        q_prev = 0.0
        for m in range(ne):
            # pp = P(x + e_m)
            y = x + edges[m]
            k = jx[m]
            while k > 0 and xk[k] > y:
                k -= 1
            while k < nk and xk[k + 1] <= y:
                k += 1
            jx[m] = k
            if nk < 0 or y < xk[0]:
                pp = pk[0] + sl * (y - xk[0])
            elif k >= nk:
                pp = pk[nk] + sr * (y - xk[nk])
            else:
                hh = xk[k + 1] - xk[k]
                s = (y - xk[k]) / hh
                if lin[k]:
                    pp = pk[k] + s * (pk[k + 1] - pk[k])
                else:
                    pp = _herm(s, hh, pk[k], pk[k + 1], d0[k], d1[k])
            # cumulative mass left of pp
            j = jpos[m]
            while j > 0 and pbuf[j] > pp:
                j -= 1
            while j < nn and pbuf[j + 1] <= pp:
                j += 1
            jpos[m] = j
            if pp < pbuf[0]:
                q = 0.0
            elif j >= nn:
                q = cum[nn]
            else:
                q = cum[j] + (pp - pbuf[j]) / (pbuf[j + 1] - pbuf[j]) * (cum[j + 1] - cum[j])
            if m > 0:
                acc += heights[m - 1] * (q - q_prev)
            q_prev = q
        out[i] = va + vb * acc


@njit(**_JIT)
def _dp_step_l(t, y, h, kf, ks, ytmp, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb):
    n = y.size
    k1, k2, k3, k4, k5, k6, k7 = ks[0], ks[1], ks[2], ks[3], ks[4], ks[5], ks[6]
    yy = ytmp[2]
    for i in range(n):
        yy[i] = y[i] + h * (A21 * k1[i])
    _rhs_l(t + C2 * h, yy, kf, k2, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
    _rhs_l(t + C3 * h, yy, kf, k3, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    _rhs_l(t + C4 * h, yy, kf, k4, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    _rhs_l(t + C5 * h, yy, kf, k5, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        yy[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
    _rhs_l(t + h, yy, kf, k6, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    ynew = ytmp[0]
    for i in range(n):
        ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
    _rhs_l(t + h, ynew, kf, k7, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    err = ytmp[1]
    for i in range(n):
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])


@njit(**_JIT)
def _bracket(flev, t):
    kf = _right(flev, t) - 1
    return min(max(kf, 0), flev.size - 2)


@njit(**_JIT)
def advance_lagr(p0, levels, flev, plev, cum, edges, heights, xk, pk, d0, d1, lin, sl, sr, va, vb, rtol, atol, hmax, fixed_steps):
    """Like ``advance`` but with ``w`` evaluated exactly from node positions
    ``plev`` stored at field levels ``flev`` (linear in time between them).
    Every field level inside the range must also be an output level."""
    n = p0.size
    nlev = levels.size
    out = np.empty((nlev, n))
    y = p0.copy()
    out[0] = y
    ks = np.empty((7, n))
    ytmp = np.empty((3, n))
    jpos = np.zeros(max(edges.size, 1), dtype=np.int64)
    pbuf = np.empty(plev.shape[1])
    cap = 64
    steps = np.empty(cap)
    n_acc = 0
    n_rej = 0
    t = levels[0]
    k = 0
    kf = _bracket(flev, t)
    _rhs_l(t, y, kf, ks[0], flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)

    if fixed_steps.size > 0:
        for s in range(fixed_steps.size):
            t_new = fixed_steps[s]
            h = t_new - t
            _dp_step_l(t, y, h, kf, ks, ytmp, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
            y[:] = ytmp[0]
            t = t_new
            if t == levels[k + 1]:
                out[k + 1] = y
                k += 1
                kf = _bracket(flev, t)
            if k < nlev - 1:
                _rhs_l(t, y, kf, ks[0], flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
        return out, fixed_steps.copy(), 0, 0

    h_prop = min(hmax, levels[1] - t)
    while k < nlev - 1:
        t_stop = levels[k + 1]
        remaining = t_stop - t
        last = h_prop >= remaining
        h = remaining if last else h_prop
        if h <= 1e-14 * max(1.0, abs(t)):
            return out, steps[:n_acc], n_rej, 1
        _dp_step_l(t, y, h, kf, ks, ytmp, flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
        ynew = ytmp[0]
        errv = ytmp[1]
        err = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e = abs(errv[i]) / sc
            if e > err:
                err = e
        if err <= 1.0:
            if err == 0.0:
                fac = MAX_FACTOR
            else:
                fac = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err**-0.2))
            t = t_stop if last else t + h
            y[:] = ynew
            if n_acc == cap:
                grown = np.empty(2 * cap)
                grown[:cap] = steps
                steps = grown
                cap *= 2
            steps[n_acc] = t
            n_acc += 1
            if last:
                out[k + 1] = y
                k += 1
                if k < nlev - 1:
                    kf = _bracket(flev, t)
                    _rhs_l(t, y, kf, ks[0], flev, plev, cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
            else:
                ks[0][:] = ks[6]
            h_prop = min(hmax, h * fac)
        else:
            n_rej += 1
            h_prop = h * max(MIN_FACTOR, SAFETY * err**-0.2)
    return out, steps[:n_acc].copy(), n_rej, 0


@njit(**_JIT)
def _grid_gap(xg, pa, pb, cum, edges, heights, xk, pk, d0, d1, lin, sl, sr):
    # sup over grid points of |w[pa] - w[pb]|, restricted to where either is nonzero
    n = pa.size
    lo = min(_inv1(pa[0], xk, pk, d0, d1, lin, sl, sr), _inv1(pb[0], xk, pk, d0, d1, lin, sl, sr)) - edges[edges.size - 1]
    hi = max(_inv1(pa[n - 1], xk, pk, d0, d1, lin, sl, sr), _inv1(pb[n - 1], xk, pk, d0, d1, lin, sl, sr)) - edges[0]
    ja = np.zeros(edges.size, dtype=np.int64)
    jb = np.zeros(edges.size, dtype=np.int64)
    gap = 0.0
    for i in range(xg.size):
        x = xg[i]
        if x < lo or x > hi:
            continue
        wa = _w_walk(x, pa, cum, edges, heights, ja, xk, pk, d0, d1, lin, sl, sr)
        wb = _w_walk(x, pb, cum, edges, heights, jb, xk, pk, d0, d1, lin, sl, sr)
        d = abs(wa - wb)
        if d > gap:
            gap = d
    return gap


@njit(**_JIT)
def picard_window(p_start, t0, t1, cum, edges, heights, xg, xk, pk, d0, d1, lin, sl, sr, va, vb, rtol, atol, tol, max_iter):
    """Fixed-point iteration for the node positions at ``t1``.

    The iterate is the set of node positions at ``t1``; on the window ``w`` is
    the exact term of positions interpolated linearly between the start and
    the iterate.
    The first guess is an explicit Euler step. Returns ``(p_end, history,
    status)`` with status 0 converged, 1 step underflow, 2 no convergence,
    3 characteristics crossed.
    """
    n = p_start.size
    flev = np.empty(2)
    flev[0] = t0
    flev[1] = t1
    plev = np.empty((2, n))
    plev[0] = p_start
    f0 = np.empty(n)
    jpos = np.zeros(max(edges.size, 1), dtype=np.int64)
    pbuf = np.empty(n)
    _rhs_l(t0, p_start, 0, f0, flev, _dup(p_start), cum, edges, heights, jpos, pbuf, xk, pk, d0, d1, lin, sl, sr, va, vb)
    for i in range(n):
        plev[1, i] = p_start[i] + (t1 - t0) * f0[i]
    hist = np.zeros(max_iter)
    steps = np.zeros(0)
    for it in range(max_iter):
        out, st, n_rej, status = advance_lagr(
            p_start, flev, flev, plev, cum, edges, heights, xk, pk, d0, d1, lin, sl, sr, va, vb, rtol, atol, t1 - t0, steps
        )
        pn = out[1]
        if status != 0:
            return pn, hist[:it], 1
        for i in range(n - 1):
            if not pn[i + 1] > pn[i]:
                return pn, hist[:it], 3
        if vb == 0.0 or heights.size == 0:
            hist[it] = 0.0
            return pn.copy(), hist[: it + 1], 0
        hist[it] = _grid_gap(xg, plev[1], pn, cum, edges, heights, xk, pk, d0, d1, lin, sl, sr)
        plev[1] = pn
        steps = st
        if hist[it] <= tol:
            return pn.copy(), hist[: it + 1], 0
    return plev[1].copy(), hist, 2


@njit(**_JIT)
def _dup(p):
    out = np.empty((2, p.size))
    out[0] = p
    out[1] = p
    return out

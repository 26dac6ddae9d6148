import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from discflow.disc_ode import (
    SurrogateZ,
    derivative_bounds,
    derivative_bounds_report,
    deriv_time_continuity,
    explicit_deriv_smooth,
    fd_derivative_x0,
    filippov_enclosure,
    osgood_certificate,
    solve_caratheodory,
    solve_trajectory,
    stability_bound,
    z_eval,
    z_invert,
)
from discflow.funcrep import (
    InvalidParameterError,
    LipschitzField,
    PiecewiseConstantFn,
    VelocityFn,
    integrate,
    mollify,
    sgn_sin_velocity,
)

ONE = VelocityFn(PiecewiseConstantFn.constant(1.0))
TWO = VelocityFn(PiecewiseConstantFn.constant(2.0))
STEP = VelocityFn(PiecewiseConstantFn.step(0.0, 1.0, 2.0))
LAM1 = LipschitzField.constant(1.0)
LAM0 = LipschitzField.constant(0.0)
RELAX = LipschitzField.affine_cos(a=1.0, b=-1.0, window=(-2.0, 2.0))
FIG1 = sgn_sin_velocity()


@st.composite
def velocities(draw, max_jumps=8):
    n = draw(st.integers(0, max_jumps))
    bp = np.linspace(-2.0, 2.0, n) + np.array(draw(st.lists(st.floats(-0.1, 0.1), min_size=n, max_size=n)))
    bp = np.sort(bp)
    if n > 1 and np.min(np.diff(bp)) < 1e-3:
        bp = np.linspace(-2.0, 2.0, n)
    vals = draw(st.lists(st.floats(0.5, 4.0), min_size=n + 1, max_size=n + 1))
    return VelocityFn(PiecewiseConstantFn(bp, vals))


def _z_reference(v, x0, x):
    """Independent ``int_{x0}^x 1/v`` through the piecewise-constant integral."""
    return integrate(v.base.map(lambda a: 1.0 / a), x0, x)


# Z-map --------------------------------------------------------------------------


def test_z_eval_examples():
    assert float(z_eval(ONE, 0.0, 2.0)) == 2.0
    assert float(z_eval(STEP, -1.0, 1.0)) == pytest.approx(1.5, abs=1e-15)
    assert float(z_eval(STEP, 0.3, 0.3)) == 0.0


def test_z_invert_examples():
    assert float(z_invert(ONE, 0.25, 3.0)) == pytest.approx(3.25, abs=1e-15)
    assert float(z_invert(STEP, -1.0, 1.5)) == pytest.approx(1.0, abs=1e-15)
    assert float(z_invert(STEP, -0.4, 0.0)) == pytest.approx(-0.4, abs=1e-15)


@given(velocities(), st.floats(-3, 3), st.floats(-3, 3))
def test_z_matches_reference_and_round_trips(v, x0, x):
    z = float(z_eval(v, x0, x))
    assert z == pytest.approx(_z_reference(v, x0, x), abs=1e-12)
    assert float(z_invert(v, x0, z)) == pytest.approx(x, abs=1e-12)


@given(velocities(), st.floats(-3, 3))
def test_z_slopes_within_velocity_bounds(v, x0):
    x = np.linspace(-3, 3, 301)
    z = z_eval(v, x0, x)
    slopes = np.diff(z) / np.diff(x)
    assert np.all(slopes >= 1.0 / v.upper_bound * (1 - 1e-12))
    assert np.all(slopes <= 1.0 / v.lower_bound * (1 + 1e-12))
    lo, hi = SurrogateZ(v, x0).slope_bounds
    assert lo == pytest.approx(1.0 / v.upper_bound) and hi == pytest.approx(1.0 / v.lower_bound)


def test_z_invert_lipschitz_in_u():
    u = np.linspace(-2, 2, 4001)
    x = z_invert(FIG1, -0.5, u)
    assert np.max(np.abs(np.diff(x) / np.diff(u))) <= FIG1.upper_bound * (1 + 1e-12)


def test_z_round_trip_for_mollified_velocity():
    m = mollify(FIG1, 0.0125)
    x = np.linspace(-1.5, 1.5, 10_001)
    back = z_invert(m, 0.0, z_eval(m, 0.0, x))
    assert np.max(np.abs(back - x)) <= 1e-12


# Caratheodory curve ------------------------------------------------------------


def test_caratheodory_constant_and_zero_fields():
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(solve_caratheodory(STEP, LAM1, -0.3, 1.0)(t)[:, 0], t, atol=1e-14)
    np.testing.assert_allclose(solve_caratheodory(STEP, LAM0, -0.3, 1.0)(t)[:, 0], 0.0, atol=1e-15)


def test_caratheodory_linear_closed_form():
    # v = 2, lambda = 1 - x, x0 = 0: Z^{-1}(u) = 2u so c' = 1 - 2c
    t = np.linspace(0, 1, 21)
    c = solve_caratheodory(TWO, RELAX, 0.0, 1.0, tol=1e-11, stops=t)(t)[:, 0]
    np.testing.assert_allclose(c, (1 - np.exp(-2 * t)) / 2, atol=1e-10)


def test_caratheodory_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        solve_caratheodory(ONE, LAM1, 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        solve_caratheodory(ONE, LAM1, 0.0, 1.0, tol=0.0)


# trajectories --------------------------------------------------------------------


def test_unit_transport():
    tr = solve_trajectory(ONE, LAM1, [0.0, 1.5], 1.0)
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(tr(t), np.array([0.0, 1.5]) + t[:, None], atol=1e-14)


def test_linear_closed_form_trajectory():
    t = np.linspace(0, 1, 21)
    tr = solve_trajectory(TWO, RELAX, 0.0, 1.0, tol=1e-11, t_eval=t)
    np.testing.assert_allclose(tr(t), 1 - np.exp(-2 * t), atol=1e-9)
    assert tr.residual_ok


def _exact_unit_field(v, x0, t):
    # X(t) solves Z(x0; X) = t; bracket with the slope bounds
    a, b = x0 + t * v.lower_bound - 1e-9, x0 + t * v.upper_bound + 1e-9
    return brentq(lambda x: _z_reference(v, x0, x) - t, a, b, xtol=1e-15, rtol=1e-15)


@pytest.mark.parametrize("x0", [-1.0, -0.5, 0.0])
def test_oscillating_velocity_unit_field_matches_exact_inversion(x0):
    ts = np.linspace(0, 1, 41)
    tr = solve_trajectory(FIG1, LAM1, x0, 1.0, t_eval=ts)
    exact = np.array([_exact_unit_field(FIG1, x0, t) for t in ts])
    assert np.max(np.abs(tr(ts) - exact)) <= 1e-8
    # slopes of the piecewise-linear exact solution are 1 or 3
    speeds = np.diff(exact) / np.diff(ts)
    assert np.all((speeds >= 1 - 1e-6) & (speeds <= 3 + 1e-6))


@pytest.mark.parametrize("lam", [LAM1, RELAX, LipschitzField.affine_cos(c=1.0, omega=2 * np.pi)], ids=["const", "affine", "cos"])
def test_trajectory_invariants(lam):
    tr = solve_trajectory(FIG1, lam, np.array([-1.0, -0.5, 0.0]), 1.0)
    assert tr.residual_ok
    np.testing.assert_array_equal(tr(0.0), [-1.0, -0.5, 0.0])
    t = np.linspace(0, 1, 2001)
    X = tr(t)
    speed = np.abs(np.diff(X, axis=0)) / np.diff(t)[:, None]
    assert speed.max() <= FIG1.upper_bound * lam.sup_bound * (1 + 1e-6)
    c = tr.curve(t)
    assert np.all(np.abs(c) <= t[:, None] * lam.sup_bound + 1e-12)


@given(velocities(max_jumps=5), st.floats(-1, 1), st.floats(0.1, 1.0))
def test_trajectory_residual_certificate(v, x0, T):
    tr = solve_trajectory(v, RELAX, x0, T)
    assert tr.residual <= 10 * tr.tol


# derivative with respect to x0 -------------------------------------------------


def test_fd_derivative_examples():
    t = np.array([0.25, 0.5, 1.0])
    np.testing.assert_allclose(fd_derivative_x0(ONE, LAM1, 0.0, t), 1.0, atol=1e-8)
    np.testing.assert_allclose(fd_derivative_x0(ONE, RELAX, 0.0, t), np.exp(-t), atol=1e-6)
    r = fd_derivative_x0(FIG1, LAM1, -0.5, 1.0)
    assert 1 / 3 <= r <= 3


def test_derivative_bounds_for_unit_field():
    lo, hi = derivative_bounds(FIG1, LAM1, 1.0)
    assert lo == pytest.approx(1 / 3) and hi == pytest.approx(3.0)


def test_fd_derivative_rejects_bad_step():
    with pytest.raises(InvalidParameterError):
        fd_derivative_x0(ONE, LAM1, 0.0, 1.0, h=0.0)
    with pytest.raises(InvalidParameterError):
        fd_derivative_x0(ONE, LAM1, 0.0, 1.0, scheme="backward")


@pytest.mark.parametrize("x0", [-1.0, -0.5, 0.0])
def test_secant_ratios_within_improved_bounds(x0):
    r = derivative_bounds_report(FIG1, RELAX, x0, np.linspace(0.05, 1.0, 20))
    assert r.ok


def test_explicit_derivative_examples():
    assert explicit_deriv_smooth(mollify(TWO, 0.1), LAM1, 0.3, 0.7) == pytest.approx(1.0, abs=1e-12)
    assert explicit_deriv_smooth(mollify(ONE, 0.1), RELAX, 0.0, 0.8) == pytest.approx(math.exp(-0.8), rel=1e-9)
    with pytest.raises(InvalidParameterError):
        explicit_deriv_smooth(FIG1, LAM1, 0.0, 0.5)


def test_explicit_derivative_agrees_with_secant_for_mollified_velocity():
    m = mollify(FIG1, 0.05)
    for lam in (LAM1, RELAX):
        exact = explicit_deriv_smooth(m, lam, -0.5, 0.5, tol=1e-11)
        fd = float(fd_derivative_x0(m, lam, -0.5, 0.5, h=1e-6, tol=1e-11))
        assert abs(exact - fd) <= 1e-4


# stability ---------------------------------------------------------------------


def test_stability_reflexive():
    b = stability_bound(STEP, STEP, RELAX, RELAX, 0.2, 0.2, 1.0)
    assert b.strong == 0.0 and b.weak == 0.0


def test_stability_shifted_initial_value():
    t = 0.8
    b = stability_bound(FIG1, FIG1, LAM1, LAM1, -0.5, -0.4, t)
    X = solve_trajectory(FIG1, LAM1, np.array([-0.5, -0.4]), t)(t)
    assert abs(X[1] - X[0]) <= b.strong
    assert b.strong >= (FIG1.upper_bound / FIG1.lower_bound) * 0.1 - 1e-15


def test_weak_estimate_shrinks_linearly_for_mollified_velocity():
    for eps in (0.1, 0.05, 0.025):
        b = stability_bound(FIG1, mollify(FIG1, eps), LAM1, LAM1, -0.5, -0.5, 1.0)
        assert b.gap_Y <= 2 * eps * FIG1.upper_bound + 1e-12
        linear = b.growth * FIG1.upper_bound / FIG1.lower_bound**2 * 2 * eps * FIG1.upper_bound
        assert b.weak <= linear + 1e-12


@given(velocities(max_jumps=4), st.floats(-0.1, 0.1), st.floats(0.1, 1.0))
def test_stability_estimate_holds_for_perturbed_velocity(v, dx0, t):
    vt = VelocityFn(v.base.map(lambda a: a * 1.1))
    X = float(solve_trajectory(v, RELAX, 0.0, t)(t))
    Xt = float(solve_trajectory(vt, RELAX, dx0, t)(t))
    assert abs(X - Xt) <= stability_bound(v, vt, RELAX, RELAX, 0.0, dx0, t).strong * (1 + 1e-9)


# Filippov and Osgood -----------------------------------------------------------


def test_filippov_examples():
    e = filippov_enclosure(ONE, LAM1, 0.0, 0.3)
    assert (e.lo, e.hi) == (1.0, 1.0)
    e = filippov_enclosure(STEP, LAM1, 0.0, 0.0)
    assert (e.lo, e.hi) == (1.0, 2.0)


def test_filippov_contains_one_sided_quotients():
    tr = solve_trajectory(FIG1, LAM1, -0.5, 1.0)
    ts = np.linspace(0.001, 0.999, 500)
    q = tr.difference_quotient(ts)
    X = tr(ts)
    inside = [filippov_enclosure(FIG1, LAM1, t, x).contains(d, 1e-6) for t, x, d in zip(ts, X, q)]
    assert np.mean(inside) >= 0.99


def test_osgood_examples():
    ident = LipschitzField.affine_cos(b=1.0, window=(-1, 1))
    c = osgood_certificate(STEP, ident)
    assert c.unique and c.bad_set_measure == 0.0 and c.osgood_slope == 2.0
    c = osgood_certificate(STEP, LAM0)
    assert c.unique and c.osgood_slope == 0.0
    with pytest.raises(InvalidParameterError):
        osgood_certificate(STEP, LipschitzField.affine_cos(c=1.0, omega=1.0))


# time continuity ----------------------------------------------------------------


def test_time_continuity_same_time_is_zero():
    assert deriv_time_continuity(FIG1, LAM1, (-1, 0), 0.5, 0.5, n=50).observed == 0.0


def test_time_continuity_linear_closed_form():
    # d X / d x0 = e^{-t} for v = 1, lambda = 1 - x
    t, tt = 0.3, 0.6
    r = deriv_time_continuity(ONE, RELAX, (0.0, 1.0), t, tt, n=200)
    assert r.observed == pytest.approx(abs(math.exp(-t) - math.exp(-tt)), abs=1e-6)
    assert r.observed <= abs(t - tt) and r.ok


def test_time_continuity_oscillating_velocity():
    r = deriv_time_continuity(FIG1, LAM1, (-1.0, 0.0), 0.5, 0.6, n=400)
    assert r.ok

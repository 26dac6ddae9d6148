import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from discflow.funcrep import (
    InvalidParameterError,
    Kernel,
    LipschitzField,
    PiecewiseConstantFn,
    VelocityFn,
    integrate,
    l1_distance,
    mollify,
    primitive_gap,
    sgn_sin_velocity,
    total_variation,
)

STEP = PiecewiseConstantFn.step(0.0, 1.0, 2.0)


@st.composite
def pcfs(draw, min_jumps=0, max_jumps=6, lo=-3.0, hi=3.0):
    n = draw(st.integers(min_jumps, max_jumps))
    bp = draw(st.lists(st.floats(-2.0, 2.0), min_size=n, max_size=n, unique=True))
    bp = sorted(bp)
    if any(b - a < 1e-3 for a, b in zip(bp, bp[1:])):
        bp = list(np.linspace(-2.0, 2.0, n)) if n else []
    vals = draw(st.lists(st.floats(lo, hi), min_size=len(bp) + 1, max_size=len(bp) + 1))
    return PiecewiseConstantFn(bp, vals)


# construction ----------------------------------------------------------------


def test_rejects_bad_shapes():
    with pytest.raises(InvalidParameterError):
        PiecewiseConstantFn([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        PiecewiseConstantFn([1.0, 0.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidParameterError):
        PiecewiseConstantFn([0.0], [1.0, np.inf])


def test_velocity_lower_bound_is_checked():
    with pytest.raises(InvalidParameterError):
        VelocityFn(PiecewiseConstantFn.constant(0.0))
    with pytest.raises(InvalidParameterError):
        VelocityFn(STEP, lower_bound=1.5)
    assert VelocityFn(STEP).lower_bound == 1.0


def test_right_continuous_with_left_limits():
    assert STEP(0.0) == 2.0
    assert STEP.left_limit(0.0) == 1.0
    assert STEP(-1e-300) == 1.0


# integrate ---------------------------------------------------------------------


def test_integrate_examples():
    assert integrate(PiecewiseConstantFn.constant(1.0), 0.0, 2.0) == 2.0
    assert integrate(STEP, -1.0, 1.0) == 3.0
    assert integrate(STEP, 0.7, 0.7) == 0.0


@given(pcfs(), st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_antisymmetric_and_matches_quadrature(f, a, b):
    assert integrate(f, a, b) == pytest.approx(-integrate(f, b, a), abs=1e-12)
    lo, hi = min(a, b), max(a, b)
    if hi - lo > 1e-6:
        ref = quad(lambda x: float(f(x)), lo, hi, points=[p for p in f.breakpoints if lo < p < hi] or None, limit=200)[0]
        assert integrate(f, lo, hi) == pytest.approx(ref, abs=1e-9)


@given(pcfs(), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_additive(f, a, b, c):
    assert integrate(f, a, c) == pytest.approx(integrate(f, a, b) + integrate(f, b, c), abs=1e-11)


# total variation ---------------------------------------------------------------


def test_total_variation_examples():
    assert total_variation(PiecewiseConstantFn.constant(4.0), -1.0, 1.0) == 0.0
    assert total_variation(STEP, -1.0, 1.0) == 1.0


def test_total_variation_of_oscillating_velocity():
    # jumps at x = -1/k for k = 2..9 lie in (-1, -0.1), each of height 2
    v = sgn_sin_velocity()
    assert total_variation(v.base, -1.0, -0.1) == 16.0


@given(pcfs(max_jumps=5))
def test_total_variation_matches_sampling(f):
    # a fine grid that hits every piece gives the exact variation
    x = np.sort(np.concatenate((np.linspace(-2.5, 2.5, 4001), f.breakpoints, f.breakpoints - 1e-9)))
    est = float(np.abs(np.diff(f(x))).sum())
    assert total_variation(f, -2.6, 2.6) == pytest.approx(est, abs=1e-12)


def test_total_variation_needs_ordered_interval():
    with pytest.raises(InvalidParameterError):
        total_variation(STEP, 1.0, 1.0)


# mollify -------------------------------------------------------------------------


def test_mollify_constant_is_identity():
    m = mollify(PiecewiseConstantFn.constant(3.0), 0.2)
    x = np.linspace(-2, 2, 101)
    np.testing.assert_allclose(m(x), 3.0, rtol=0, atol=1e-15)


def test_mollify_step_examples():
    m = mollify(STEP, 0.1)
    assert m(-0.2) == pytest.approx(1.0, abs=1e-15)
    assert m(0.2) == pytest.approx(2.0, abs=1e-15)
    x = np.linspace(-0.1, 0.1, 201)
    assert np.all(np.diff(m(x)) >= 0.0)


def _hat_convolution(f, eps, x):
    def integrand(s):
        return float(f(x - s)) * max(1.0 - abs(s) / eps, 0.0) / eps

    pts = sorted({x - b for b in f.breakpoints if abs(x - b) < eps} | {0.0})
    return quad(integrand, -eps, eps, points=pts, limit=200)[0]


@given(pcfs(min_jumps=1, max_jumps=4), st.floats(0.02, 0.5), st.floats(-2.5, 2.5))
def test_mollify_matches_direct_convolution(f, eps, x):
    m = mollify(f, eps)
    assert float(m(x)) == pytest.approx(_hat_convolution(f, eps, x), abs=1e-9)


@given(pcfs(min_jumps=1, max_jumps=4), st.floats(0.02, 0.5))
def test_mollify_range_and_lipschitz(f, eps):
    m = mollify(f, eps)
    x = np.linspace(-3, 3, 2001)
    y = m(x)
    assert np.all(y >= f.inf - 1e-12) and np.all(y <= f.sup + 1e-12)
    # the hat peak is 1/eps; jumps of total height J change v_eps by at most J/eps per unit
    slope = np.abs(np.diff(y) / np.diff(x))
    assert slope.max() <= (f.sup - f.inf) / eps * (1 + 1e-9) + 1e-9
    assert np.abs(m.derivative(x)).max() <= m.lip_bound * (1 + 1e-12) + 1e-12


@given(pcfs(min_jumps=1, max_jumps=4), st.floats(0.02, 0.5), st.floats(-2.5, 2.5))
def test_mollify_primitive_matches_quadrature(f, eps, x):
    m = mollify(f, eps)
    pts = sorted(set(np.asarray(m.breakpoints)[(m.breakpoints > min(0, x)) & (m.breakpoints < max(0, x))]))
    ref = quad(lambda s: float(m(s)), 0.0, x, points=pts or None, limit=400)[0]
    assert float(m.primitive(x)) == pytest.approx(ref, abs=1e-9)


def test_mollify_derivative_matches_finite_difference():
    m = mollify(STEP, 0.1)
    # avoid the kink of the derivative at the hat peak x = 0
    x = np.linspace(-0.0925, 0.0875, 37)
    h = 1e-6
    np.testing.assert_allclose(m.derivative(x), (m(x + h) - m(x - h)) / (2 * h), atol=1e-6)


def test_mollify_rejects_nonpositive_width():
    with pytest.raises(InvalidParameterError):
        mollify(STEP, 0.0)


# primitive gap --------------------------------------------------------------------


def test_primitive_gap_examples():
    assert primitive_gap(STEP, STEP) == 0.0
    assert primitive_gap(STEP, PiecewiseConstantFn.constant(1.5), R=1.0) == pytest.approx(0.5, abs=1e-15)
    f = PiecewiseConstantFn.step(0.0, 1.0, 3.0)
    assert primitive_gap(f, mollify(f, 0.05)) <= 0.3


@given(pcfs(min_jumps=1, max_jumps=5, lo=0.5, hi=3.0), st.floats(0.01, 0.3))
def test_primitive_gap_of_mollification_is_linear_in_eps(f, eps):
    assert primitive_gap(f, mollify(f, eps), R=2.0) <= 2 * eps * f.sup_abs + 1e-12


def test_primitive_gap_closed_form_for_smooth_g():
    # f - g = -1/2 - y/2 left of 0 and 1/2 - y/2 right of 0 for g(y) = 3/2 + y/2;
    # the primitive is |y|/2 - y^2/4 in absolute value, largest at |y| = 1
    gap = primitive_gap(STEP, lambda x: 1.5 + 0.5 * np.asarray(x), R=1.0)
    assert gap == pytest.approx(0.25, abs=1e-13)


# l1 distance ---------------------------------------------------------------------


@given(pcfs(), pcfs())
def test_l1_distance_triangle(f, g):
    z = PiecewiseConstantFn.constant(0.0)
    assert l1_distance(f, g, -3, 3) <= l1_distance(f, z, -3, 3) + l1_distance(z, g, -3, 3) + 1e-12


# Lipschitz fields and kernels ---------------------------------------------------


def test_affine_field_sampled_bounds(rng):
    lam = LipschitzField.affine_cos(a=1.0, b=-1.0, c=0.5, omega=3.0, window=(-1, 1))
    assert lam.sup_bound == 2.5 and lam.lip_x_bound == 1.0
    assert lam.sampled_check((-1, 1), 1.0, rng) == (True, True)


def test_affine_field_needs_window_for_sup():
    with pytest.raises(InvalidParameterError):
        LipschitzField.affine_cos(a=1.0, b=2.0)


def test_box_kernel_invariants():
    g = Kernel.box(10.0, 0.1)
    assert g.l1_norm == pytest.approx(1.0)
    assert g.monotone_decreasing
    # monotone decreasing kernels have TV on (0, inf) equal to gamma(0)
    assert g.tv_positive == pytest.approx(g.value_at_zero)
    assert g.tv_seminorm == pytest.approx(20.0)


def test_kernel_rejects_negative_support():
    with pytest.raises(InvalidParameterError):
        Kernel(PiecewiseConstantFn([-0.1, 0.1], [0.0, 1.0, 0.0]))
    with pytest.raises(InvalidParameterError):
        Kernel(PiecewiseConstantFn([0.0, 0.1], [0.0, -1.0, 0.0]))


def test_oscillating_velocity_truncation():
    v = sgn_sin_velocity(cutoff=1e-3)
    assert v.lower_bound == 1.0 and v.upper_bound == 3.0
    # 2 * 1000 candidate jumps at +-1/k, all genuine sign changes
    assert v.breakpoints.size == 2000
    assert v(0.0) == 2.0
    x = np.array([-0.75, -0.4, 0.3, 0.7])
    np.testing.assert_array_equal(v(x), np.sign(np.sin(np.pi / x)) + 2.0)

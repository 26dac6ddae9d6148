import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from discflow.funcrep import InvalidParameterError, Kernel, PiecewiseConstantFn, VelocityFn
from discflow.nonlocal_ import (
    AffineLaw,
    AssumptionError,
    NonlocalTerm,
    Scenario,
    apply_F,
    fixed_point_solve,
    flow_map,
    horizon_estimate,
    mass,
    max_principle_audit,
    max_principle_bound,
    omega_bounds,
    weak_error,
)
from discflow.scenario import load_scenario

Q0 = PiecewiseConstantFn.indicator(-0.5, -0.1, 0.5)
BOX = Kernel.box(10.0, 0.1)
ONE = VelocityFn(PiecewiseConstantFn.constant(1.0))
UP = VelocityFn(PiecewiseConstantFn.step(0.0, 1.0, 2.0))
DOWN = VelocityFn(PiecewiseConstantFn.step(0.0, 1.0, 0.5), 0.5)
TRAFFIC = AffineLaw(1.0, -1.0)


def scenario(v=ONE, q0=Q0, V=TRAFFIC, gamma=BOX, ny=300, nt=20, T=1.0, window=(-3.0, 3.0)):
    return Scenario(q0, gamma, V, v, T, window, ny=ny, nt=nt)


@pytest.fixture(scope="module")
def middle():
    return fixed_point_solve(load_scenario("fig2_middle").with_grid(ny=500, nt=50))


# scenario -------------------------------------------------------------------------


def test_scenario_validation():
    with pytest.raises(InvalidParameterError):
        scenario(T=0.0)
    with pytest.raises(InvalidParameterError):
        scenario(window=(1.0, -1.0))
    with pytest.raises(InvalidParameterError):
        # the initial mass would leave a window this narrow
        scenario(window=(-0.6, 0.2))
    with pytest.raises(InvalidParameterError):
        scenario(q0=PiecewiseConstantFn.constant(1.0))


def test_scenario_json_round_trip():
    sc = load_scenario("fig2_right")
    again = Scenario.from_dict(sc.to_dict())
    assert again.to_dict() == sc.to_dict()
    assert sc.v_min == 0.5 and sc.v_max == 1.0


def test_shipped_scenarios_share_data():
    for name in ("fig2_left", "fig2_middle", "fig2_right"):
        sc = load_scenario(name)
        assert sc.q0_l1 == pytest.approx(0.2)
        assert sc.q0_sup == 0.5
        assert sc.gamma.l1_norm == pytest.approx(1.0) and sc.gamma.tv_seminorm == pytest.approx(20.0)


# horizon --------------------------------------------------------------------------


def test_horizon_constant_law_is_unbounded():
    assert horizon_estimate(scenario(V=AffineLaw.constant(1.0))) == math.inf


def test_horizon_value_for_unit_velocity():
    # K = ||v|| |V'| M' with M' = 42 |gamma|_TV ||q0|| = 420; K T e^{KT} = 1/2
    K = 1.0 * 1.0 * 42 * 20 * 0.5
    ref = brentq(lambda s: s * math.exp(s) - 0.5, 0.0, 1.0) / K
    assert horizon_estimate(load_scenario("fig2_left")) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(8.3746e-4, rel=1e-4)
    # both conditions hold there
    assert math.exp(K * ref) <= 42 and K * ref * math.exp(K * ref) <= 0.5 + 1e-12


def test_horizon_decreases_with_speed():
    fast = VelocityFn(PiecewiseConstantFn.constant(2.0))
    assert horizon_estimate(scenario(v=fast)) < horizon_estimate(scenario())


def test_omega_bounds_formula():
    M, Mp = omega_bounds(load_scenario("fig2_right"))
    # ratio ||v|| / v_min = 2
    assert M == pytest.approx(42 * 1.0 * 0.5 * 2) and Mp == pytest.approx(42 * 20 * 0.5 * 2)


# fixed point ----------------------------------------------------------------------


def test_constant_law_needs_one_iteration_and_translates():
    q0 = PiecewiseConstantFn.indicator(0.0, 1.0)
    sol = fixed_point_solve(scenario(q0=q0, V=AffineLaw.constant(1.0), ny=100, nt=4))
    assert np.all(sol.iterations == 1)
    for t in (0.25, 0.5, 1.0):
        f = sol.density_fn(t)
        np.testing.assert_allclose(f.breakpoints[[0, -1]], [t, 1 + t], atol=1e-12)
        assert f.sup == pytest.approx(1.0, abs=1e-12) and f.inf == 0.0


def test_speed_doubling_halves_density_downstream():
    q0 = PiecewiseConstantFn.indicator(-1.0, 0.0)
    sol = fixed_point_solve(scenario(v=UP, q0=q0, V=AffineLaw.constant(1.0), ny=200, nt=4))
    f = sol.density_fn(0.5)
    assert float(f(0.25)) == pytest.approx(0.5, abs=1e-12)
    assert float(f(-0.25)) == pytest.approx(1.0, abs=1e-12)


def test_zero_datum_gives_zero_solution():
    sol = fixed_point_solve(scenario(q0=PiecewiseConstantFn.constant(0.0), ny=50, nt=5))
    assert np.all(sol.iterations == 1)
    assert np.all(sol.w.values == 0.0) and np.all(sol.sup == 0.0)
    assert mass(sol, 1.0) == (0.0, 0.0)


def test_fixed_point_rejects_nonpositive_tol():
    with pytest.raises(InvalidParameterError):
        fixed_point_solve(scenario(), tol=0.0)


def test_unit_velocity_scenario(rng):
    sol = fixed_point_solve(load_scenario("fig2_left").with_grid(ny=400, nt=40))
    assert max(float(r.max()) for r in sol.contraction_ratios() if r.size) <= 0.5
    assert sol.w.within_bounds
    assert np.all(sol.w.values >= -1e-15)
    # w <= ||gamma||_inf * mass, and <= ||gamma||_1 ||q||_inf (the sup stays at 0.5 here)
    assert sol.w.values.max() <= 10.0 * 0.2 + 1e-12
    assert sol.w.values.max() <= 1.0 * sol.sup.max() + 1e-12
    assert sol.sup.max() <= 0.5 + 1e-12


def test_solution_invariants(middle):
    sol = middle
    assert sol.chars.monotone
    assert np.all(sol.density >= 0.0)
    np.testing.assert_allclose(sol.mass_lagrangian, 0.2, rtol=1e-14)
    assert np.max(np.abs(sol.mass_eulerian / 0.2 - 1)) <= 1e-6
    lag, eul = mass(sol, 0.5)
    assert lag == pytest.approx(0.2, rel=1e-14) and eul == pytest.approx(lag, rel=1e-6)


def test_characteristic_ratios_obey_secant_bounds(middle):
    sol = middle
    sc = sol.scenario
    L2 = sc.V.lip * sol.w.M_prime
    r = sol.chars.ratios()
    t = sol.levels[:, None]
    with np.errstate(over="ignore"):
        grow = np.exp(t * L2 * sc.v_max)
    assert np.all(r >= sc.v_min / sc.v_max / grow * (1 - 1e-9))
    assert np.all(r <= sc.v_max / sc.v_min * grow * (1 + 1e-9))


def test_jump_relation_at_velocity_discontinuity(middle):
    left, right = middle.one_sided(0.5, 0.0)
    assert right > 0 and left / right == pytest.approx(2.0, rel=1e-10)


def test_flow_map_round_trip(middle):
    x = np.linspace(-0.5, -0.1, 9)
    y = flow_map(middle, 0.2, x, 0.8)
    assert np.all(np.diff(y) > 0)
    assert np.max(np.abs(flow_map(middle, 0.8, y, 0.2) - x)) <= 1e-8
    np.testing.assert_array_equal(flow_map(middle, 0.4, x, 0.4), x)
    with pytest.raises(InvalidParameterError):
        flow_map(middle, 0.0, x, 1.5)


# apply_F --------------------------------------------------------------------------


def _box_overlap(lo, hi, a, b):
    return np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)


@given(st.floats(0.1, 3.0), st.floats(-1.0, 0.0), st.floats(0.05, 0.8))
@settings(max_examples=15)
def test_apply_F_single_cell_closed_form(c, a, width):
    # q0 = c chi_[a, b], V = 1, v = 1: q(t) = c chi_[a+t, b+t] and
    # w(t, x) = c * 10 * |[x, x + 0.1] cap [a + t, b + t]|
    b = a + width
    sc = scenario(q0=PiecewiseConstantFn.indicator(a, b, c), V=AffineLaw.constant(1.0), ny=50, nt=5)
    x = np.linspace(-3, 3, 601)
    zero = NonlocalTerm(sc.levels, x, np.zeros((sc.levels.size, x.size)), *omega_bounds(sc))
    w = apply_F(zero, sc)
    for k, t in enumerate(sc.levels):
        exact = c * 10.0 * _box_overlap(x, x + 0.1, a + t, b + t)
        np.testing.assert_allclose(w.values[k], exact, atol=1e-10)
    assert w.within_bounds


def test_apply_F_degenerate_kernel_gives_zero():
    flat = Kernel(PiecewiseConstantFn.constant(0.0))
    sc = scenario(gamma=flat, ny=50, nt=5)
    x = sc.xgrid
    w = apply_F(NonlocalTerm(sc.levels, x, np.zeros((sc.levels.size, x.size)), *omega_bounds(sc)), sc)
    assert np.all(w.values == 0.0)


def test_apply_F_fixed_point_is_stationary(middle):
    # apply_F interpolates w bilinearly on the grid while the solver uses the
    # exact term of the node positions; they agree up to that interpolation
    # error, which concentrates at the kinks of w
    w = middle.w
    d = np.abs(apply_F(w, middle.scenario).values - w.values)
    assert d.mean() <= 5e-4
    assert d.max() <= 0.05


# maximum principle ---------------------------------------------------------------


def test_max_principle_increasing_case(middle):
    a = max_principle_audit(middle, "increasing")
    assert a["passed"] and a["observed"] <= 0.5 + 1e-12 and a["bound"] == 0.5


def test_max_principle_strict_rejects_unmet_assumptions():
    sol = fixed_point_solve(scenario(v=DOWN, ny=200, nt=20))
    with pytest.raises(AssumptionError):
        max_principle_audit(sol, "increasing")
    a = max_principle_audit(sol, "exponential", strict=False)
    assert a["unmet_assumptions"] and a["passed"]
    # the density doubles downstream of the drop in speed
    assert sol.sup.max() > 0.9


def test_max_principle_negative_case_bound():
    # X(q0, gamma) = (0, 0.2) for V = 1 - u; second term (1)(1/1)(0.2) < ||v q0|| / v_min = 0.5
    b = max_principle_bound(load_scenario("fig2_left"), "negative", [0.0, 1.0])
    np.testing.assert_allclose(b, 0.5)
    b = max_principle_bound(load_scenario("fig2_middle"), "negative", [0.5])
    np.testing.assert_allclose(b, 0.5)
    with pytest.raises(InvalidParameterError):
        max_principle_bound(load_scenario("fig2_left"), "other", [0.0])


def test_max_principle_exponential_bound_formula():
    sc = load_scenario("fig2_right")
    t = np.array([0.0, 0.5, 1.0])
    # ||v q0|| / v_min * exp(t ||v|| ||V'|| gamma(0) ||q0||_1)
    np.testing.assert_allclose(max_principle_bound(sc, "exponential", t), 0.5 / 0.5 * np.exp(t * 1 * 1 * 10 * 0.2))


# weak error ------------------------------------------------------------------------


def test_weak_error_trivial_cases(middle):
    def hat(x):
        return np.maximum(1 - np.abs(x), 0.0)

    assert weak_error(middle, middle, hat) == 0.0
    other = fixed_point_solve(load_scenario("fig2_left").with_grid(ny=500, nt=50))
    assert weak_error(middle, other, lambda x: np.where(np.abs(x) > 2.9, 1.0, 0.0)) == 0.0
    assert weak_error(middle, other, hat) > 0.0

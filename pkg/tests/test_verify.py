import numpy as np
import pytest

from discflow.disc_ode import solve_trajectory
from discflow.funcrep import InvalidParameterError, LipschitzField, PiecewiseConstantFn, VelocityFn, sgn_sin_velocity
from discflow.scenario import load_scenario
from discflow.verify import (
    ConvergenceStudy,
    brute_force_trajectory,
    composition_l1_check,
    hat,
    mollification_ladder,
    mollified_chain,
    ode_mollified_chain,
    worker_count,
)

FIG1 = sgn_sin_velocity()
ONE = VelocityFn(PiecewiseConstantFn.constant(1.0))
TWO = VelocityFn(PiecewiseConstantFn.constant(2.0))
STEP = PiecewiseConstantFn.step(0.0, 1.0, 2.0)
LAM1 = LipschitzField.constant(1.0)
RELAX = LipschitzField.affine_cos(a=1.0, b=-1.0, window=(-2.0, 2.0))


# brute force oracle ----------------------------------------------------------------


def test_brute_force_unit_transport():
    tr = brute_force_trajectory(ONE, LAM1, [0.0, -0.5], 1.0)
    t = np.linspace(0, 1, 11)
    # exact per step; only the rounding of 1e5 additions accumulates
    np.testing.assert_allclose(tr(t), np.array([0.0, -0.5]) + t[:, None], atol=1e-11)


def test_brute_force_linear_closed_form():
    tr = brute_force_trajectory(TWO, RELAX, 0.0, 1.0)
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(tr(t), 1 - np.exp(-2 * t), atol=1e-12)


def test_brute_force_generic_field_path():
    # same field without catalogue parameters goes through the generic RK4
    lam = LipschitzField(lambda t, x: 1.0 - np.asarray(x), 3.0, 1.0)
    tr = brute_force_trajectory(TWO, lam, 0.0, 1.0, n_out=100)
    assert abs(float(tr(1.0)) - (1 - np.exp(-2.0))) <= 1e-10


@pytest.mark.parametrize(
    "lam",
    [LAM1, LipschitzField.affine_cos(a=1.0, b=-1.0, window=(-1, 1)), LipschitzField.affine_cos(c=1.0, omega=2 * np.pi)],
    ids=["blue", "red", "yellow"],
)
def test_brute_force_agrees_with_adaptive_solver(lam):
    x0 = np.array([-1.0, -0.5, 0.0])
    t = np.linspace(0, 1, 201)
    ref = brute_force_trajectory(FIG1, lam, x0, 1.0)(t)
    got = solve_trajectory(FIG1, lam, x0, 1.0, t_eval=t)(t)
    assert np.max(np.abs(ref - got)) <= 1e-7


def test_brute_force_input_checks():
    with pytest.raises(InvalidParameterError):
        brute_force_trajectory(ONE, LAM1, 0.0, 1.0, n_steps=1000)
    with pytest.raises(InvalidParameterError):
        brute_force_trajectory(ONE, LAM1, 0.0, 1.0, n_steps=100_001)


# convergence study ------------------------------------------------------------------


def test_study_invariants():
    with pytest.raises(InvalidParameterError):
        ConvergenceStudy([0.1, 0.2], [1.0, 0.5])
    with pytest.raises(InvalidParameterError):
        ConvergenceStudy([0.2, 0.1], [1.0, np.nan])
    s = ConvergenceStudy([0.4, 0.2, 0.1], [4.0, 2.0, 1.0])
    np.testing.assert_allclose(s.rates[1:, 0], 1.0)
    assert np.isnan(s.rates[0, 0])
    assert s.fitted_rate[0] == pytest.approx(1.0)
    assert s.monotone.all() and s.within_bound


def test_study_csv_is_deterministic(tmp_path):
    s = ConvergenceStudy([0.2, 0.1], [[1.0, 3.0], [0.25, 1.0]], labels=("a", "b"))
    p1, p2 = s.to_csv(tmp_path / "a.csv"), s.to_csv(tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "param,error_a,rate_a,error_b,rate_b"
    assert lines[2].split(",")[:3] == ["0.10000000000000001", "0.25", "2"]
    single = ConvergenceStudy([0.2, 0.1], [1.0, 0.5]).to_csv(tmp_path / "c.csv")
    assert single.read_text().splitlines()[0] == "param,error,rate"


def test_ladder_and_hat():
    np.testing.assert_allclose(mollification_ladder(), [0.1, 0.05, 0.025, 0.0125, 0.00625])
    g = hat(0.3, 0.4)
    assert g(0.3) == 1.0 and g(-0.1) == 0.0 and g(0.5) == pytest.approx(0.5)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("NONLOCAL_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("NONLOCAL_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("NONLOCAL_THREADS", "many")
    with pytest.raises(InvalidParameterError):
        worker_count()


# mollification chains ----------------------------------------------------------------


def test_constant_velocity_chain_is_exact():
    st = ode_mollified_chain(TWO, RELAX, [0.1, 0.05], x0s=np.linspace(-1, 1, 5))
    assert np.all(st.error <= 1e-12)


def test_ode_chain_within_weak_estimate():
    st = ode_mollified_chain(FIG1, RELAX, mollification_ladder(n=3), x0s=np.linspace(-1, 1, 21))
    assert st.within_bound and st.monotone.all()


def test_pde_chain_decreases():
    sc = load_scenario("fig2_middle").with_grid(ny=250, nt=50)
    st = mollified_chain(sc, [0.1, 0.05, 0.025])
    assert st.error.shape == (3, 3)
    assert st.monotone.all()


def test_chain_rejects_increasing_ladder():
    with pytest.raises(InvalidParameterError):
        ode_mollified_chain(FIG1, LAM1, [0.05, 0.1])


# composition ----------------------------------------------------------------------------


def test_composition_identical_ladder_is_zero():
    ident = lambda z: np.asarray(z, dtype=float)  # noqa: E731
    r = composition_l1_check(STEP, ident, [STEP, STEP], [ident, ident], (-1, 1), 1.0)
    np.testing.assert_array_equal(r.errors, 0.0)
    assert r.within


@pytest.mark.parametrize("eps", [0.1, 0.03, 0.001])
def test_composition_shifted_jump(eps):
    # f o g_eps differs from f only on [-eps, 0), where the jump has height 1
    ident = lambda z: np.asarray(z, dtype=float)  # noqa: E731
    shift = lambda z: np.asarray(z, dtype=float) + eps  # noqa: E731
    r = composition_l1_check(STEP, ident, [STEP], [shift], (-1, 1), 1.0)
    assert r.errors[0] == pytest.approx(eps, rel=1e-12)
    assert r.within


def test_composition_input_checks():
    ident = lambda z: z  # noqa: E731
    with pytest.raises(InvalidParameterError):
        composition_l1_check(STEP, ident, [STEP], [ident], (1, -1), 1.0)
    with pytest.raises(InvalidParameterError):
        composition_l1_check(STEP, ident, [STEP], [ident, ident], (-1, 1), 1.0)
    with pytest.raises(InvalidParameterError):
        composition_l1_check(STEP, ident, [STEP], [ident], (-1, 1), 0.0)

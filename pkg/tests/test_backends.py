import os
import subprocess
import sys

import numpy as np
import pytest

from discflow import _kernels as K
from discflow.disc_ode import _zmap
from discflow.funcrep import mollify, sgn_sin_velocity
from discflow.nonlocal_ import _initial_nodes, fixed_point_solve, horizon_estimate
from discflow.scenario import load_scenario

pytestmark = pytest.mark.skipif(not K.HAS_NUMBA, reason="numba not importable")

V = sgn_sin_velocity()


@pytest.fixture(scope="module")
def maps():
    return {"pcf": _zmap(V).arrays, "mollified": _zmap(mollify(V, 0.0125)).arrays}


@pytest.fixture(scope="module")
def nodes():
    sc = load_scenario("fig2_middle").with_grid(ny=150, nt=20)
    p, masses = _initial_nodes(sc)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    edges, heights = sc.gamma.pieces()
    return sc, p, cum, edges, heights


def both(fn):
    return fn("numba"), fn("numpy")


def test_unknown_backend_is_rejected():
    with pytest.raises(ValueError):
        K._select("fortran")


@pytest.mark.parametrize("kind", ["pcf", "mollified"])
def test_zmap_round_trip_agrees(maps, kind, rng):
    zm = maps[kind]
    x = rng.uniform(-1.5, 1.5, 5000)
    a, b = both(lambda be: K.zmap_forward(x, zm, backend=be))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
    ia, ib = both(lambda be: K.zmap_inverse(a, zm, backend=be))
    np.testing.assert_allclose(ia, ib, rtol=0, atol=1e-14)
    np.testing.assert_allclose(ia, x, rtol=0, atol=1e-12)


def test_mass_cdf_and_nonlocal_eval_agree(nodes):
    sc, p, cum, edges, heights = nodes
    zm = sc.zmap.arrays
    y = np.linspace(-1.0, 1.0, 801)
    a, b = both(lambda be: K.mass_cdf(y, p, cum, zm, backend=be))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
    a, b = both(lambda be: K.nonlocal_eval(sc.xgrid, p, cum, edges, heights, zm, backend=be))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_rk4_affine_cos_agrees(maps):
    p0 = K.zmap_forward(np.linspace(-1, 0, 11), maps["pcf"])
    a, b = both(lambda be: K.rk4_affine_cos(p0, 1.0, 2000, 100, (1.0, -1.0, 0.5, 3.0), maps["pcf"], backend=be))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_picard_window_agrees(nodes):
    sc, p, cum, edges, heights = nodes
    t1 = min(horizon_estimate(sc), sc.T / sc.nt)
    a, b = both(lambda be: K.picard_window(
        p, 0.0, t1, cum, edges, heights, sc.xgrid, sc.zmap.arrays, sc.V.a, sc.V.b, 1e-9, 1e-10, 1e-8, 50, backend=be
    ))
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-12)
    assert a[2] == b[2]


def test_full_solve_agrees(monkeypatch):
    sc = load_scenario("fig2_right").with_grid(ny=120, nt=10)
    ref = fixed_point_solve(sc)
    monkeypatch.setattr(K, "BACKEND", "numpy")
    alt = fixed_point_solve(sc)
    np.testing.assert_allclose(alt.density, ref.density, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(alt.w.values, ref.w.values, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(alt.iterations, ref.iterations)


def test_environment_flag_selects_backend():
    env = dict(os.environ, DISCFLOW_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", "from discflow import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"

"""Compare the compiled and the pure-numpy kernels on representative inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N] [--quick]``.
Each kernel is called once per backend to warm up (numba compiles on first
use), then timed as the best of ``--repeat`` calls. The last column is the
largest absolute difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from discflow import _kernels as K
from discflow.disc_ode import _zmap
from discflow.funcrep import mollify, sgn_sin_velocity
from discflow.nonlocal_ import _initial_nodes, horizon_estimate
from discflow.scenario import load_scenario


def best_of(func, repeat: int):
    out = func()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b) if isinstance(x, np.ndarray) and x.shape == y.shape)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cases(quick: bool):
    rng = np.random.default_rng(1)
    v = sgn_sin_velocity()
    zm_pcf = _zmap(v).arrays
    zm_mol = _zmap(mollify(v, 0.0125)).arrays
    n = 20_000 if quick else 200_000
    x = rng.uniform(-1.5, 1.5, n)
    p = K.zmap_forward(x, zm_pcf)
    pm = K.zmap_forward(x, zm_mol)

    sc = load_scenario("fig2_middle").with_grid(ny=200 if quick else 1000, nt=40)
    p_nodes, masses = _initial_nodes(sc)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    edges, heights = sc.gamma.pieces()
    xg = sc.xgrid
    zm_sc = sc.zmap.arrays
    t1 = min(horizon_estimate(sc), sc.T / sc.nt)
    va, vb = sc.V.a, sc.V.b
    p0 = K.zmap_forward(np.linspace(-1, 0, 41), zm_pcf)

    yield "zmap_forward (pcf)", lambda b: K.zmap_forward(x, zm_pcf, backend=b)
    yield "zmap_inverse (pcf)", lambda b: K.zmap_inverse(p, zm_pcf, backend=b)
    yield "zmap_inverse (mollified)", lambda b: K.zmap_inverse(pm, zm_mol, backend=b)
    yield "nonlocal_eval", lambda b: K.nonlocal_eval(xg, p_nodes, cum, edges, heights, zm_sc, backend=b)
    yield "rk4_affine_cos", lambda b: K.rk4_affine_cos(p0, 1.0, 2_000 if quick else 20_000, 100, (1.0, -1.0, 0.0, 0.0), zm_pcf, backend=b)
    yield "picard_window", lambda b: K.picard_window(
        p_nodes, 0.0, t1, cum, edges, heights, xg, zm_sc, va, vb, 1e-9, 1e-10, 1e-8, 50, backend=b
    )


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':28s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speed-up':>9s} {'max diff':>10s}")
    for name, run in cases(args.quick):
        tn, a = best_of(lambda: run("numba"), args.repeat)
        tp, b = best_of(lambda: run("numpy"), args.repeat)
        print(f"{name:28s} {tn:11.4g} {tp:11.4g} {tp / tn:9.1f} {_diff(a, b):10.2e}")


if __name__ == "__main__":
    main()

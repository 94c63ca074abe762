"""Compiled vs pure-Python kernels: eikonal sweeps and greedy ball packing.

Usage: python benchmarks/bench_sweep.py [--n 101] [--repeat 3]
"""
import argparse
import time

import numpy as np

from finslerlab import kernels
from finslerlab.geodesy import distance_field
from finslerlab.grid import Grid2D
from finslerlab.metric import MetricModel


def _best(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _pack_inputs(n, seed=0):
    """Candidates on an n x n node block with radii between 2h and 5h."""
    rng = np.random.default_rng(seed)
    h = 1.0 / n
    J, I = np.mgrid[0:n, 0:n]
    rad = (2 + 3 * rng.random((n, n))) * h
    halfw = (np.ceil(rad / (0.7 * h)) + 1).astype(np.int32)
    ok = (J - halfw >= 0) & (J + halfw < n) & (I - halfw >= 0) & (I + halfw < n)
    cj, ci, r = J[ok].astype(np.int32), I[ok].astype(np.int32), rad[ok]
    order = np.argsort(-r, kind="stable").astype(np.int64)
    k = len(r)
    return (order, cj, ci, r, np.ones(k), np.full(k, 0.3), np.zeros(k), np.ascontiguousarray(halfw[ok]), h,
            np.full((n, n), -1, dtype=np.int32))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=101, help="nodes per axis of the sweep grid")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    m = MetricModel.randers((0.3, 0.0))
    g = Grid2D.centered((0.0, 0.0), 1.0, 2.0 / (args.n - 1))
    pack = _pack_inputs(args.n)
    cases = {
        "semi-lagrangian": lambda: distance_field(m, (0.0, 0.0), g).values,
        "lax-friedrichs": lambda: distance_field(m, (0.0, 0.0), g, scheme="lax-friedrichs").values,
        "greedy-pack": lambda: kernels.greedy_pack(*pack[:-1], pack[-1].copy()).astype(float),
    }
    if "compiled" not in kernels.available():
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':<18}{'backend':<10}{'seconds':>10}{'speedup':>10}{'max |diff|':>14}")
    for name, fn in cases.items():
        res = {}
        for be in kernels.available():
            prev = kernels.use_backend(be)
            try:
                res[be] = _best(fn, args.repeat)
            finally:
                kernels.use_backend(prev)
        t_py, v_py = res["python"]
        for be, (t, v) in sorted(res.items()):
            diff = float(np.max(np.abs(v - v_py))) if v.shape == v_py.shape else float("nan")
            print(f"{name:<18}{be:<10}{t:>10.4f}{t_py / t:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()

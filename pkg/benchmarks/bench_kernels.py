"""Time every kernel under both backends on representative inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best wall time of each backend and the
speed-up.  The first numba call (compilation or cache load) is excluded.
"""
import argparse
import time

import numpy as np

from galife import kernels


def _inputs(rng):
    n_seg, n_box = 2000, 8
    p0 = rng.uniform(-50, 50, (n_seg, 3))
    p1 = rng.uniform(-50, 50, (n_seg, 3))
    lo = rng.uniform(-30, 20, (n_box, 3))
    seg = (p0, p1, lo, lo + rng.uniform(2, 10, (n_box, 3)))

    dist = rng.uniform(0, 3, (40, 40))
    match = (dist, 1.5)

    n_bins, length = 60, 80
    starts = np.sort(rng.integers(1, 70, n_bins)).astype(np.int64)
    ends = starts + length - 1
    offsets = np.arange(n_bins, dtype=np.int64) * length
    params = np.cumsum(rng.normal(size=(n_bins * length, 6)), axis=0)
    corr = (starts, ends, offsets, params, 0, int(ends[0]), 3, 0.5)

    X = rng.normal(size=(2000, 9))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.int64) + (X[:, 2] > 1).astype(np.int64)
    idx = rng.integers(0, X.shape[0], X.shape[0])
    feat_u = rng.random((2 * idx.shape[0], X.shape[1]))
    tree = (X, y, 3, idx, feat_u, 3, 1)
    grown = kernels.numpy_grow_tree(*tree)

    x = rng.normal(size=(32, 60, 13))
    w = rng.normal(size=(32, 13, 5))
    b = rng.normal(size=32)
    gout = rng.normal(size=(32, 60, 32))

    return {
        "segment_box_hits": seg,
        "greedy_match": match,
        "correlation_counts": corr,
        "grow_tree": tree,
        "tree_apply": (X,) + tuple(grown),
        "conv1d_forward": (x, w, b),
        "conv1d_backward": (x, w, gout),
        "chain_walk": (0.05, 0.01, 0, rng.random(100_000)),
    }


def _best(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    inputs = _inputs(np.random.default_rng(args.seed))
    print(f"{'kernel':20s} {'numpy_ms':>10s} {'numba_ms':>10s} {'speedup':>8s}")
    for name in kernels._NAMES:
        impls = kernels.implementations(name)
        t_np = _best(impls["numpy"], inputs[name], args.repeat)
        if "numba" in impls:
            t_nb = _best(impls["numba"], inputs[name], args.repeat)
            print(f"{name:20s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.1f}")
        else:
            print(f"{name:20s} {1e3 * t_np:10.3f} {'n/a':>10s} {'':>8s}")


if __name__ == "__main__":
    main()

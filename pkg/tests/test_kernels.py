import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galife import kernels
from galife._accel import HAS_NUMBA

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def _both(name):
    impls = kernels.implementations(name)
    return impls["numpy"], impls["numba"]


def _tree_inputs(rng, n=300, p=5):
    X = rng.normal(size=(n, p))
    X[:, 3] = np.round(X[:, 3])  # repeated values exercise threshold ties
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.int64) + (X[:, 2] > 1).astype(np.int64)
    idx = rng.integers(0, n, n)
    feat_u = rng.random((2 * n, p))
    return X, y, 3, idx, feat_u, 2, 1


def test_implementations_lists_every_kernel():
    for name in kernels._NAMES:
        impls = kernels.implementations(name)
        assert "numpy" in impls
        assert ("numba" in impls) == HAS_NUMBA


@needs_numba
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_segment_box_hits_agree(seed):
    rng = np.random.default_rng(seed)
    p0, p1 = rng.uniform(-10, 10, (50, 3)), rng.uniform(-10, 10, (50, 3))
    lo = rng.uniform(-8, 5, (4, 3))
    hi = lo + rng.uniform(0.5, 4, (4, 3))
    np_fn, nb_fn = _both("segment_box_hits")
    expect = kernels._segment_box_hits_py(p0, p1, lo, hi, 1e-9)
    assert np.array_equal(np_fn(p0, p1, lo, hi), expect)
    assert np.array_equal(nb_fn(p0, p1, lo, hi), expect)


def test_segment_box_examples():
    lo, hi = np.array([[-1.0, -1.0, -1.0]]), np.array([[1.0, 1.0, 1.0]])
    p0 = np.array([[-5.0, 0, 0], [-5.0, 2, 0], [-5.0, 0, 0]])
    p1 = np.array([[5.0, 0, 0], [5.0, 2, 0], [-1.0, 0, 0]])
    # the last segment only touches the box at its own end point
    assert kernels.segment_box_hits(p0, p1, lo, hi).tolist() == [True, False, False]


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 8), st.integers(0, 8))
def test_greedy_match_agree(seed, n, m):
    rng = np.random.default_rng(seed)
    dist = np.round(rng.uniform(0, 3, (n, m)), 1)  # ties on purpose
    np_fn, nb_fn = _both("greedy_match")
    a, b = np_fn(dist, 1.5), nb_fn(dist, 1.5)
    assert np.array_equal(a, b)
    used = a[a >= 0]
    assert len(set(used.tolist())) == used.size
    assert all(dist[i, j] <= 1.5 for i, j in enumerate(a) if j >= 0)


@needs_numba
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_correlation_counts_agree(seed):
    rng = np.random.default_rng(seed)
    n_bins, length = 12, 15
    starts = np.sort(rng.integers(1, 20, n_bins)).astype(np.int64)
    ends = starts + length - 1
    offsets = np.arange(n_bins, dtype=np.int64) * length
    params = np.cumsum(rng.normal(size=(n_bins * length, 4)), axis=0)
    np_fn, nb_fn = _both("correlation_counts")
    for target in range(n_bins):
        args = (starts, ends, offsets, params, target, int(ends[target]) - 3, 3, 0.5)
        assert tuple(np_fn(*args)) == tuple(nb_fn(*args)) == tuple(kernels._corr_counts_py(*args))


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_trees_bit_identical(seed):
    args = _tree_inputs(np.random.default_rng(seed))
    np_fn, nb_fn = _both("grow_tree")
    ta, tb = np_fn(*args), nb_fn(*args)
    for a, b in zip(ta, tb):
        assert np.array_equal(a, b)
    np_ap, nb_ap = _both("tree_apply")
    assert np.array_equal(np_ap(args[0], *ta), nb_ap(args[0], *tb))


def test_tree_fits_bootstrap_sample():
    X, y, k, idx, u, _, leaf = _tree_inputs(np.random.default_rng(0))
    tree = kernels.grow_tree(X, y, k, idx, u, X.shape[1], leaf)
    pred = kernels.tree_apply(X, *tree)
    uniq = np.unique(idx)
    assert np.mean(pred[uniq] == y[uniq]) > 0.99


@pytest.mark.parametrize("n_k", [1, 2, 3, 4])
def test_conv_matches_reference_loops(n_k):
    rng = np.random.default_rng(n_k)
    x, w, b = rng.normal(size=(3, 7, 2)), rng.normal(size=(4, 2, n_k)), rng.normal(size=4)
    gout = rng.normal(size=(3, 7, 4))
    ref_f = kernels._conv1d_forward_py(x, w, b)
    ref_b = kernels._conv1d_backward_py(x, w, gout)
    for fwd, bwd in zip(kernels.implementations("conv1d_forward").values(),
                        kernels.implementations("conv1d_backward").values()):
        np.testing.assert_allclose(fwd(x, w, b), ref_f, rtol=1e-12, atol=1e-12)
        for got, want in zip(bwd(x, w, gout), ref_b):
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("p,q,k0", [(0.1, 0.01, 0), (0.3, 0.2, 2), (0.5, 0.3, 1)])
def test_chain_walk_agree(p, q, k0):
    u = np.random.default_rng(1).random(5000)
    np_fn, nb_fn = _both("chain_walk")
    (sa, fa), (sb, fb) = np_fn(p, q, k0, u), nb_fn(p, q, k0, u)
    assert fa == fb and np.array_equal(sa, sb)


def test_chain_walk_reports_infeasible_state():
    states, failed = kernels.numpy_chain_walk(0.9, 0.5, 1, np.zeros(10))
    assert failed == 0 and states.tolist() == [1]


def test_env_flag_selects_numpy_backend():
    code = "from galife import _accel, kernels; print(_accel.backend_name(), kernels.grow_tree is kernels.numpy_grow_tree)"
    env = dict(os.environ, GALIFE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]

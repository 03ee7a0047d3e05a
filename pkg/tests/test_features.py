import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galife.binning import BinningConfig, PathBin, make_bin
from galife.features import (FEATURE_NAMES, SEQUENCE_COLUMNS, Prefix, TruncationSpec, build_context,
                             clip_bins, concurrency_features, correlation_counts, feature_matrix,
                             feature_row, linear_trend, parameter_variation, read_feature_csv,
                             read_sequences_jsonl, sequence_sample, truncate_bin, write_feature_csv,
                             write_sequences_jsonl)
from galife.simulator import MpcRecord

CFG = BinningConfig()


def rec(n, alpha=1e-6, tau=1e-7, tt=0.0, pt=0.0, tr=0.0, pr=0.0):
    return MpcRecord(alpha, 20 * math.log10(alpha), tau, tt, pt, tr, pr, 0.0, n)


def span_bin(bid, a, b, closed=True, **kw):
    return make_bin(bid, [rec(n, **kw) for n in range(a, b + 1)], closed, CFG)


def scaled_bin(bid, start, scaled, closed=True):
    """Bin whose scaled parameter rows are given directly."""
    scaled = np.asarray(scaled, dtype=float)
    recs = tuple(rec(start + i) for i in range(scaled.shape[0]))
    return PathBin(bid, recs, closed, scaled)


def test_parameter_variation_examples():
    assert parameter_variation([5.0, 5.0, 5.0], 0) == 0.0
    assert parameter_variation([1.0, 2.0, 3.0], 0) == 1.0
    assert parameter_variation([0.0, 2.0, 1.0], 0) == 1.5
    assert parameter_variation([7.0], 0) == 0.0


def test_correlation_count_examples():
    lone = span_bin(0, 1, 5)
    far = span_bin(1, 10, 15)
    assert correlation_counts(lone, build_context([lone, far])) == (0, 0)

    t = np.arange(6.0)
    up = scaled_bin(0, 1, np.outer(t, np.ones(6)) + np.arange(6))
    twin = scaled_bin(1, 1, 3 * np.outer(t, np.ones(6)))
    assert correlation_counts(up, build_context([up, twin], rho_min=0.5)) == (6, 0)

    wiggle = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    a = np.column_stack([t, t, wiggle, wiggle, wiggle, wiggle])
    b = np.column_stack([t + 0.3 * wiggle, -t, np.zeros(6), np.zeros(6), t % 2 * 0 + 5, np.ones(6)])
    ctx = build_context([scaled_bin(0, 1, a), scaled_bin(1, 1, b)], rho_min=0.5)
    assert correlation_counts(ctx.bins[0], ctx) == (1, 1)


def test_concurrency_examples():
    sole = span_bin(0, 1, 10)
    ctx = build_context([sole], 1, 10)
    assert concurrency_features(sole, ctx) == (0, 1.0)

    a, b = span_bin(0, 1, 5), span_bin(1, 5, 9)
    ctx = build_context([a, b], 1, 9)
    assert concurrency_features(a, ctx)[0] == 1 and concurrency_features(b, ctx)[0] == 1

    trio = [span_bin(i, 1, 10) for i in range(3)]
    ctx = build_context(trio, 1, 10)
    assert all(concurrency_features(x, ctx) == (2, 3.0) for x in trio)


def test_feature_row_shapes_and_constant_bin():
    bins = [span_bin(0, 1, 4), span_bin(1, 10, 16), span_bin(2, 20, 21)]
    ctx = build_context(bins, 1, 21)
    fm = feature_matrix(bins, ctx)
    assert fm.V.shape == (3, len(FEATURE_NAMES)) and len(fm.X) == 3
    np.testing.assert_array_equal(fm.X, [4, 7, 2])
    np.testing.assert_array_equal(fm.V[0, :8], 0.0)
    assert fm.V[0, 8] == pytest.approx(0 - ctx.m_bar)


def _random_bins(rng, n_bins=6, n_pos=30):
    bins = []
    for i in range(n_bins):
        a = int(rng.integers(1, n_pos - 3))
        b = int(rng.integers(a + 2, n_pos + 1))
        walk = np.cumsum(rng.normal(size=(b - a + 1, 6)), axis=0)
        bins.append(scaled_bin(i, a, walk))
    return bins


def test_feature_row_relabel_and_reorder_invariant():
    rng = np.random.default_rng(3)
    bins = _random_bins(rng)
    ctx = build_context(bins, 1, 30, m_bar=2.0)
    rows = {b.bin_id: feature_row(b, ctx) for b in bins}
    relabeled = [PathBin(100 - b.bin_id, b.records, b.closed, b.scaled) for b in reversed(bins)]
    ctx2 = build_context(relabeled, 1, 30, m_bar=2.0)
    for b in relabeled:
        np.testing.assert_array_equal(feature_row(b, ctx2), rows[100 - b.bin_id])


def test_linear_trend_examples():
    np.testing.assert_allclose(linear_trend([1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_allclose(linear_trend([4.0, 4.0, 4.0]), [4, 4, 4])
    np.testing.assert_allclose(linear_trend([0.0, 1.0, 0.0]), [1 / 3] * 3)
    np.testing.assert_allclose(linear_trend([2.5]), [2.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.integers(1, 500))
def test_trend_residual_orthogonality(ys, start):
    y = np.array(ys)
    b = scaled_bin(0, start, np.column_stack([y] * 6))
    res = y - linear_trend(b, 0)
    scale = max(1.0, np.abs(y).max()) * len(y)
    assert abs(res.sum()) <= 1e-9 * scale
    assert abs(res @ (b.rx - b.rx.mean())) <= 1e-9 * scale * len(y)


def test_sequence_sample_rows_and_columns():
    bins = [span_bin(0, 1, 5), span_bin(1, 3, 9), span_bin(2, 4, 4)]
    ctx = build_context(bins, 1, 9)
    s1 = sequence_sample(bins[0], ctx, 1)
    assert s1.matrix.shape == (5, len(SEQUENCE_COLUMNS)) == (5, 13)
    s2 = sequence_sample(bins[0], ctx, 2)
    np.testing.assert_array_equal(s2.matrix, s1.matrix[[0, 2, 4]])
    np.testing.assert_array_equal(s1.matrix[:, 12], ctx.alive_at(np.arange(1, 6)) - 1)
    for step in (1, 2, 3, 7):
        s = sequence_sample(bins[1], ctx, step)
        assert s.matrix.shape[1] == 13 and s.matrix.shape[0] >= 1
        np.testing.assert_array_equal(s.matrix[-1], sequence_sample(bins[1], ctx, 1).matrix[-1])
    with pytest.raises(ValueError):
        sequence_sample(bins[0], ctx, 0)


def test_truncation_examples():
    assert TruncationSpec(0.3).prefix_length(10) == 3
    assert TruncationSpec(0.9).prefix_length(1) == 1
    assert TruncationSpec(0.9).prefix_length(7) == 6
    assert TruncationSpec(0.9).prefix_length(5) == 5  # 4.5 rounds half up
    p = truncate_bin(span_bin(0, 1, 10), 0.3)
    assert isinstance(p, Prefix) and p.covered == 3 and p.lifespan == 10 and p.cutoff == 3
    with pytest.raises(ValueError):
        truncate_bin(span_bin(0, 1, 10, closed=False), 0.3)
    with pytest.raises(ValueError):
        TruncationSpec(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.3, 0.6, 0.9]))
def test_prefix_features_ignore_future(seed, frac):
    rng = np.random.default_rng(seed)
    bins = _random_bins(rng, 7)
    ctx = build_context(bins, 1, 30, m_bar=2.5)
    for b in bins:
        p = truncate_bin(b, frac)
        clipped = clip_bins(bins, p.cutoff)
        ctx2 = build_context(clipped, 1, 30, m_bar=2.5)
        head = next(c for c in clipped if c.bin_id == b.bin_id)
        head = PathBin(head.bin_id, head.records, False, head.scaled)
        np.testing.assert_array_equal(feature_row(p, ctx), feature_row(head, ctx2))
        np.testing.assert_array_equal(sequence_sample(p, ctx).matrix, sequence_sample(head, ctx2).matrix)


def test_csv_and_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    bins = _random_bins(rng)
    ctx = build_context(bins, 1, 30)
    fm = feature_matrix(bins, ctx, fractions=(0.3, 0.6, 0.9))
    path = tmp_path / "f.csv"
    write_feature_csv(str(path), fm)
    back = read_feature_csv(str(path))
    np.testing.assert_array_equal(back.V, fm.V)
    np.testing.assert_array_equal(back.X, fm.X)
    np.testing.assert_array_equal(back.covered, fm.covered)
    seqs = [sequence_sample(truncate_bin(b, 0.6), ctx) for b in bins]
    write_sequences_jsonl(str(tmp_path / "s.jsonl"), seqs)
    for a, b in zip(seqs, read_sequences_jsonl(str(tmp_path / "s.jsonl"))):
        np.testing.assert_array_equal(a.matrix, b.matrix)
        assert a.label == b.label and a.covered == b.covered

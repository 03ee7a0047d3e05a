"""Hot inner loops, each with a numba kernel and a pure-numpy fallback.

The public names at the bottom of the module point at the numba version when
it is enabled (see ``_accel``) and at the numpy version otherwise.  Both
versions are kept importable as ``numba_<name>`` / ``numpy_<name>`` so the
test-suite and the benchmark can compare them directly.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import HAS_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# segment vs axis-aligned box occlusion
# ---------------------------------------------------------------------------


def _segment_box_hits_py(p0, p1, bmin, bmax, eps):
    n_seg = p0.shape[0]
    n_box = bmin.shape[0]
    out = np.zeros(n_seg, dtype=np.bool_)
    for s in range(n_seg):
        for b in range(n_box):
            t0 = eps
            t1 = 1.0 - eps
            hit = True
            for a in range(3):
                d = p1[s, a] - p0[s, a]
                if abs(d) < 1e-15:
                    if p0[s, a] < bmin[b, a] or p0[s, a] > bmax[b, a]:
                        hit = False
                        break
                else:
                    ta = (bmin[b, a] - p0[s, a]) / d
                    tb = (bmax[b, a] - p0[s, a]) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t0:
                        t0 = ta
                    if tb < t1:
                        t1 = tb
                    if t0 > t1:
                        hit = False
                        break
            if hit:
                out[s] = True
                break
    return out


def numpy_segment_box_hits(p0, p1, bmin, bmax, eps=1e-9):
    """True for every segment ``p0[i] -> p1[i]`` that passes through any box.

    The segment is trimmed by ``eps`` (parametric) at both ends so that rays
    touching a box only at their own bounce point are not counted.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    bmin = np.asarray(bmin, dtype=np.float64).reshape(-1, 3)
    bmax = np.asarray(bmax, dtype=np.float64).reshape(-1, 3)
    if p0.shape[0] == 0 or bmin.shape[0] == 0:
        return np.zeros(p0.shape[0], dtype=bool)
    d = (p1 - p0)[:, None, :]
    o = p0[:, None, :]
    parallel = np.abs(d) < 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (bmin[None] - o) / d
        tb = (bmax[None] - o) / d
    lo = np.minimum(ta, tb)
    hi = np.maximum(ta, tb)
    outside = (o < bmin[None]) | (o > bmax[None])
    lo = np.where(parallel, -np.inf, lo)
    hi = np.where(parallel, np.where(outside, -np.inf, np.inf), hi)
    t0 = np.maximum(lo.max(axis=2), eps)
    t1 = np.minimum(hi.min(axis=2), 1.0 - eps)
    return np.any(t0 <= t1, axis=1)


# ---------------------------------------------------------------------------
# greedy one-to-one matching by ascending distance
# ---------------------------------------------------------------------------


def _greedy_match_py(dist, d_max, order):
    n_rows, n_cols = dist.shape
    assign = np.full(n_rows, -1, dtype=np.int64)
    col_used = np.zeros(n_cols, dtype=np.bool_)
    for flat in order:
        i = flat // n_cols
        j = flat % n_cols
        if dist[i, j] > d_max:
            break
        if assign[i] >= 0 or col_used[j]:
            continue
        assign[i] = j
        col_used[j] = True
    return assign


def numpy_greedy_match(dist, d_max):
    """Match rows to columns, cheapest pair first, each used at most once.

    Returns ``assign[i]`` = matched column or -1.  Pairs further than
    ``d_max`` are never matched.  Ties resolve by (row, column) order.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.size == 0:
        return np.full(dist.shape[0], -1, dtype=np.int64)
    order = np.argsort(dist, axis=None, kind="stable")
    n_cols = dist.shape[1]
    assign = np.full(dist.shape[0], -1, dtype=np.int64)
    col_used = np.zeros(n_cols, dtype=bool)
    rows, cols = np.divmod(order, n_cols)
    keep = dist.ravel()[order] <= d_max
    for i, j in zip(rows[keep], cols[keep]):
        if assign[i] < 0 and not col_used[j]:
            assign[i] = j
            col_used[j] = True
    return assign


# ---------------------------------------------------------------------------
# windowed Pearson correlations between path bins
# ---------------------------------------------------------------------------


def _pearson_py(x, y):
    n = x.shape[0]
    mx = 0.0
    my = 0.0
    for i in range(n):
        mx += x[i]
        my += y[i]
    mx /= n
    my /= n
    sxy = 0.0
    sxx = 0.0
    syy = 0.0
    qx = 0.0
    qy = 0.0
    for i in range(n):
        dx = x[i] - mx
        dy = y[i] - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
        qx += x[i] * x[i]
        qy += y[i] * y[i]
    if sxx <= 1e-20 * qx + 1e-300 or syy <= 1e-20 * qy + 1e-300:
        return 0.0
    r = sxy / np.sqrt(sxx * syy)
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    return r


def _corr_counts_py(starts, ends, offsets, params, target, cutoff, min_overlap, rho_min):
    pos = 0
    neg = 0
    n_bins = starts.shape[0]
    t_start = starts[target]
    t_end = min(ends[target], cutoff)
    for o in range(n_bins):
        if o == target:
            continue
        lo = max(t_start, starts[o])
        hi = min(t_end, ends[o])
        if hi - lo + 1 < min_overlap:
            continue
        a0 = offsets[target] + (lo - t_start)
        b0 = offsets[o] + (lo - starts[o])
        length = hi - lo + 1
        for u in range(params.shape[1]):
            r = _pearson_py(params[a0:a0 + length, u], params[b0:b0 + length, u])
            if r > rho_min:
                pos += 1
            elif r < -rho_min:
                neg += 1
    return pos, neg


def numpy_pearson(x, y):
    """Pearson correlation; 0 when either series has no variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx <= 1e-20 * (x @ x) + 1e-300 or syy <= 1e-20 * (y @ y) + 1e-300:
        return 0.0
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def numpy_window_correlations(xs, ys):
    """Column-wise Pearson of two (L, P) blocks, zero-variance columns -> 0."""
    dx = xs - xs.mean(axis=0)
    dy = ys - ys.mean(axis=0)
    sxx = np.einsum("ij,ij->j", dx, dx)
    syy = np.einsum("ij,ij->j", dy, dy)
    qx = np.einsum("ij,ij->j", xs, xs)
    qy = np.einsum("ij,ij->j", ys, ys)
    flat = (sxx <= 1e-20 * qx + 1e-300) | (syy <= 1e-20 * qy + 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.einsum("ij,ij->j", dx, dy) / np.sqrt(sxx * syy)
    r = np.where(flat, 0.0, r)
    return np.clip(r, -1.0, 1.0)


def numpy_correlation_counts(starts, ends, offsets, params, target, cutoff, min_overlap, rho_min):
    """Count partner-parameter correlations above ``rho_min`` / below ``-rho_min``.

    Bins are described by inclusive rx spans ``[starts[i], ends[i]]`` and rows
    ``params[offsets[i]:offsets[i] + ends[i] - starts[i] + 1]``.  Only positions
    up to ``cutoff`` take part, for the target and for its partners alike.
    """
    t_start = starts[target]
    t_end = min(ends[target], cutoff)
    lo = np.maximum(t_start, starts)
    hi = np.minimum(t_end, ends)
    ok = hi - lo + 1 >= min_overlap
    ok[target] = False
    pos = 0
    neg = 0
    for o in np.flatnonzero(ok):
        length = hi[o] - lo[o] + 1
        a0 = offsets[target] + lo[o] - t_start
        b0 = offsets[o] + lo[o] - starts[o]
        r = numpy_window_correlations(params[a0:a0 + length], params[b0:b0 + length])
        pos += int(np.count_nonzero(r > rho_min))
        neg += int(np.count_nonzero(r < -rho_min))
    return pos, neg


# ---------------------------------------------------------------------------
# classification tree growth (Gini) and traversal
# ---------------------------------------------------------------------------
#
# Trees are flat arrays: feature (-1 for leaves), threshold, left, right and
# the majority class of the node.  Feature subsets are chosen from a
# pre-drawn uniform matrix ``feat_u[node]`` so that both backends grow
# bit-identical trees from the same random draws.


def _grow_tree_py(X, y, n_classes, sample_idx, feat_u, max_features, min_leaf):
    n_feat = X.shape[1]
    cap = feat_u.shape[0]
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.int64)

    # node work list as (node id, begin, end) into a permutation buffer
    idx = sample_idx.copy()
    stack_node = np.zeros(cap, dtype=np.int64)
    stack_lo = np.zeros(cap, dtype=np.int64)
    stack_hi = np.zeros(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = idx.shape[0]
    top = 1
    n_nodes = 1
    counts = np.zeros(n_classes, dtype=np.int64)
    lcounts = np.zeros(n_classes, dtype=np.int64)

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        n = hi - lo
        counts[:] = 0
        for i in range(lo, hi):
            counts[y[idx[i]]] += 1
        best_c = 0
        for k in range(n_classes):
            if counts[k] > counts[best_c]:
                best_c = k
        value[node] = best_c
        sq_parent = 0
        n_present = 0
        for k in range(n_classes):
            sq_parent += counts[k] * counts[k]
            if counts[k] > 0:
                n_present += 1
        if n_present <= 1 or n < 2 * min_leaf:
            continue

        cand = np.argsort(feat_u[node, :n_feat])[:max_features]
        best_score = sq_parent / n
        best_f = -1
        best_thr = 0.0
        for f in cand:
            vals = np.empty(n, dtype=np.float64)
            for i in range(n):
                vals[i] = X[idx[lo + i], f]
            order = np.argsort(vals, kind="mergesort")
            lcounts[:] = 0
            sq_l = 0
            sq_r = sq_parent
            for i in range(n - 1):
                c = y[idx[lo + order[i]]]
                # move one sample of class c from right to left
                sq_l += 2 * lcounts[c] + 1
                rc = counts[c] - lcounts[c]
                sq_r -= 2 * rc - 1
                lcounts[c] += 1
                n_l = i + 1
                n_r = n - n_l
                if n_l < min_leaf or n_r < min_leaf:
                    continue
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if not v0 < v1:
                    continue
                score = sq_l / n_l + sq_r / n_r
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_thr = 0.5 * (v0 + v1)
                    if best_thr >= v1:
                        best_thr = v0
        if best_f < 0:
            continue

        # partition idx[lo:hi] in place, stable
        buf = idx[lo:hi].copy()
        n_l = 0
        for i in range(n):
            if X[buf[i], best_f] <= best_thr:
                idx[lo + n_l] = buf[i]
                n_l += 1
        j = lo + n_l
        for i in range(n):
            if X[buf[i], best_f] > best_thr:
                idx[j] = buf[i]
                j += 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # right pushed first so the left child is expanded first
        stack_node[top] = right[node]
        stack_lo[top] = lo + n_l
        stack_hi[top] = hi
        top += 1
        stack_node[top] = left[node]
        stack_lo[top] = lo
        stack_hi[top] = lo + n_l
        top += 1

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def numpy_grow_tree(X, y, n_classes, sample_idx, feat_u, max_features, min_leaf=1):
    """Grow one Gini tree on ``X[sample_idx]`` (vectorised split search).

    ``feat_u`` needs at least ``2 * len(sample_idx) - 1`` rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_feat = X.shape[1]
    cap = feat_u.shape[0]
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.int64)
    eye = np.eye(n_classes, dtype=np.int64)

    stack = [(0, np.asarray(sample_idx, dtype=np.int64))]
    n_nodes = 1
    while stack:
        node, idx = stack.pop()
        n = idx.shape[0]
        counts = np.bincount(y[idx], minlength=n_classes)
        value[node] = int(np.argmax(counts))
        if np.count_nonzero(counts) <= 1 or n < 2 * min_leaf:
            continue
        sq_parent = int(counts @ counts)
        cand = np.argsort(feat_u[node, :n_feat])[:max_features]
        best_score = sq_parent / n
        best_f = -1
        best_thr = 0.0
        n_l = np.arange(1, n)
        n_r = n - n_l
        for f in cand:
            vals = X[idx, f]
            order = np.argsort(vals, kind="mergesort")
            sv = vals[order]
            cum = np.cumsum(eye[y[idx[order]]], axis=0)[:-1]
            sq_l = np.einsum("ij,ij->i", cum, cum)
            rest = counts - cum
            sq_r = np.einsum("ij,ij->i", rest, rest)
            valid = (sv[:-1] < sv[1:]) & (n_l >= min_leaf) & (n_r >= min_leaf)
            if not valid.any():
                continue
            score = sq_l.astype(np.float64) / n_l + sq_r.astype(np.float64) / n_r
            score = np.where(valid, score, -np.inf)
            i = int(np.argmax(score))
            if score[i] > best_score:
                best_score = score[i]
                best_f = int(f)
                v0, v1 = sv[i], sv[i + 1]
                best_thr = 0.5 * (v0 + v1)
                if best_thr >= v1:
                    best_thr = v0
        if best_f < 0:
            continue
        go_left = X[idx, best_f] <= best_thr
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack.append((right[node], idx[~go_left]))
        stack.append((left[node], idx[go_left]))
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def _tree_apply_py(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def numpy_tree_apply(X, feature, threshold, left, right, value):
    """Class predicted by one flat tree for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    while True:
        f = feature[node]
        inner = f >= 0
        if not inner.any():
            break
        go_left = X[rows, np.where(inner, f, 0)] <= threshold[node]
        node = np.where(inner, np.where(go_left, left[node], right[node]), node)
    return value[node]


# ---------------------------------------------------------------------------
# 1-D convolution, "same" zero padding, channels-last
# ---------------------------------------------------------------------------


def _conv1d_forward_py(x, w, b):
    n_b, n_t, n_c = x.shape
    n_f, _, n_k = w.shape
    pad = (n_k - 1) // 2
    out = np.empty((n_b, n_t, n_f), dtype=x.dtype)
    for s in range(n_b):
        for t in range(n_t):
            for f in range(n_f):
                acc = b[f]
                for k in range(n_k):
                    tt = t + k - pad
                    if tt < 0 or tt >= n_t:
                        continue
                    for c in range(n_c):
                        acc += w[f, c, k] * x[s, tt, c]
                out[s, t, f] = acc
    return out


def _conv1d_backward_py(x, w, gout):
    n_b, n_t, n_c = x.shape
    n_f, _, n_k = w.shape
    pad = (n_k - 1) // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.zeros(n_f, dtype=x.dtype)
    for s in range(n_b):
        for t in range(n_t):
            for f in range(n_f):
                g = gout[s, t, f]
                if g == 0.0:
                    continue
                gb[f] += g
                for k in range(n_k):
                    tt = t + k - pad
                    if tt < 0 or tt >= n_t:
                        continue
                    for c in range(n_c):
                        gw[f, c, k] += g * x[s, tt, c]
                        gx[s, tt, c] += g * w[f, c, k]
    return gx, gw, gb


def _pad_time(x, n_k):
    pad = (n_k - 1) // 2
    return np.pad(x, ((0, 0), (pad, n_k - 1 - pad), (0, 0)))


def numpy_conv1d_forward(x, w, b):
    """``out[s, t, f] = b[f] + sum_{c,k} w[f, c, k] * x[s, t + k - pad, c]``."""
    win = sliding_window_view(_pad_time(x, w.shape[2]), w.shape[2], axis=1)
    return np.einsum("btck,fck->btf", win, w, optimize=True) + b


def numpy_conv1d_backward(x, w, gout):
    """Gradients of ``numpy_conv1d_forward`` w.r.t. input, weights and bias."""
    n_k = w.shape[2]
    pad = (n_k - 1) // 2
    win = sliding_window_view(_pad_time(x, n_k), n_k, axis=1)
    gw = np.einsum("btf,btck->fck", gout, win, optimize=True)
    gb = gout.sum(axis=(0, 1))
    gpad = np.zeros((x.shape[0], x.shape[1] + n_k - 1, x.shape[2]), dtype=x.dtype)
    for k in range(n_k):
        gpad[:, k:k + x.shape[1], :] += gout @ w[:, :, k]
    return gpad[:, pad:pad + x.shape[1], :], gw, gb


# ---------------------------------------------------------------------------
# birth-death chain walk
# ---------------------------------------------------------------------------


def _chain_walk_py(p_birth, q_death, state0, uniforms):
    n = uniforms.shape[0]
    out = np.empty(n + 1, dtype=np.int64)
    k = state0
    out[0] = k
    for i in range(n):
        q = k * q_death
        if p_birth + q > 1.0 + 1e-12:
            return out[:i + 1], i
        u = uniforms[i]
        if u < p_birth:
            k += 1
        elif u < p_birth + q:
            k -= 1
        out[i + 1] = k
    return out, -1


def numpy_chain_walk(p_birth, q_death, state0, uniforms):
    """Walk the alive-count chain; returns (states, failed_step or -1).

    Per step: +1 with probability ``p_birth``, -1 with ``k * q_death``.  The
    walk stops early if a state makes the step probabilities exceed one.
    """
    return _chain_walk_py(float(p_birth), float(q_death), int(state0), np.asarray(uniforms, dtype=np.float64))


# ---------------------------------------------------------------------------
# numba builds + dispatch
# ---------------------------------------------------------------------------

if HAS_NUMBA:
    numba_segment_box_hits_impl = njit(_segment_box_hits_py)
    numba_greedy_match_impl = njit(_greedy_match_py)
    _pearson_nb = njit(_pearson_py)

    @njit
    def _corr_counts_nb(starts, ends, offsets, params, target, cutoff, min_overlap, rho_min):
        pos = 0
        neg = 0
        t_start = starts[target]
        t_end = min(ends[target], cutoff)
        for o in range(starts.shape[0]):
            if o == target:
                continue
            lo = max(t_start, starts[o])
            hi = min(t_end, ends[o])
            if hi - lo + 1 < min_overlap:
                continue
            a0 = offsets[target] + (lo - t_start)
            b0 = offsets[o] + (lo - starts[o])
            length = hi - lo + 1
            for u in range(params.shape[1]):
                r = _pearson_nb(params[a0:a0 + length, u], params[b0:b0 + length, u])
                if r > rho_min:
                    pos += 1
                elif r < -rho_min:
                    neg += 1
        return pos, neg

    _grow_tree_nb = njit(_grow_tree_py)
    _tree_apply_nb = njit(_tree_apply_py)
    # im2col + BLAS beats the plain loops (kept above as the reference)

    @njit
    def _im2col_nb(x, n_k):
        n_b, n_t, n_c = x.shape
        pad = (n_k - 1) // 2
        cols = np.zeros((n_b * n_t, n_c * n_k), dtype=x.dtype)
        for s in range(n_b):
            for t in range(n_t):
                r = s * n_t + t
                for k in range(n_k):
                    tt = t + k - pad
                    if tt < 0 or tt >= n_t:
                        continue
                    for c in range(n_c):
                        cols[r, c * n_k + k] = x[s, tt, c]
        return cols

    @njit
    def _col2im_nb(gcols, n_b, n_t, n_c, n_k):
        pad = (n_k - 1) // 2
        gx = np.zeros((n_b, n_t, n_c), dtype=gcols.dtype)
        for s in range(n_b):
            for t in range(n_t):
                r = s * n_t + t
                for k in range(n_k):
                    tt = t + k - pad
                    if tt < 0 or tt >= n_t:
                        continue
                    for c in range(n_c):
                        gx[s, tt, c] += gcols[r, c * n_k + k]
        return gx

    @njit
    def _conv1d_forward_nb(x, w, b):
        n_b, n_t, n_c = x.shape
        n_f, _, n_k = w.shape
        cols = _im2col_nb(x, n_k)
        out = np.dot(cols, np.ascontiguousarray(w.reshape(n_f, n_c * n_k).T))
        for i in range(out.shape[0]):
            for f in range(n_f):
                out[i, f] += b[f]
        return out.reshape(n_b, n_t, n_f)

    @njit
    def _conv1d_backward_nb(x, w, gout):
        n_b, n_t, n_c = x.shape
        n_f, _, n_k = w.shape
        cols = _im2col_nb(x, n_k)
        g2 = np.ascontiguousarray(gout).reshape(n_b * n_t, n_f)
        gw = np.dot(np.ascontiguousarray(g2.T), cols).reshape(n_f, n_c, n_k)
        gb = np.zeros(n_f, dtype=x.dtype)
        for i in range(g2.shape[0]):
            for f in range(n_f):
                gb[f] += g2[i, f]
        gcols = np.dot(g2, np.ascontiguousarray(w.reshape(n_f, n_c * n_k)))
        return _col2im_nb(gcols, n_b, n_t, n_c, n_k), gw, gb

    _chain_walk_nb = njit(_chain_walk_py)

    def numba_segment_box_hits(p0, p1, bmin, bmax, eps=1e-9):
        p0 = np.ascontiguousarray(p0, dtype=np.float64).reshape(-1, 3)
        p1 = np.ascontiguousarray(p1, dtype=np.float64).reshape(-1, 3)
        bmin = np.ascontiguousarray(bmin, dtype=np.float64).reshape(-1, 3)
        bmax = np.ascontiguousarray(bmax, dtype=np.float64).reshape(-1, 3)
        return numba_segment_box_hits_impl(p0, p1, bmin, bmax, float(eps))

    def numba_greedy_match(dist, d_max):
        dist = np.ascontiguousarray(dist, dtype=np.float64)
        if dist.size == 0:
            return np.full(dist.shape[0], -1, dtype=np.int64)
        order = np.argsort(dist, axis=None, kind="stable")
        return numba_greedy_match_impl(dist, float(d_max), order)

    def numba_correlation_counts(starts, ends, offsets, params, target, cutoff, min_overlap, rho_min):
        return _corr_counts_nb(starts, ends, offsets, params, int(target), int(cutoff),
                               int(min_overlap), float(rho_min))

    def numba_grow_tree(X, y, n_classes, sample_idx, feat_u, max_features, min_leaf=1):
        return _grow_tree_nb(np.ascontiguousarray(X, dtype=np.float64),
                             np.ascontiguousarray(y, dtype=np.int64), int(n_classes),
                             np.ascontiguousarray(sample_idx, dtype=np.int64),
                             np.ascontiguousarray(feat_u, dtype=np.float64),
                             int(max_features), int(min_leaf))

    def numba_tree_apply(X, feature, threshold, left, right, value):
        return _tree_apply_nb(np.ascontiguousarray(X, dtype=np.float64), feature, threshold,
                              left, right, value)

    def numba_conv1d_forward(x, w, b):
        return _conv1d_forward_nb(np.ascontiguousarray(x), np.ascontiguousarray(w), np.ascontiguousarray(b))

    def numba_conv1d_backward(x, w, gout):
        return _conv1d_backward_nb(np.ascontiguousarray(x), np.ascontiguousarray(w),
                                   np.ascontiguousarray(gout, dtype=x.dtype))

    def numba_chain_walk(p_birth, q_death, state0, uniforms):
        return _chain_walk_nb(float(p_birth), float(q_death), int(state0),
                              np.ascontiguousarray(uniforms, dtype=np.float64))


_NAMES = (
    "segment_box_hits",
    "greedy_match",
    "correlation_counts",
    "grow_tree",
    "tree_apply",
    "conv1d_forward",
    "conv1d_backward",
    "chain_walk",
)


def implementations(name):
    """``{"numpy": fn, "numba": fn}`` for one kernel (numba key only if available)."""
    impls = {"numpy": globals()["numpy_" + name]}
    if HAS_NUMBA:
        impls["numba"] = globals()["numba_" + name]
    return impls


_PREFIX = "numba_" if USE_NUMBA else "numpy_"
segment_box_hits = globals()[_PREFIX + "segment_box_hits"]
greedy_match = globals()[_PREFIX + "greedy_match"]
correlation_counts = globals()[_PREFIX + "correlation_counts"]
grow_tree = globals()[_PREFIX + "grow_tree"]
tree_apply = globals()[_PREFIX + "tree_apply"]
conv1d_forward = globals()[_PREFIX + "conv1d_forward"]
conv1d_backward = globals()[_PREFIX + "conv1d_backward"]
chain_walk = globals()[_PREFIX + "chain_walk"]

"""Feature rows and sequence samples for lifespan prediction.

Everything here is causal: when a bin is observed only up to a cutoff
position, every quantity (variations, correlations with partner bins,
concurrency, trends) is computed from records at or before that cutoff.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .binning import PathBin, birth_death_events, pack_bins

FEATURE_NAMES = (
    "dalpha", "dtau", "dtheta_t", "dphi_t", "dtheta_r", "dphi_r",
    "c_pos", "c_neg", "m_oth_centered",
)
SEQUENCE_COLUMNS = (
    "alpha", "tau", "theta_t", "phi_t", "theta_r", "phi_r",
    "tr_alpha", "tr_tau", "tr_theta_t", "tr_phi_t", "tr_theta_r", "tr_phi_r",
    "m_other",
)
DEFAULT_FRACTIONS = (0.3, 0.6, 0.9)


@dataclass(frozen=True)
class TruncationSpec:
    fraction: float

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"truncation fraction must lie in (0, 1), got {self.fraction}")

    def prefix_length(self, lifespan):
        return max(1, int(np.floor(self.fraction * lifespan + 0.5)))


@dataclass(frozen=True)
class Prefix:
    """Observed head of a closed bin; ``lifespan`` is the scoring label."""

    bin: PathBin
    lifespan: int
    fraction: float

    @property
    def covered(self):
        return len(self.bin.records)

    @property
    def cutoff(self):
        return self.bin.last


def truncate_bin(bin, spec):
    if not isinstance(spec, TruncationSpec):
        spec = TruncationSpec(float(spec))
    if not bin.closed:
        raise ValueError(f"bin {bin.bin_id} is still open; its lifespan is unknown")
    k = spec.prefix_length(bin.lifespan)
    head = PathBin(bin.bin_id, bin.records[:k], False, bin.scaled[:k])
    return Prefix(head, bin.lifespan, spec.fraction)


def parameter_variation(bin, u=None):
    """Mean absolute successive difference of scaled parameter ``u``.

    With ``u=None`` all six are returned.  Single-record bins give 0.
    """
    x = bin.scaled if isinstance(bin, PathBin) else np.asarray(bin, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        out = np.zeros(x.shape[1])
    else:
        out = np.abs(np.diff(x, axis=0)).mean(axis=0)
    return out if u is None else float(out[u])


@dataclass
class FeatureContext:
    """Per-dataset lookup tables shared by all bins of that dataset."""

    bins: tuple
    packed: object
    alive: np.ndarray
    first_index: int
    m_bar: float
    rho_min: float = 0.5
    min_overlap: int = 3
    _row: dict = field(default_factory=dict, repr=False)

    def row_of(self, bin_id):
        return self._row[bin_id]

    def alive_at(self, rx):
        return self.alive[np.asarray(rx) - self.first_index]


def build_context(bins, first_index=1, last_index=None, *, m_bar=None, rho_min=0.5, min_overlap=3):
    """Context for one dataset's bins.

    ``m_bar`` defaults to the mean alive count over the dataset's positions;
    pass a value estimated elsewhere (e.g. on training bins) to override.
    """
    bins = tuple(bins)
    if last_index is None:
        last_index = max((b.last for b in bins), default=first_index)
    _, alive = birth_death_events(bins, first_index, last_index)
    if m_bar is None:
        m_bar = float(alive.mean()) if alive.size else 0.0
    packed = pack_bins(bins)
    ctx = FeatureContext(bins, packed, alive, first_index, float(m_bar), rho_min, min_overlap)
    ctx._row = {b.bin_id: i for i, b in enumerate(bins)}
    return ctx


def context_for_binning(binning, **kw):
    return build_context(binning.bins, binning.first_index, binning.last_index, **kw)


def correlation_counts(bin, context, cutoff=None):
    """(C_pos, C_neg) of ``bin`` against every other bin of the context."""
    t = context.row_of(bin.bin_id)
    if cutoff is None:
        cutoff = bin.last
    p = context.packed
    pos, neg = kernels.correlation_counts(
        p.starts, p.ends, p.offsets, p.params, t, int(cutoff),
        context.min_overlap, context.rho_min)
    return int(pos), int(neg)


def concurrency_features(bin, context, cutoff=None):
    """(M_oth, M_bar): other bins seen alive during the bin's observed span."""
    if cutoff is None:
        cutoff = bin.last
    p = context.packed
    t = context.row_of(bin.bin_id)
    hit = (p.starts <= cutoff) & (p.ends >= bin.birth)
    hit[t] = False
    return int(np.count_nonzero(hit)), context.m_bar


def feature_row(bin, context):
    """Nine-entry feature row for ``bin`` (a PathBin or a Prefix)."""
    if isinstance(bin, Prefix):
        bin = bin.bin
    cutoff = bin.last
    row = np.empty(len(FEATURE_NAMES))
    row[:6] = parameter_variation(bin)
    row[6], row[7] = correlation_counts(bin, context, cutoff)
    m_oth, m_bar = concurrency_features(bin, context, cutoff)
    row[8] = m_oth - m_bar
    return row


@dataclass
class FeatureMatrix:
    V: np.ndarray
    X: np.ndarray
    covered: np.ndarray
    fraction: np.ndarray
    keys: list

    def __len__(self):
        return self.V.shape[0]

    def subset(self, mask):
        idx = np.flatnonzero(mask)
        return FeatureMatrix(self.V[idx], self.X[idx], self.covered[idx], self.fraction[idx],
                             [self.keys[i] for i in idx])


def feature_matrix(bins, context, fractions=None, key=None):
    """Rows for closed bins (full length, or one row per fraction).

    Rows are ordered by bin id, then fraction.  ``key`` tags each row's
    source (e.g. the replicate index) in ``keys``.
    """
    rows, X, cov, frac, keys = [], [], [], [], []
    for b in sorted(bins, key=lambda b: b.bin_id):
        if fractions is None:
            items = [(b, 1.0)]
        else:
            items = [(truncate_bin(b, f).bin, f) for f in fractions]
        for head, f in items:
            rows.append(feature_row(head, context))
            X.append(b.lifespan)
            cov.append(len(head.records))
            frac.append(f)
            keys.append((key, b.bin_id))
    V = np.array(rows, dtype=float).reshape(-1, len(FEATURE_NAMES))
    return FeatureMatrix(V, np.array(X, dtype=float), np.array(cov, dtype=np.int64),
                         np.array(frac, dtype=float), keys)


def linear_trend(bin, u=None):
    """Least-squares line over the bin's rx positions, evaluated there."""
    x = bin.scaled if isinstance(bin, PathBin) else np.asarray(bin, dtype=float)
    rx = bin.rx.astype(float) if isinstance(bin, PathBin) else np.arange(1.0, x.shape[0] + 1)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        fit = np.broadcast_to(mean, x.shape).copy()
    else:
        t = rx - rx.mean()
        slope = (t @ (x - mean)) / (t @ t)
        fit = mean + np.outer(t, slope)
    if squeeze:
        fit = fit[:, 0]
    return fit if u is None else fit[:, u]


@dataclass(frozen=True)
class SequenceSample:
    matrix: np.ndarray
    label: float
    covered: int

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(SEQUENCE_COLUMNS):
            raise ValueError(f"sequence rows need {len(SEQUENCE_COLUMNS)} columns")


def sequence_rows(n, step):
    if step < 1:
        raise ValueError("undersample step must be >= 1")
    idx = np.arange(0, n, step)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def sequence_sample(bin, context, undersample_step=1, label=None):
    """Per-position matrix [parameters | trend fit | other alive bins]."""
    if isinstance(bin, Prefix):
        label = bin.lifespan if label is None else label
        bin = bin.bin
    if label is None:
        label = bin.lifespan
    n = len(bin.records)
    mat = np.empty((n, len(SEQUENCE_COLUMNS)))
    mat[:, :6] = bin.scaled
    mat[:, 6:12] = linear_trend(bin)
    mat[:, 12] = context.alive_at(bin.rx) - 1
    idx = sequence_rows(n, undersample_step)
    return SequenceSample(mat[idx], float(label), n)


def sequence_samples(bins, context, fractions=None, undersample_step=1):
    out = []
    for b in sorted(bins, key=lambda b: b.bin_id):
        heads = [b] if fractions is None else [truncate_bin(b, f) for f in fractions]
        for h in heads:
            out.append(sequence_sample(h, context, undersample_step, label=b.lifespan))
    return out


def clip_bins(bins, cutoff):
    """Bins as they would look if observation stopped at ``cutoff``.

    Records after the cutoff are dropped and bins born later vanish.  Used to
    audit that features of a prefix never look past its cutoff.
    """
    out = []
    for b in bins:
        k = int(np.searchsorted(b.rx, cutoff, side="right"))
        if k == 0:
            continue
        out.append(PathBin(b.bin_id, b.records[:k], b.closed and k == len(b.records), b.scaled[:k]))
    return tuple(out)


def write_feature_csv(path, fm):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(FEATURE_NAMES) + ["lifespan", "covered", "fraction"])
        for row, x, c, f in zip(fm.V, fm.X, fm.covered, fm.fraction):
            w.writerow([repr(float(v)) for v in row] + [int(x), int(c), f])


def read_feature_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header[:9]) != FEATURE_NAMES:
            raise ValueError(f"{path}: unexpected feature header")
        rows = [list(map(float, line)) for line in r]
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return FeatureMatrix(arr[:, :9], arr[:, 9], arr[:, 10].astype(np.int64), arr[:, 11],
                         [(None, i) for i in range(arr.shape[0])])


def write_sequences_jsonl(path, samples):
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps({"rows": s.matrix.tolist(), "label": s.label,
                                 "covered": s.covered}) + "\n")


def read_sequences_jsonl(path):
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(SequenceSample(np.array(d["rows"], dtype=float).reshape(-1, 13),
                                          float(d["label"]), int(d["covered"])))
    return out

"""Group per-position MPCs into path bins and describe their birth/death.

Each parameter is first put on a comparable scale (amplitude in dB, delay in
units of 10 ns, angles in degrees by default).  The distance between two
components is the sum of per-parameter absolute differences divided by a
normalizing factor; components are chained greedily, nearest pair first,
onto the bins that were alive at the previous position.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .simulator import ConfigError

PARAM_NAMES = ("alpha", "tau", "theta_t", "phi_t", "theta_r", "phi_r")
AZIMUTH_COLUMNS = (3, 5)


@dataclass(frozen=True)
class BinningConfig:
    amplitude_scale: float = 1.0          # dB per unit
    delay_scale: float = 10e-9            # seconds per unit
    angle_scale: float = math.pi / 180.0  # radians per unit
    amplitude_in_db: bool = True
    gamma: float = 6.0
    d_max: float = 1.0
    lookback: int = 1
    min_overlap: int = 3
    rho_min: float = 0.5

    def validate(self):
        if min(self.scales) <= 0:
            raise ConfigError("parameter scale factors must be positive")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.d_max > 0:
            raise ConfigError("d_max must be positive")
        if int(self.lookback) != self.lookback or self.lookback < 1:
            raise ConfigError("lookback must be an integer >= 1")
        if self.min_overlap < 2:
            raise ConfigError("min_overlap must be at least 2")
        return self

    @property
    def scales(self):
        a = self.angle_scale
        return np.array([self.amplitude_scale, self.delay_scale, a, a, a, a], dtype=float)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown binning keys: {sorted(unknown)}")
        return cls(**d)


def standardize_records(records, config):
    """(n, 6) array of scaled parameters for a sequence of MpcRecords."""
    scales = config.scales
    if np.any(scales == 0):
        raise ConfigError("zero scale factor")
    raw = np.array([m.params() for m in records], dtype=float).reshape(-1, 6)
    if config.amplitude_in_db:
        with np.errstate(divide="ignore"):
            raw[:, 0] = 20.0 * np.log10(raw[:, 0])
    return raw / scales


def standardize_parameters(dataset, config):
    """Scaled parameter view, one (M_n, 6) array per snapshot.

    The dataset's records are left untouched.
    """
    if not dataset.snapshots:
        raise ValueError("empty dataset")
    config.validate()
    return [standardize_records(s.mpcs, config) for s in dataset.snapshots]


def _azimuth_period(config):
    return 2.0 * math.pi / config.angle_scale


def _abs_diffs(a, b, config):
    d = np.abs(np.subtract(a, b))
    period = _azimuth_period(config)
    for c in AZIMUTH_COLUMNS:
        dc = np.mod(d[..., c], period)
        d[..., c] = np.minimum(dc, period - dc)
    return d


def mpc_distance(a, b, config):
    """Normalized sum of per-parameter distances between two components.

    ``a`` and ``b`` are scaled 6-vectors (or MpcRecords, scaled on the fly).
    Azimuth differences wrap around the circle.
    """
    if hasattr(a, "params"):
        a = standardize_records([a], config)[0]
    if hasattr(b, "params"):
        b = standardize_records([b], config)[0]
    return float(_abs_diffs(np.asarray(a, float), np.asarray(b, float), config).sum() / config.gamma)


def distance_matrix(current, previous, config):
    """Pairwise ``mpc_distance`` between rows of two scaled arrays."""
    if current.shape[0] == 0 or previous.shape[0] == 0:
        return np.zeros((current.shape[0], previous.shape[0]))
    d = _abs_diffs(current[:, None, :], previous[None, :, :], config)
    return d.sum(axis=2) / config.gamma


@dataclass(frozen=True)
class PathBin:
    """Time series of one tracked component.

    ``scaled`` holds the scaled parameters of ``records`` row by row, with
    the azimuth columns unwrapped along the bin.
    """

    bin_id: int
    records: tuple
    closed: bool
    scaled: np.ndarray = field(repr=False, compare=False)

    @property
    def birth(self):
        return self.records[0].rx_index

    @property
    def last(self):
        return self.records[-1].rx_index

    @property
    def death(self):
        """Last covered position, or None while the bin is still open."""
        return self.last if self.closed else None

    @property
    def lifespan(self):
        return self.last - self.birth + 1

    @property
    def rx(self):
        return np.array([m.rx_index for m in self.records], dtype=np.int64)

    def is_contiguous(self):
        return len(self.records) == self.lifespan

    def power_dbm(self):
        return np.array([m.power_dbm for m in self.records])


@dataclass(frozen=True)
class BirthDeathEvent:
    kind: str
    rx_index: int
    bin_id: int


@dataclass(frozen=True)
class Binning:
    bins: tuple
    events: tuple
    first_index: int
    last_index: int

    @property
    def num_positions(self):
        return self.last_index - self.first_index + 1


def _unwrap(scaled, config):
    out = scaled.copy()
    if out.shape[0] > 1:
        period = _azimuth_period(config)
        for c in AZIMUTH_COLUMNS:
            out[:, c] = np.unwrap(out[:, c], period=period)
    return out


def make_bin(bin_id, records, closed, config):
    scaled = standardize_records(records, config)
    return PathBin(bin_id, tuple(records), bool(closed), _unwrap(scaled, config))


def bin_mpcs(dataset, config):
    """Greedy sequential assignment of components to path bins.

    At every position the still-eligible bins (last record within
    ``lookback`` positions) are matched one-to-one to the new components,
    nearest pair first, up to ``d_max``.  Unmatched components open new
    bins.  Bins still alive at the final position are left open.
    """
    config.validate()
    if not dataset.snapshots:
        return Binning((), (), 1, 0)
    first = dataset.snapshots[0].rx_index
    last_pos = dataset.snapshots[-1].rx_index

    bin_records = []   # list of lists of MpcRecord
    bin_last = []      # latest scaled vector per bin
    bin_last_rx = []
    eligible = []      # indices into bin_records

    for snap in dataset.snapshots:
        n = snap.rx_index
        eligible = [b for b in eligible if n - bin_last_rx[b] <= config.lookback]
        cur = standardize_records(snap.mpcs, config)
        if eligible and cur.shape[0]:
            prev = np.array([bin_last[b] for b in eligible])
            assign = kernels.greedy_match(distance_matrix(cur, prev, config), config.d_max)
        else:
            assign = np.full(cur.shape[0], -1, dtype=np.int64)
        for i, rec in enumerate(snap.mpcs):
            if assign[i] >= 0:
                b = eligible[assign[i]]
            else:
                b = len(bin_records)
                bin_records.append([])
                bin_last.append(None)
                bin_last_rx.append(None)
                eligible.append(b)
            bin_records[b].append(rec)
            bin_last[b] = cur[i]
            bin_last_rx[b] = n

    bins = tuple(
        make_bin(b, recs, recs[-1].rx_index < last_pos, config)
        for b, recs in enumerate(bin_records))
    events, _ = birth_death_events(bins, first, last_pos)
    return Binning(bins, tuple(events), first, last_pos)


def birth_death_events(bins, first_index=1, last_index=None):
    """Birth/death events and the alive-count series over the positions.

    A death is reported at the first position where the bin is no longer
    observed (its last covered position + 1), so that
    ``alive[n] - alive[n-1] == births[n] - deaths[n]``.
    Returns ``(events, alive)`` with ``alive[i]`` for position
    ``first_index + i``.
    """
    if last_index is None:
        last_index = max((b.last for b in bins), default=first_index)
    n_pos = last_index - first_index + 1
    alive = np.zeros(max(n_pos, 0), dtype=np.int64)
    events = []
    for b in bins:
        events.append(BirthDeathEvent("birth", b.birth, b.bin_id))
        if b.closed:
            events.append(BirthDeathEvent("death", b.last + 1, b.bin_id))
        for n in b.rx:
            if first_index <= n <= last_index:
                alive[n - first_index] += 1
    events.sort(key=lambda e: (e.rx_index, e.kind != "death", e.bin_id))
    return events, alive


def pairwise_bin_correlation(a, b, config, cutoff=None):
    """Per-parameter Pearson correlation over the shared positions.

    Positions after ``cutoff`` are ignored.  Returns None when the overlap is
    shorter than ``config.min_overlap``; zero-variance series give 0.
    """
    hi = min(a.last, b.last)
    if cutoff is not None:
        hi = min(hi, cutoff)
    lo = max(a.birth, b.birth)
    if hi - lo + 1 < config.min_overlap:
        return None
    ra, rb = a.rx, b.rx
    ia = (ra >= lo) & (ra <= hi)
    ib = (rb >= lo) & (rb <= hi)
    common = np.intersect1d(ra[ia], rb[ib])
    if common.shape[0] < config.min_overlap:
        return None
    xa = a.scaled[np.searchsorted(ra, common)]
    xb = b.scaled[np.searchsorted(rb, common)]
    return kernels.numpy_window_correlations(xa, xb)


@dataclass
class CorrelationMatrix:
    """Sparse symmetric store of correlation vectors keyed by bin id pairs."""

    entries: dict = field(default_factory=dict)

    def get(self, a, b):
        return self.entries.get((min(a, b), max(a, b)))

    def partners(self, a):
        for (i, j), c in self.entries.items():
            if i == a:
                yield j, c
            elif j == a:
                yield i, c

    def __len__(self):
        return len(self.entries)


def correlation_matrix(bins, config, cutoff=None):
    out = CorrelationMatrix()
    bins = list(bins)
    for i, a in enumerate(bins):
        for b in bins[i + 1:]:
            c = pairwise_bin_correlation(a, b, config, cutoff)
            if c is not None:
                out.entries[(min(a.bin_id, b.bin_id), max(a.bin_id, b.bin_id))] = c
    return out


@dataclass(frozen=True)
class PackedBins:
    """Contiguous arrays of one dataset's bins, as consumed by the kernels."""

    bin_ids: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    offsets: np.ndarray
    params: np.ndarray

    def index_of(self, bin_id):
        return int(np.flatnonzero(self.bin_ids == bin_id)[0])


def pack_bins(bins):
    bins = list(bins)
    for b in bins:
        if not b.is_contiguous():
            raise ValueError(f"bin {b.bin_id} has gaps; features need gapless bins")
    lengths = np.array([b.lifespan for b in bins], dtype=np.int64)
    offsets = np.zeros(len(bins), dtype=np.int64)
    if bins:
        offsets[1:] = np.cumsum(lengths)[:-1]
        params = np.ascontiguousarray(np.vstack([b.scaled for b in bins]))
    else:
        params = np.zeros((0, 6))
    return PackedBins(
        bin_ids=np.array([b.bin_id for b in bins], dtype=np.int64),
        starts=np.array([b.birth for b in bins], dtype=np.int64),
        ends=np.array([b.last for b in bins], dtype=np.int64),
        offsets=offsets,
        params=params)


def rand_index(labels_a, labels_b):
    """Rand index between two labelings of the same items."""
    a = np.unique(np.asarray(labels_a), return_inverse=True)[1]
    b = np.unique(np.asarray(labels_b), return_inverse=True)[1]
    n = a.shape[0]
    if n < 2:
        return 1.0
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    comb = lambda x: x * (x - 1) // 2
    both = comb(table).sum()
    same_a = comb(table.sum(axis=1)).sum()
    same_b = comb(table.sum(axis=0)).sum()
    total = comb(n)
    agree = total + 2 * both - same_a - same_b
    return float(agree / total)

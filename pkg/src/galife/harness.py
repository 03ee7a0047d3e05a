"""Experiment driver: Monte Carlo replicates, splitting, scoring, reports."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .simulator import ChannelDataset, ChannelSnapshot, ConfigError, MpcRecord

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class McConfig:
    replicates: int = 100
    amplitude_db: float = 1.0
    delay_s: float = 2e-9
    angle_rad: float = math.radians(1.0)
    seed: int = 0

    def validate(self):
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ConfigError("replicates must be an integer >= 1")
        if min(self.amplitude_db, self.delay_s, self.angle_rad) < 0:
            raise ConfigError("perturbation scales must be nonnegative")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown monte_carlo keys: {sorted(unknown)}")
        return cls(**d)


def perturb_dataset(dataset, mc, replicate, threshold_dbm):
    """One Monte Carlo replicate.

    Every record gets independent zero-mean Gaussian noise on amplitude (dB),
    delay and the four angles, and a fresh uniform phase; the detection
    threshold is then applied again.  The random stream depends only on
    ``(mc.seed, replicate)``.
    """
    rng = np.random.default_rng([int(mc.seed), int(replicate)])
    snaps = []
    for snap in dataset.snapshots:
        m = len(snap.mpcs)
        noise = rng.standard_normal((m, 6))
        phase = rng.random(m) * TWO_PI
        kept = []
        for k, rec in enumerate(snap.mpcs):
            z = noise[k]
            d_db = mc.amplitude_db * z[0]
            power = rec.power_dbm + d_db
            if not power > threshold_dbm:
                continue
            th_t = min(max(rec.theta_t + mc.angle_rad * z[2], -math.pi / 2), math.pi / 2)
            th_r = min(max(rec.theta_r + mc.angle_rad * z[4], -math.pi / 2), math.pi / 2)
            kept.append(MpcRecord(
                alpha=rec.alpha * 10.0 ** (d_db / 20.0), power_dbm=power,
                tau=max(rec.tau + mc.delay_s * z[1], 0.0),
                theta_t=th_t, phi_t=(rec.phi_t + mc.angle_rad * z[3]) % TWO_PI,
                theta_r=th_r, phi_r=(rec.phi_r + mc.angle_rad * z[5]) % TWO_PI,
                phase=float(phase[k]) % TWO_PI, rx_index=rec.rx_index,
                true_ray_id=rec.true_ray_id))
        snaps.append(ChannelSnapshot(snap.rx_index, tuple(kept)))
    return ChannelDataset(tuple(snaps), config=dataset.config, seed=mc.seed, replicate=int(replicate))


def monte_carlo_augment(dataset, mc, threshold_dbm=None):
    mc.validate()
    if threshold_dbm is None:
        threshold_dbm = dataset.config.power_threshold_dbm if dataset.config else -math.inf
    return [perturb_dataset(dataset, mc, i, threshold_dbm) for i in range(mc.replicates)]


# ---------------------------------------------------------------------------
# splitting and scoring
# ---------------------------------------------------------------------------


def split(bins, ratio=0.8, seed=0, min_lifespan=1):
    """Split bins into (train, test) lists by bin, never by row.

    Only closed bins with at least ``min_lifespan`` positions can land in
    the test set; all others stay in training.  ``bins`` may hold PathBins
    or ``(key, PathBin)`` pairs.
    """
    items = list(bins)
    pb = [it[1] if isinstance(it, tuple) else it for it in items]
    elig = np.array([b.closed and b.lifespan >= min_lifespan for b in pb], dtype=bool)
    n_closed = int(elig.sum())
    if n_closed < 2:
        raise ValueError(f"need at least 2 closed bins to split, got {n_closed}")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    n_test = n_closed - int(round(ratio * n_closed))
    n_test = min(max(n_test, 1), n_closed - 1)
    rng = np.random.default_rng(seed)
    cand = np.flatnonzero(elig)
    test_idx = set(rng.permutation(cand)[:n_test].tolist())
    train = [it for i, it in enumerate(items) if i not in test_idx]
    test = [it for i, it in enumerate(items) if i in test_idx]
    return train, test


@dataclass
class MaeCell:
    fraction: float
    mae: float
    samples: int


def mae(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("predictions and labels must be nonempty and aligned")
    return float(np.mean(np.abs(pred - truth)))


def evaluate_mae(predict, test_bins, fractions=(0.3, 0.6, 0.9)):
    """MAE per truncation fraction and the unweighted overall mean.

    ``predict(prefixes)`` receives a list of ``Prefix`` objects (closed test
    bins cut at one fraction) and returns one lifespan per prefix.
    """
    from .features import truncate_bin

    cells = []
    for f in fractions:
        prefixes = [truncate_bin(b, f) for b in test_bins]
        pred = np.asarray(predict(prefixes), dtype=float)
        cells.append(MaeCell(float(f), mae(pred, [p.lifespan for p in prefixes]), len(prefixes)))
    overall = float(np.mean([c.mae for c in cells]))
    return cells, overall


def kfold_split(bins, folds=5, seed=0, min_lifespan=1):
    """Rotate the test role over ``folds`` disjoint slices of the eligible bins.

    Yields ``(train, test)`` per fold; every eligible bin (closed, at least
    ``min_lifespan`` long) is tested exactly once.  With ``folds=5`` each
    fold is an 80/20 split.
    """
    items = list(bins)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    pb = [it[1] if isinstance(it, tuple) else it for it in items]
    cand = np.flatnonzero([b.closed and b.lifespan >= min_lifespan for b in pb])
    if cand.shape[0] < folds:
        raise ValueError(f"need at least {folds} eligible bins, got {cand.shape[0]}")
    perm = np.random.default_rng(seed).permutation(cand)
    for chunk in np.array_split(perm, folds):
        test_idx = set(chunk.tolist())
        yield ([it for i, it in enumerate(items) if i not in test_idx],
               [it for i, it in enumerate(items) if i in test_idx])

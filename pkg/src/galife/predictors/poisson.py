"""Memoryless birth/death baseline.

Rates are kept per RX position (one chain step).  ``delta_n`` converts them
to per-meter values when needed.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels
from ..simulator import ConfigError


@dataclass(frozen=True)
class PoissonModel:
    nu: float                  # births per position
    mu: float                  # deaths per alive bin-position
    delta_n: float = 1.0       # meters per position
    births: int = 0
    deaths: int = 0
    exposure: int = 0
    num_positions: int = 0

    @property
    def mu_per_position(self):
        """Deaths per position, the normalization without exposure."""
        return self.deaths / self.num_positions if self.num_positions else float("nan")

    @property
    def nu_per_meter(self):
        return self.nu / self.delta_n

    @property
    def mu_per_meter(self):
        return self.mu / self.delta_n

    def to_dict(self):
        d = asdict(self)
        d["mu_per_position"] = self.mu_per_position
        return d

    @classmethod
    def from_dict(cls, d):
        keys = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in keys})

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def estimate_rates(events, bins, num_positions, delta_n=1.0):
    """Birth rate per position and death rate per alive bin-position."""
    if num_positions < 1:
        raise ValueError("num_positions must be >= 1")
    births = sum(1 for e in events if e.kind == "birth")
    deaths = sum(1 for e in events if e.kind == "death")
    exposure = int(sum(len(b.records) for b in bins))
    if exposure == 0:
        raise ValueError("zero exposure: the death rate is undefined")
    return PoissonModel(births / num_positions, deaths / exposure, float(delta_n),
                        births, deaths, exposure, int(num_positions))


def pool_rates(models):
    """Combine per-replicate counts into a single estimate."""
    models = list(models)
    births = sum(m.births for m in models)
    deaths = sum(m.deaths for m in models)
    exposure = sum(m.exposure for m in models)
    positions = sum(m.num_positions for m in models)
    if exposure == 0:
        raise ValueError("zero exposure: the death rate is undefined")
    return PoissonModel(births / positions, deaths / exposure, models[0].delta_n,
                        births, deaths, exposure, positions)


def poisson_pmf(y, lam):
    y = np.asarray(y)
    if np.any(y < 0):
        raise ValueError("counts must be nonnegative")
    if lam == 0:
        return np.where(y == 0, 1.0, 0.0)
    logp = y * math.log(lam) - lam - np.vectorize(math.lgamma)(y + 1.0)
    return np.exp(logp)


def death_pmf(y, model, state=1):
    """Probability of ``y`` deaths in one step among ``state`` alive bins."""
    return poisson_pmf(y, model.mu * state)


def birth_pmf(y, model):
    return poisson_pmf(y, model.nu)


def small_interval_pmf(y, lam):
    """Single-event approximation: 1 - lam, lam, then zero."""
    y = np.asarray(y)
    return np.where(y == 0, 1.0 - lam, np.where(y == 1, lam, 0.0))


def predict_lifespan_poisson(model, prefix=None):
    """Mean lifespan 1/mu; the prefix is deliberately ignored."""
    if not model.mu > 0:
        raise ValueError("death rate is zero: expected lifespan is infinite")
    return 1.0 / model.mu


def simulate_chain(model, steps, seed=0, state0=0):
    """Alive-count walk: +1 w.p. nu, -1 w.p. state * mu, per step."""
    rng = np.random.default_rng(seed)
    u = rng.random(int(steps))
    states, failed = kernels.chain_walk(model.nu, model.mu, int(state0), u)
    if failed >= 0:
        raise ConfigError(
            f"step probabilities exceed 1 at step {failed} (state {states[-1]})")
    return states


def birth_spacing_mae(model, events):
    """Mean |1/nu - gap| over gaps between consecutive births."""
    births = np.sort([e.rx_index for e in events if e.kind == "birth"])
    gaps = np.diff(births)
    if gaps.size == 0 or not model.nu > 0:
        return float("nan")
    return float(np.abs(1.0 / model.nu - gaps).mean())


def pmf_table(model, y_max=10):
    y = np.arange(y_max + 1)
    return y, death_pmf(y, model), birth_pmf(y, model)


def write_pmf_csv(path, model, y_max=None):
    """Death/birth PMFs; the last row carries the upper tail so columns sum to 1."""
    if y_max is None:
        y_max = max(10, int(math.ceil(max(model.mu, model.nu) * 10 + 10)))
    y, d, b = pmf_table(model, y_max)
    d = d.copy()
    b = b.copy()
    d[-1] += max(0.0, 1.0 - d.sum())
    b[-1] += max(0.0, 1.0 - b.sum())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "death_pmf", "birth_pmf"])
        for row in zip(y, d, b):
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2]))])

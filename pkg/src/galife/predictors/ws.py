"""Weighted-sum lifespan regression and the empirical lifespan hazard."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..features import FEATURE_NAMES

RIDGE_FACTOR = 1e-8
COND_LIMIT = 1e12


@dataclass(frozen=True)
class WsModel:
    weights: np.ndarray
    ridge: bool = False
    ridge_lambda: float = 0.0
    replicates: int = 1

    def to_dict(self):
        return {
            "weights": dict(zip(FEATURE_NAMES, map(float, self.weights))),
            "ridge": self.ridge,
            "ridge_lambda": self.ridge_lambda,
            "replicates": self.replicates,
        }

    @classmethod
    def from_dict(cls, d):
        w = np.array([d["weights"][k] for k in FEATURE_NAMES], dtype=float)
        return cls(w, bool(d.get("ridge", False)), float(d.get("ridge_lambda", 0.0)),
                   int(d.get("replicates", 1)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_ws(V, X):
    """Least-squares weights from the normal equations ``VᵀV W = VᵀX``.

    A Cholesky solve is used when ``VᵀV`` is well conditioned; otherwise a
    small ridge term (1e-8 of the mean diagonal) is added and the model is
    flagged.
    """
    V = np.asarray(V, dtype=float)
    X = np.asarray(X, dtype=float)
    if V.ndim != 2 or V.shape[0] != X.shape[0]:
        raise ValueError("V must be (M, p) with len(X) == M")
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(X))):
        raise ValueError("non-finite values in the design matrix or labels")
    p = V.shape[1]
    if V.shape[0] < p:
        raise ValueError(f"need at least {p} rows, got {V.shape[0]}")
    A = V.T @ V
    b = V.T @ X
    ridge = np.linalg.cond(A) > COND_LIMIT
    lam = 0.0
    if ridge:
        lam = RIDGE_FACTOR * np.trace(A) / p
        A = A + lam * np.eye(p)
    try:
        L = np.linalg.cholesky(A)
        W = np.linalg.solve(L.T, np.linalg.solve(L, b))
    except np.linalg.LinAlgError:
        W = np.linalg.lstsq(A, b, rcond=None)[0]
    return WsModel(W, bool(ridge), float(lam))


def fit_ws_replicates(designs):
    """Average of the per-replicate fits over ``[(V, X), ...]``."""
    models = [fit_ws(V, X) for V, X in designs]
    if not models:
        raise ValueError("no replicates to fit")
    W = np.mean([m.weights for m in models], axis=0)
    return WsModel(W, any(m.ridge for m in models),
                   max(m.ridge_lambda for m in models), len(models))


def predict_ws(model, rows, covered=None):
    """``rows @ W``, clamped below by the covered prefix length if given."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != model.weights.shape[0]:
        raise ValueError("feature row has the wrong length")
    pred = rows @ model.weights
    if covered is not None:
        pred = np.maximum(pred, covered)
    return pred


@dataclass(frozen=True)
class SemiMarkovEstimate:
    """Empirical hazard over lifespan n: deaths at n / bins reaching n."""

    hazard: np.ndarray          # hazard[n-1] for n = 1..max lifespan
    at_risk: np.ndarray
    deaths: np.ndarray
    birth_spacing: np.ndarray   # histogram of gaps between consecutive births
    transitions: dict = field(default_factory=dict)

    def q(self, n):
        return float(self.hazard[n - 1])


def estimate_semi_markov(bins):
    """Lifespan hazard table from closed bins, plus birth-gap diagnostics.

    ``transitions`` holds counts of alive-count moves ``(i, j)`` between
    consecutive positions, the raw material of the dependence counts.
    """
    bins = list(bins)
    closed = [b for b in bins if b.closed]
    if not closed:
        raise ValueError("need at least one closed bin")
    life = np.array([b.lifespan for b in closed], dtype=np.int64)
    n_max = int(life.max())
    deaths = np.bincount(life, minlength=n_max + 1)[1:]
    # every bin (open ones too) is at risk up to the length it was seen for
    seen = np.array([b.lifespan for b in bins], dtype=np.int64)
    at_risk = np.array([(seen >= n).sum() for n in range(1, n_max + 1)], dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        hazard = np.where(at_risk > 0, deaths / np.maximum(at_risk, 1), 0.0)
    births = np.sort([b.birth for b in bins])
    gaps = np.diff(births)
    spacing = np.bincount(gaps) if gaps.size else np.zeros(1, dtype=np.int64)
    first = min(b.birth for b in bins)
    last = max(b.last for b in bins)
    alive = np.zeros(last - first + 1, dtype=np.int64)
    for b in bins:
        alive[b.birth - first:b.last - first + 1] += 1
    trans = {}
    for i, j in zip(alive[:-1], alive[1:]):
        trans[(int(i), int(j))] = trans.get((int(i), int(j)), 0) + 1
    return SemiMarkovEstimate(hazard, at_risk, deaths, spacing, trans)

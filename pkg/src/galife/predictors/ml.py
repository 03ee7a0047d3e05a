"""LDA, Gaussian naive Bayes and a random forest over lifespan classes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels

MAX_CLASSES = 40


@dataclass(frozen=True)
class ClassBinning:
    """Lifespan classes, either one per distinct value or fixed-width bins.

    ``keys`` are the used class keys in ascending order: the lifespan value
    itself for unit classes, the bin index ``floor(x / width)`` otherwise.
    """

    width: float | None
    keys: np.ndarray

    @property
    def n_classes(self):
        return self.keys.shape[0]

    @property
    def representatives(self):
        if self.width is None:
            return self.keys.astype(float)
        return (self.keys + 0.5) * self.width

    @property
    def edges(self):
        if self.width is None:
            return None
        return np.append(self.keys, self.keys[-1] + 1) * self.width

    def key_of(self, X):
        X = np.asarray(X, dtype=float)
        return X if self.width is None else np.floor(X / self.width)

    def encode(self, X):
        k = self.key_of(X)
        idx = np.searchsorted(self.keys, k)
        idx = np.clip(idx, 0, self.n_classes - 1)
        if np.any(self.keys[idx] != k):
            raise ValueError("label outside the known classes")
        return idx.astype(np.int64)

    def decode(self, cls):
        return self.representatives[np.asarray(cls, dtype=np.int64)]

    def to_dict(self):
        return {"width": self.width, "keys": self.keys.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["width"], np.array(d["keys"], dtype=float))


def make_class_binning(X, width=None, max_classes=MAX_CLASSES):
    """Unit classes for up to ``max_classes`` distinct labels, else the
    smallest integer width that keeps the class count within the limit."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("no labels")
    if width is None:
        distinct = np.unique(X)
        if distinct.shape[0] <= max_classes:
            return ClassBinning(None, distinct)
        lo, hi = X.min(), X.max()
        width = 1
        while math.floor(hi / width) - math.floor(lo / width) + 1 > max_classes:
            width += 1
    if not width > 0:
        raise ValueError("class width must be positive")
    return ClassBinning(float(width), np.unique(np.floor(X / width)))


def discretize_labels(X, scheme=None):
    """Class indices for ``X`` and the scheme used."""
    if scheme is None:
        scheme = make_class_binning(X)
    return scheme.encode(X), scheme


def _check_rows(V, p=None):
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    if not np.all(np.isfinite(V)):
        raise ValueError("non-finite feature values")
    if p is not None and V.shape[1] != p:
        raise ValueError(f"expected {p} features, got {V.shape[1]}")
    return V


def _check_fit(V, y):
    V = _check_rows(V)
    y = np.asarray(y, dtype=np.int64)
    if y.shape[0] != V.shape[0] or y.shape[0] == 0:
        raise ValueError("V and labels must be nonempty and of equal length")
    return V, y


# ---------------------------------------------------------------------------
# linear discriminant analysis
# ---------------------------------------------------------------------------


@dataclass
class LdaModel:
    classes: np.ndarray
    means: np.ndarray
    cov: np.ndarray
    priors: np.ndarray
    regularized: bool = False
    trivial: bool = False
    _prec: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._prec is None:
            self._prec = np.linalg.inv(self.cov)

    def decision_function(self, V):
        V = _check_rows(V, self.means.shape[1])
        a = self.means @ self._prec                  # (K, p)
        c = -0.5 * np.einsum("kp,kp->k", a, self.means) + np.log(self.priors)
        return V @ a.T + c

    def predict_class(self, V):
        return self.classes[np.argmax(self.decision_function(V), axis=1)]

    def to_dict(self):
        return {"kind": "lda", "classes": self.classes.tolist(), "means": self.means.tolist(),
                "cov": self.cov.tolist(), "priors": self.priors.tolist(),
                "regularized": self.regularized, "trivial": self.trivial}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["classes"], dtype=np.int64), np.array(d["means"]),
                   np.array(d["cov"]), np.array(d["priors"]), d["regularized"], d["trivial"])


def fit_lda(V, y):
    V, y = _check_fit(V, y)
    classes = np.unique(y)
    n, p = V.shape
    means = np.array([V[y == k].mean(axis=0) for k in classes])
    priors = np.array([np.mean(y == k) for k in classes])
    resid = V - means[np.searchsorted(classes, y)]
    dof = n - classes.shape[0]
    cov = resid.T @ resid / (dof if dof > 0 else n)
    cov = 0.5 * (cov + cov.T)
    regularized = False
    if np.linalg.matrix_rank(cov) < p or np.linalg.cond(cov) > 1e12:
        tr = np.trace(cov)
        cov = cov + (1e-6 * tr / p if tr > 0 else 1e-6) * np.eye(p)
        regularized = True
    return LdaModel(classes, means, cov, priors, regularized, classes.shape[0] == 1)


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

VAR_FLOOR = 1e-9


@dataclass
class NbModel:
    classes: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    priors: np.ndarray
    trivial: bool = False

    def log_posterior(self, V):
        V = _check_rows(V, self.means.shape[1])
        d = V[:, None, :] - self.means[None]
        ll = -0.5 * (np.log(2 * np.pi * self.variances)[None] + d * d / self.variances[None])
        return ll.sum(axis=2) + np.log(self.priors)[None]

    def predict_class(self, V):
        return self.classes[np.argmax(self.log_posterior(V), axis=1)]

    def to_dict(self):
        return {"kind": "nb", "classes": self.classes.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "priors": self.priors.tolist(),
                "trivial": self.trivial}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["classes"], dtype=np.int64), np.array(d["means"]),
                   np.array(d["variances"]), np.array(d["priors"]), d["trivial"])


def fit_nb(V, y):
    """Per-class Gaussian moments; variances floored at 1e-9 of each
    feature's overall variance (1e-9 absolute for constant features)."""
    V, y = _check_fit(V, y)
    classes = np.unique(y)
    means = np.array([V[y == k].mean(axis=0) for k in classes])
    var = np.array([V[y == k].var(axis=0) for k in classes])
    overall = V.var(axis=0)
    floor = VAR_FLOOR * np.where(overall > 0, overall, 1.0)
    var = np.maximum(var, floor[None])
    priors = np.array([np.mean(y == k) for k in classes])
    return NbModel(classes, means, var, priors, classes.shape[0] == 1)


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------


@dataclass
class RfModel:
    n_classes: int
    trees: list
    max_features: int
    oob_error: float = float("nan")
    split_evaluations: int = 0

    def votes(self, V):
        V = np.ascontiguousarray(_check_rows(V))
        out = np.zeros((V.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(V.shape[0])
        for t in self.trees:
            np.add.at(out, (rows, kernels.tree_apply(V, *t)), 1)
        return out

    def predict_class(self, V):
        # argmax keeps the first maximum: ties go to the smaller class
        return np.argmax(self.votes(V), axis=1)

    def to_dict(self):
        return {"kind": "rf", "n_classes": self.n_classes, "max_features": self.max_features,
                "oob_error": self.oob_error, "split_evaluations": self.split_evaluations,
                "trees": [{"feature": f.tolist(), "threshold": th.tolist(), "left": l.tolist(),
                           "right": r.tolist(), "value": v.tolist()}
                          for f, th, l, r, v in self.trees]}

    @classmethod
    def from_dict(cls, d):
        trees = [tuple(np.array(t[k], dtype=dt) for k, dt in
                       (("feature", np.int64), ("threshold", float), ("left", np.int64),
                        ("right", np.int64), ("value", np.int64)))
                 for t in d["trees"]]
        return cls(d["n_classes"], trees, d["max_features"], d["oob_error"],
                   d.get("split_evaluations", 0))


def grow_tree(V, y, n_classes, sample_idx, rng, max_features, min_leaf=1):
    n = sample_idx.shape[0]
    feat_u = rng.random((max(2 * n - 1, 1), V.shape[1]))
    return kernels.grow_tree(V, y, n_classes, sample_idx, feat_u, max_features, min_leaf)


def fit_rf(V, y, seed=0, n_trees=100, max_features=3, min_leaf=1, n_classes=None):
    """Bootstrap forest of unpruned Gini trees.

    Tree ``i`` draws its bootstrap sample and feature subsets from its own
    stream spawned off ``seed``, so any single tree can be regrown alone.
    """
    V, y = _check_fit(V, y)
    V = np.ascontiguousarray(V)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n = V.shape[0]
    max_features = min(max_features, V.shape[1])
    trees = []
    oob_votes = np.zeros((n, n_classes), dtype=np.int64)
    evals = 0
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, n).astype(np.int64)
        tree = grow_tree(V, y, n_classes, idx, rng, max_features, min_leaf)
        trees.append(tree)
        evals += int(np.count_nonzero(tree[0] >= 0)) * max_features * n
        oob = np.setdiff1d(np.arange(n), idx)
        if oob.size:
            np.add.at(oob_votes, (oob, kernels.tree_apply(V[oob], *tree)), 1)
    seen = oob_votes.sum(axis=1) > 0
    oob_err = float(np.mean(np.argmax(oob_votes[seen], axis=1) != y[seen])) if seen.any() else float("nan")
    return RfModel(n_classes, trees, max_features, oob_err, evals)


def single_tree_oob_error(V, y, seed=0, max_features=None):
    """OOB error of one unpruned bootstrap tree (all features per split)."""
    V, y = _check_fit(V, y)
    V = np.ascontiguousarray(V)
    n = V.shape[0]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, n).astype(np.int64)
    tree = grow_tree(V, y, int(y.max()) + 1, idx, rng, max_features or V.shape[1])
    oob = np.setdiff1d(np.arange(n), idx)
    return float(np.mean(kernels.tree_apply(V[oob], *tree) != y[oob]))


# ---------------------------------------------------------------------------
# lifespan predictor wrapper
# ---------------------------------------------------------------------------


@dataclass
class MlPredictor:
    model: object
    scheme: ClassBinning

    def predict(self, V, covered=None):
        pred = self.scheme.decode(self.model.predict_class(V))
        if covered is not None:
            pred = np.maximum(pred, covered)
        return pred

    def to_dict(self):
        return {"model": self.model.to_dict(), "classes": self.scheme.to_dict()}

    @classmethod
    def from_dict(cls, d):
        kind = d["model"]["kind"]
        model = {"lda": LdaModel, "nb": NbModel, "rf": RfModel}[kind].from_dict(d["model"])
        return cls(model, ClassBinning.from_dict(d["classes"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_ml(method, V, X, seed=0, **kw):
    y, scheme = discretize_labels(X)
    if method == "lda":
        model = fit_lda(V, y)
    elif method == "nb":
        model = fit_nb(V, y)
    elif method == "rf":
        model = fit_rf(V, y, seed=seed, n_classes=scheme.n_classes, **kw)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MlPredictor(model, scheme)

"""Small LSTM and 1-D CNN lifespan regressors with hand-written backprop.

Both networks read a (T, 13) sequence, standardized per column with
training statistics, and regress the standardized total lifespan with a
squared loss.  Variable lengths are handled with a time mask: the LSTM
freezes its state after the last valid step, the CNN zeroes padded inputs
and averages only over valid steps.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels

N_INPUT = 13


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 150
    batch_size: int = 32
    clip_norm: float = 1.0
    seed: int = 0
    patience: int = 25
    optimizer: str = "adam"
    dtype: str = "float64"

    def validate(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be an integer >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        return self


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class Normalizer:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, samples, labels):
        rows = np.vstack([s.matrix for s in samples])
        std = rows.std(axis=0)
        y = np.asarray(labels, dtype=float)
        ys = float(y.std())
        return cls(rows.mean(axis=0), np.where(std > 0, std, 1.0), float(y.mean()), ys if ys > 0 else 1.0)

    @classmethod
    def identity(cls):
        return cls(np.zeros(N_INPUT), np.ones(N_INPUT), 0.0, 1.0)

    def to_dict(self):
        return {"x_mean": self.x_mean.tolist(), "x_std": self.x_std.tolist(),
                "y_mean": self.y_mean, "y_std": self.y_std}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["x_mean"]), np.array(d["x_std"]), d["y_mean"], d["y_std"])


def pad_batch(samples, norm, dtype=np.float64):
    """Standardized, zero-padded (B, T, 13) batch and the valid lengths."""
    lengths = np.array([s.matrix.shape[0] for s in samples], dtype=np.int64)
    x = np.zeros((len(samples), int(lengths.max()), N_INPUT), dtype=dtype)
    for i, s in enumerate(samples):
        if s.matrix.shape[1] != N_INPUT:
            raise ValueError(f"sequence needs {N_INPUT} columns, got {s.matrix.shape[1]}")
        x[i, :lengths[i]] = (s.matrix - norm.x_mean) / norm.x_std
    return x, lengths


class _Network:
    kind = ""

    def __init__(self, params, norm=None):
        self.params = params
        self.norm = norm if norm is not None else Normalizer.identity()

    # -- subclass API: forward(x, lengths) -> (out, cache); backward(cache, dout) -> grads

    def loss_and_grads(self, x, lengths, target):
        out, cache = self.forward(x, lengths)
        diff = out - target
        loss = float(np.mean(diff * diff))
        grads = self.backward(cache, 2.0 * diff / diff.shape[0])
        return loss, grads

    def predict(self, samples, covered=None, batch_size=256):
        if not isinstance(samples, (list, tuple)):
            samples = [samples]
        out = np.empty(len(samples))
        dtype = next(iter(self.params.values())).dtype
        order = np.argsort([s.matrix.shape[0] for s in samples], kind="stable")
        for k in range(0, len(samples), batch_size):
            idx = order[k:k + batch_size]
            x, lengths = pad_batch([samples[i] for i in idx], self.norm, dtype)
            out[idx] = self.forward(x, lengths)[0]
        pred = out * self.norm.y_std + self.norm.y_mean
        if covered is None:
            covered = [s.covered for s in samples]
        return np.maximum(pred, np.asarray(covered, dtype=float))

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def flat(self):
        return np.concatenate([self.params[k].ravel().astype(np.float64) for k in sorted(self.params)])

    def set_flat(self, vec):
        pos = 0
        for k in sorted(self.params):
            p = self.params[k]
            p[...] = vec[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    def manifest(self):
        return {"kind": self.kind, "arch": self.arch(), "norm": self.norm.to_dict(),
                "params": [{"name": k, "shape": list(self.params[k].shape)} for k in sorted(self.params)]}

    def save(self, path_prefix):
        """Write ``<prefix>.bin`` (float64, little endian) and ``<prefix>.json``."""
        self.flat().astype("<f8").tofile(path_prefix + ".bin")
        with open(path_prefix + ".json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2)

    @staticmethod
    def load(path_prefix):
        with open(path_prefix + ".json") as fh:
            man = json.load(fh)
        vec = np.fromfile(path_prefix + ".bin", dtype="<f8")
        cls = {"lstm": LstmModel, "cnn": Cnn1dModel}[man["kind"]]
        model = cls.init(seed=0, **man["arch"])
        expected = sum(int(np.prod(p["shape"])) for p in man["params"])
        if vec.size != expected:
            raise ValueError(f"{path_prefix}.bin holds {vec.size} values, manifest expects {expected}")
        model.set_flat(vec)
        model.norm = Normalizer.from_dict(man["norm"])
        return model


class LstmModel(_Network):
    kind = "lstm"

    @classmethod
    def init(cls, hidden=120, n_input=N_INPUT, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        h = hidden
        s_x = math.sqrt(6.0 / (n_input + 4 * h))
        s_h = math.sqrt(6.0 / (5 * h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0   # forget gate starts open
        params = {
            "Wx": rng.uniform(-s_x, s_x, (n_input, 4 * h)),
            "Wh": rng.uniform(-s_h, s_h, (h, 4 * h)),
            "b": b,
            "Wo": rng.uniform(-1, 1, h) * math.sqrt(3.0 / h),
            "bo": np.zeros(1),
        }
        return cls({k: v.astype(dtype) for k, v in params.items()})

    @property
    def hidden(self):
        return self.params["Wh"].shape[0]

    def arch(self):
        return {"hidden": self.hidden, "n_input": self.params["Wx"].shape[0]}

    def forward(self, x, lengths):
        p = self.params
        B, T, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H), dtype=x.dtype)
        c = np.zeros((B, H), dtype=x.dtype)
        zx = (x.reshape(B * T, -1) @ p["Wx"]).reshape(B, T, 4 * H) + p["b"]
        steps = []
        for t in range(T):
            m = (t < lengths)[:, None]
            z = zx[:, t] + h @ p["Wh"]
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            steps.append((h, c, i, f, g, o, tc, m))
            c = np.where(m, c_new, c)
            h = np.where(m, h_new, h)
        out = h @ p["Wo"] + p["bo"][0]
        return out, (x, steps, h)

    def backward(self, cache, dout):
        p = self.params
        x, steps, h_last = cache
        B, T, _ = x.shape
        H = self.hidden
        g_ = {k: np.zeros_like(v) for k, v in p.items()}
        g_["Wo"] = h_last.T @ dout
        g_["bo"][0] = dout.sum()
        dh = np.outer(dout, p["Wo"]).astype(x.dtype)
        dc = np.zeros_like(dh)
        dz_all = np.zeros((B, T, 4 * H), dtype=x.dtype)
        for t in range(T - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc, m = steps[t]
            dh_new = np.where(m, dh, 0.0)
            dc_new = np.where(m, dc, 0.0)
            do = dh_new * tc
            dct = dc_new + dh_new * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dct * g * i * (1.0 - i),
                dct * c_prev * f * (1.0 - f),
                dct * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dz_all[:, t] = dz
            g_["Wh"] += h_prev.T @ dz
            dh = dz @ p["Wh"].T + np.where(m, 0.0, dh)
            dc = dct * f + np.where(m, 0.0, dc)
        g_["Wx"] = x.reshape(B * T, -1).T @ dz_all.reshape(B * T, -1)
        g_["b"] = dz_all.sum(axis=(0, 1))
        return g_

    def cell_steps(self, samples):
        return int(sum(s.matrix.shape[0] for s in samples))


class Cnn1dModel(_Network):
    kind = "cnn"

    @classmethod
    def init(cls, filters=32, kernel=5, n_input=N_INPUT, seed=0, dtype=np.float64):
        if kernel < 1 or kernel % 2 == 0:
            raise ValueError("kernel size must be a positive odd number")
        rng = np.random.default_rng(seed)
        fan_in = n_input * kernel
        params = {
            "w": rng.normal(0.0, math.sqrt(2.0 / fan_in), (filters, n_input, kernel)),
            "b": np.full(filters, 0.01),
            "Wo": rng.normal(0.0, math.sqrt(1.0 / filters), filters),
            "bo": np.zeros(1),
        }
        return cls({k: v.astype(dtype) for k, v in params.items()})

    def arch(self):
        f, c, k = self.params["w"].shape
        return {"filters": f, "kernel": k, "n_input": c}

    def forward(self, x, lengths):
        p = self.params
        B, T, _ = x.shape
        mask = (np.arange(T)[None, :] < lengths[:, None]).astype(x.dtype)
        xm = x * mask[:, :, None]
        a = kernels.conv1d_forward(np.ascontiguousarray(xm), p["w"], p["b"])
        r = np.maximum(a, 0.0)
        inv_len = (1.0 / lengths).astype(x.dtype)
        pooled = np.einsum("btf,bt->bf", r, mask) * inv_len[:, None]
        out = pooled @ p["Wo"] + p["bo"][0]
        return out, (xm, a, mask, inv_len, pooled)

    def backward(self, cache, dout):
        p = self.params
        xm, a, mask, inv_len, pooled = cache
        g_ = {"Wo": pooled.T @ dout, "bo": np.array([dout.sum()], dtype=xm.dtype)}
        dpool = np.outer(dout, p["Wo"]).astype(xm.dtype)
        dr = dpool[:, None, :] * (mask * inv_len[:, None])[:, :, None]
        da = np.ascontiguousarray(dr * (a > 0))
        _, gw, gb = kernels.conv1d_backward(xm, p["w"], da)
        g_["w"] = gw
        g_["b"] = gb
        return g_

    def conv_macs(self, samples):
        f, c, k = self.params["w"].shape
        return int(sum(s.matrix.shape[0] for s in samples)) * f * c * k


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _clip(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm and norm > max_norm:
        s = max_norm / norm
        return {k: g * s for k, g in grads.items()}, norm
    return grads, norm


def _batches(lengths, batch_size, rng):
    """Length-sorted chunks (less padding), visited in random order."""
    order = np.argsort(lengths, kind="stable")
    chunks = [order[k:k + batch_size] for k in range(0, order.shape[0], batch_size)]
    rng.shuffle(chunks)
    return chunks


def fit_network(model, samples, labels, config, val_samples=None, val_labels=None):
    """Mini-batch training with gradient clipping.

    Keeps the parameters of the best epoch (validation MAE when a validation
    set is given, training loss otherwise) and stops after ``patience``
    epochs without improvement.  Returns ``(model, curve)`` with curve rows
    ``(epoch, train_loss, val_mae)``.
    """
    config.validate()
    if len(samples) == 0:
        raise ValueError("no training samples")
    labels = np.asarray(labels, dtype=float)
    dtype = np.dtype(config.dtype)
    model.norm = Normalizer.fit(samples, labels)
    for k in model.params:
        model.params[k] = model.params[k].astype(dtype)
    rng = np.random.default_rng(config.seed)
    target_all = ((labels - model.norm.y_mean) / model.norm.y_std).astype(dtype)
    lengths = np.array([s.matrix.shape[0] for s in samples])
    padded = {}

    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    def evaluate_loss():
        out = model.predict(samples, covered=np.full(len(samples), -np.inf))
        d = (out - labels) / model.norm.y_std
        return float(np.mean(d * d))

    curve = []
    best = (math.inf, model.copy_params(), 0)
    since_best = 0
    for epoch in range(config.epochs + 1):
        if epoch > 0:
            losses = []
            for chunk in _batches(lengths, config.batch_size, rng):
                key = tuple(chunk)
                if key not in padded:
                    padded[key] = pad_batch([samples[i] for i in chunk], model.norm, dtype)
                x, ln = padded[key]
                loss, grads = model.loss_and_grads(x, ln, target_all[chunk])
                if not math.isfinite(loss):
                    raise FloatingPointError(
                        f"{model.kind} training diverged at epoch {epoch} (loss {loss})")
                grads, _ = _clip(grads, config.clip_norm)
                step += 1
                lr = config.learning_rate
                for k, p in model.params.items():
                    g = grads[k].astype(dtype)
                    if config.optimizer == "sgd":
                        p -= lr * g
                    else:
                        adam_m[k] = beta1 * adam_m[k] + (1 - beta1) * g
                        adam_v[k] = beta2 * adam_v[k] + (1 - beta2) * g * g
                        mh = adam_m[k] / (1 - beta1 ** step)
                        vh = adam_v[k] / (1 - beta2 ** step)
                        p -= lr * mh / (np.sqrt(vh) + eps)
                losses.append(loss * len(chunk))
            train_loss = float(np.sum(losses) / len(samples))
        else:
            train_loss = evaluate_loss()
        val_mae = float("nan")
        if val_samples:
            val_mae = float(np.mean(np.abs(model.predict(val_samples) - np.asarray(val_labels))))
        curve.append((epoch, train_loss, val_mae))
        score = val_mae if val_samples else train_loss
        if score < best[0]:
            best = (score, model.copy_params(), epoch)
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                break
    model.params = best[1]
    model.best_epoch = best[2]
    return model, curve


def fit_lstm(samples, labels, config=TrainConfig(), hidden=120, **kw):
    model = LstmModel.init(hidden=hidden, seed=config.seed)
    return fit_network(model, samples, labels, config, **kw)


def fit_cnn1d(samples, labels, config=TrainConfig(), filters=32, kernel=5, **kw):
    model = Cnn1dModel.init(filters=filters, kernel=kernel, seed=config.seed)
    return fit_network(model, samples, labels, config, **kw)


def predict_nn(model, sample):
    return float(model.predict([sample])[0])


def numeric_gradient_check(model, sample, label, n_params=50, h=1e-5, seed=0):
    """Largest relative gap between backprop and central differences.

    Checks ``n_params`` randomly chosen scalar parameters (all of them if the
    model is smaller).  Runs in float64.
    """
    for k in model.params:
        model.params[k] = model.params[k].astype(np.float64)
    samples = sample if isinstance(sample, (list, tuple)) else [sample]
    x, lengths = pad_batch(samples, model.norm)
    target = np.atleast_1d(np.asarray(label, dtype=float))
    _, grads = model.loss_and_grads(x, lengths, target)
    names = sorted(model.params)
    sizes = [model.params[k].size for k in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_params else rng.choice(total, n_params, replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat_i in picks:
        j = int(np.searchsorted(offsets, flat_i, side="right") - 1)
        name = names[j]
        idx = np.unravel_index(flat_i - offsets[j], model.params[name].shape)
        p = model.params[name]
        old = p[idx]
        p[idx] = old + h
        lp, _ = model.loss_and_grads(x, lengths, target)
        p[idx] = old - h
        lm, _ = model.loss_and_grads(x, lengths, target)
        p[idx] = old
        num = (lp - lm) / (2 * h)
        ana = grads[name][idx]
        denom = max(abs(num), abs(ana), 1e-7)
        worst = max(worst, abs(num - ana) / denom)
    return worst


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_mae"])
        for row in curve:
            w.writerow(row)

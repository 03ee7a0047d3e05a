"""End-to-end lifespan experiment over Monte Carlo replicates."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import io as gio
from .binning import bin_mpcs, birth_death_events
from .features import (FEATURE_NAMES, build_context, clip_bins, feature_row, sequence_sample,
                       truncate_bin)
from .harness import McConfig, evaluate_mae, kfold_split, monte_carlo_augment, split
from .predictors import ml, nn, poisson, ws
from .simulator import simulate

log = logging.getLogger("galife")

METHODS = ("poisson", "ws", "lda", "nb", "rf", "lstm", "cnn")
ASYMPTOTIC = {
    "poisson": "O(e)",
    "ws": "O(M p^2 + p^3)",
    "lda": "O(M p^2 + K p^2)",
    "nb": "O(M p K)",
    "rf": "O(n_tr p_s M log M)",
    "lstm": "O(E T h (h + p2))",
    "cnn": "O(E T n_fil n_ker p2)",
}


@dataclass(frozen=True)
class ExperimentConfig:
    fractions: tuple = (0.3, 0.6, 0.9)
    train_ratio: float = 0.8
    split_seed: int = 0
    folds: int = 5
    min_lifespan: int = 6
    methods: tuple = METHODS
    rf_trees: int = 100
    rf_max_features: int = 3
    undersample_step: int = 1
    lstm_hidden: int = 120
    cnn_filters: int = 32
    cnn_kernel: int = 5
    val_fraction: float = 0.1
    lstm_train: nn.TrainConfig = nn.TrainConfig()
    cnn_train: nn.TrainConfig = nn.TrainConfig()
    audit_leakage: bool = True

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("lstm_train", "cnn_train"):
            if k in d and isinstance(d[k], dict):
                d[k] = nn.TrainConfig(**d[k])
        for k in ("fractions", "methods"):
            if k in d:
                d[k] = tuple(d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Replicate:
    index: int
    binning: object
    context: object = None


@dataclass
class Item:
    """One scored prediction: a test prefix with its inputs for every method."""

    key: tuple
    prefix: object
    row: np.ndarray
    seq: object


@dataclass
class Result:
    cells: dict                    # method -> list of MaeCell
    overall: dict                  # method -> overall MAE
    complexity: dict
    rates: dict
    counts: dict
    leakage: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    base_binning: object = None


def _m_bar(train_keys, reps):
    """Mean alive count over positions, counting training bins only."""
    total = 0.0
    positions = 0
    by_rep = {}
    for r, b in train_keys:
        by_rep.setdefault(r, []).append(b)
    for rep in reps:
        bins = by_rep.get(rep.index, [])
        _, alive = birth_death_events(bins, rep.binning.first_index, rep.binning.last_index)
        total += float(alive.sum())
        positions += alive.shape[0]
    return total / positions if positions else 0.0


def _items(pairs, reps, fractions, step, clipped=False):
    out = {}
    for f in fractions:
        items = []
        for r, b in pairs:
            p = truncate_bin(b, f)
            ctx = reps[r].context
            if clipped:
                rb = reps[r].binning
                ctx = build_context(clip_bins(rb.bins, p.cutoff), rb.first_index, p.cutoff,
                                    m_bar=ctx.m_bar, rho_min=ctx.rho_min,
                                    min_overlap=ctx.min_overlap)
            items.append(Item((r, b.bin_id), p, feature_row(p, ctx),
                              sequence_sample(p, ctx, step)))
        out[f] = items
    return out


def _training_rows(pairs, reps, fractions, step):
    V, X, cov, seqs = [], [], [], []
    for r, b in pairs:
        ctx = reps[r].context
        for f in fractions:
            p = truncate_bin(b, f)
            V.append(feature_row(p, ctx))
            X.append(b.lifespan)
            cov.append(p.covered)
            seqs.append(sequence_sample(p, ctx, step))
    return (np.array(V).reshape(-1, len(FEATURE_NAMES)), np.array(X, dtype=float),
            np.array(cov), seqs)


class Predictors:
    """Fitted models behind one ``predict(method, items)`` call."""

    def __init__(self):
        self.models = {}

    def predict(self, method, items):
        if not items:
            return np.zeros(0)
        m = self.models[method]
        cov = np.array([it.prefix.covered for it in items], dtype=float)
        if method == "poisson":
            return np.full(len(items), poisson.predict_lifespan_poisson(m, None))
        if method == "ws":
            return ws.predict_ws(m, np.array([it.row for it in items]), cov)
        if method in ("lda", "nb", "rf"):
            return m.predict(np.array([it.row for it in items]), cov)
        if method in ("lstm", "cnn"):
            return m.predict([it.seq for it in items], cov)
        raise ValueError(f"unknown method {method!r}")


def prepare(dataset, binning_config, mc):
    """Monte Carlo replicates of ``dataset``, each binned independently."""
    replicates = monte_carlo_augment(dataset, mc)
    return [Replicate(i, bin_mpcs(d, binning_config)) for i, d in enumerate(replicates)]


def set_contexts(reps, train, binning_config):
    """Attach feature contexts; the mean alive count comes from ``train``."""
    m_bar = _m_bar(train, reps)
    for rep in reps:
        rep.context = build_context(rep.binning.bins, rep.binning.first_index,
                                    rep.binning.last_index, m_bar=m_bar,
                                    rho_min=binning_config.rho_min,
                                    min_overlap=binning_config.min_overlap)
    return m_bar


def splits(reps, exp):
    pairs = [(rep.index, b) for rep in reps for b in rep.binning.bins]
    if exp.folds <= 1:
        return [split(pairs, exp.train_ratio, exp.split_seed, exp.min_lifespan)]
    return list(kfold_split(pairs, exp.folds, exp.split_seed, exp.min_lifespan))


def fit_all(reps, train, exp, spatial_step=1.0):
    """Fit every requested method; returns (Predictors, complexity, curves, info)."""
    preds = Predictors()
    complexity = {}
    curves = {}
    feat_train = [(r, b) for r, b in train if b.closed and b.lifespan >= exp.min_lifespan]

    # hold out a slice of training bins for NN early stopping
    rng = np.random.default_rng(exp.split_seed + 1)
    order = rng.permutation(len(feat_train))
    n_val = int(round(exp.val_fraction * len(feat_train)))
    val_set = set(order[:n_val].tolist())
    nn_train = [p for i, p in enumerate(feat_train) if i not in val_set]
    nn_val = [p for i, p in enumerate(feat_train) if i in val_set]

    V, X, cov, seqs = _training_rows(feat_train, reps, exp.fractions, exp.undersample_step)
    info = {"train_rows": int(V.shape[0]), "train_bins": len(feat_train)}

    for method in exp.methods:
        t0 = time.perf_counter()
        ops = 0
        if method == "poisson":
            # event stream of every non-test bin, replicate by replicate
            by_rep = {}
            for r, b in train:
                by_rep.setdefault(r, []).append(b)
            models = []
            for r, bins in sorted(by_rep.items()):
                ev, _ = birth_death_events(bins, reps[r].binning.first_index, reps[r].binning.last_index)
                models.append(poisson.estimate_rates(ev, bins, reps[r].binning.num_positions, spatial_step))
                ops += len(ev)
            model = poisson.pool_rates(models)
        elif method == "ws":
            model = ws.fit_ws(V, X)
            ops = V.shape[0] * V.shape[1] ** 2 + V.shape[1] ** 3
        elif method in ("lda", "nb"):
            model = ml.fit_ml(method, V, X)
            k = model.scheme.n_classes
            ops = V.shape[0] * V.shape[1] ** (2 if method == "lda" else 1) * (1 if method == "lda" else k)
        elif method == "rf":
            model = ml.fit_ml("rf", V, X, seed=exp.split_seed, n_trees=exp.rf_trees,
                              max_features=exp.rf_max_features)
            ops = model.model.split_evaluations
        elif method in ("lstm", "cnn"):
            tr_rows = _training_rows(nn_train, reps, exp.fractions, exp.undersample_step)
            va_rows = _training_rows(nn_val, reps, exp.fractions, exp.undersample_step)
            if method == "lstm":
                model, curve = nn.fit_lstm(tr_rows[3], tr_rows[1], exp.lstm_train,
                                           hidden=exp.lstm_hidden,
                                           val_samples=va_rows[3] or None, val_labels=va_rows[1])
                per_epoch = model.cell_steps(tr_rows[3])
            else:
                model, curve = nn.fit_cnn1d(tr_rows[3], tr_rows[1], exp.cnn_train,
                                            filters=exp.cnn_filters, kernel=exp.cnn_kernel,
                                            val_samples=va_rows[3] or None, val_labels=va_rows[1])
                per_epoch = model.conv_macs(tr_rows[3])
            curves[method] = curve
            ops = per_epoch * (len(curve) - 1)
        else:
            raise ValueError(f"unknown method {method!r}")
        preds.models[method] = model
        complexity[method] = {"fit_seconds": time.perf_counter() - t0, "fit_ops": int(ops),
                              "asymptotic": ASYMPTOTIC[method]}
        log.info("fitted %s in %.1fs", method, complexity[method]["fit_seconds"])
    return preds, complexity, curves, info


def run_experiment(scenario, binning_config, mc, exp=ExperimentConfig()):
    """Simulate, replicate, bin, then fit and score every method per fold.

    Test bins of all folds are pooled before the MAE is taken, so every
    eligible bin contributes once per truncation fraction.
    """
    t_start = time.perf_counter()
    base = simulate(scenario)
    base_binning = bin_mpcs(base, binning_config)
    reps = prepare(base, binning_config, mc)

    test_bins = []
    fold_preds = {m: {f: [] for f in exp.fractions} for m in exp.methods}
    leakage = {m: True for m in exp.methods} if exp.audit_leakage else {}
    complexity, curves, info, m_bars = {}, {}, {}, []
    for fold, (train, test) in enumerate(splits(reps, exp)):
        m_bars.append(set_contexts(reps, train, binning_config))
        preds, cx, cv, inf = fit_all(reps, train, exp, scenario.spatial_step)
        items = _items(test, reps, exp.fractions, exp.undersample_step)
        clipped = _items(test, reps, exp.fractions, exp.undersample_step, clipped=True) \
            if exp.audit_leakage else None
        for method in exp.methods:
            t0 = time.perf_counter()
            for f in exp.fractions:
                p = preds.predict(method, items[f])
                fold_preds[method][f].append(p)
                if clipped is not None and not np.array_equal(p, preds.predict(method, clipped[f])):
                    leakage[method] = False
            c = complexity.setdefault(method, {"fit_seconds": 0.0, "fit_ops": 0, "predict_seconds": 0.0,
                                               "predict_ops": 0, "predictions": 0,
                                               "asymptotic": ASYMPTOTIC[method]})
            c["fit_seconds"] += cx[method]["fit_seconds"]
            c["fit_ops"] += cx[method]["fit_ops"]
            c["predict_seconds"] += time.perf_counter() - t0
            c["predict_ops"] += _predict_ops(method, preds.models[method], items)
            c["predictions"] += sum(len(v) for v in items.values())
        for k, v in inf.items():
            info[k] = info.get(k, 0) + v
        if fold == 0:
            curves = cv
            models = preds.models
        test_bins.extend(b for _, b in test)
        log.info("fold %d done (%d test bins)", fold, len(test))

    cells, overall = {}, {}
    for method in exp.methods:
        def predict(prefixes, _m=method):
            return np.concatenate(fold_preds[_m][prefixes[0].fraction])

        cells[method], overall[method] = evaluate_mae(predict, test_bins, exp.fractions)

    # dataset-level rates over every replicate (all bins, all events)
    all_models = [poisson.estimate_rates(rep.binning.events, rep.binning.bins,
                                         rep.binning.num_positions, scenario.spatial_step)
                  for rep in reps]
    pooled = poisson.pool_rates(all_models)
    birth_mae = float(np.mean([poisson.birth_spacing_mae(pooled, rep.binning.events) for rep in reps]))
    rates = {
        "nu_per_position": pooled.nu,
        "mu_per_bin_position": pooled.mu,
        "mu_per_position": pooled.mu_per_position,
        "delta_n_m": pooled.delta_n,
        "births": pooled.births,
        "deaths": pooled.deaths,
        "exposure": pooled.exposure,
        "birth_spacing_mae": birth_mae,
        "prediction_model_mu": models["poisson"].mu if "poisson" in models else None,
    }
    short = sum(1 for rep in reps for b in rep.binning.bins if b.closed and b.lifespan < exp.min_lifespan)
    counts = dict(info, test_bins=len(test_bins), replicates=len(reps),
                  folds=max(exp.folds, 1), excluded_short_bins=short,
                  bins_total=sum(len(rep.binning.bins) for rep in reps),
                  m_bar=float(np.mean(m_bars)),
                  runtime_seconds=time.perf_counter() - t_start)
    res = Result(cells, overall, complexity, rates, counts, leakage, models, curves, base_binning)
    res.poisson_model = pooled
    return res


def _predict_ops(method, model, items):
    seqs = [it.seq for v in items.values() for it in v]
    n = len(seqs)
    if method == "poisson":
        return n
    if method == "ws":
        return n * len(FEATURE_NAMES)
    if method in ("lda", "nb"):
        return n * len(FEATURE_NAMES) * model.scheme.n_classes
    if method == "rf":
        depth = sum(int(np.count_nonzero(t[0] >= 0)) for t in model.model.trees)
        return n * depth // max(len(model.model.trees), 1)
    if method == "lstm":
        return model.cell_steps(seqs)
    if method == "cnn":
        return model.conv_macs(seqs)
    return 0


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def write_report(result, out_dir, provenance):
    """Write the four report files plus timing details.

    ``summary.json`` holds only deterministic content; wall-clock numbers go
    to ``complexity.json``.
    """
    gio.ensure_dir(out_dir)
    with open(os.path.join(out_dir, "bin_power.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_id", "rx_index", "power_dbm"])
        for b in result.base_binning.bins:
            for m in b.records:
                w.writerow([b.bin_id, m.rx_index, repr(float(m.power_dbm))])
    with open(os.path.join(out_dir, "mae_by_fraction.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predictor", "fraction", "mae", "samples"])
        for method, cells in result.cells.items():
            for c in cells:
                w.writerow([method, c.fraction, repr(float(c.mae)), c.samples])
    poisson.write_pmf_csv(os.path.join(out_dir, "death_pmf.csv"), result.poisson_model)
    summary = {
        "provenance": provenance,
        "overall_mae": [{"predictor": m, "mae": result.overall[m]} for m in result.overall],
        "mae_by_fraction": {m: [{"fraction": c.fraction, "mae": c.mae, "samples": c.samples}
                                for c in cells] for m, cells in result.cells.items()},
        "rates": result.rates,
        "counts": {k: v for k, v in result.counts.items() if k != "runtime_seconds"},
        "leakage_audit": result.leakage,
        "ops": {m: {k: v for k, v in c.items() if k in ("fit_ops", "predict_ops", "asymptotic")}
                for m, c in result.complexity.items()},
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "complexity.json"), "w") as fh:
        json.dump({"complexity": result.complexity,
                   "runtime_seconds": result.counts.get("runtime_seconds")}, fh, indent=2)
    for method, curve in result.curves.items():
        nn.write_curve_csv(os.path.join(out_dir, f"curve_{method}.csv"), curve)
    return summary


def complexity_table(complexity):
    lines = [f"{'method':8s} {'fit_s':>9s} {'pred_s':>9s} {'fit_ops':>14s} {'pred_ops':>12s}  asymptotic"]
    for m, c in complexity.items():
        lines.append(f"{m:8s} {c.get('fit_seconds', float('nan')):9.3f} "
                     f"{c.get('predict_seconds', float('nan')):9.3f} {c.get('fit_ops', 0):14d} "
                     f"{c.get('predict_ops', 0):12d}  {c['asymptotic']}")
    return "\n".join(lines)

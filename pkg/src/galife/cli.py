"""Command-line entry point.

Staged pipeline::

    galife simulate --config scene.json --out data/
    galife bin --in data/ --out bins/
    galife features --in bins/ --out features/
    galife train --method rf --in features/ --out models/
    galife evaluate --models models/ --fractions 0.3,0.6,0.9 --out report/
    galife report --in report/

or everything in one go with ``galife run --config scene.json --out results/``.
Set ``GALIFE_LOG_LEVEL`` (e.g. ``INFO``) for progress messages.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import io as gio
from .binning import BinningConfig, bin_mpcs, birth_death_events
from .experiment import METHODS, ExperimentConfig, complexity_table, run_experiment, write_report
from .features import (DEFAULT_FRACTIONS, FEATURE_NAMES, FeatureMatrix, build_context, feature_row,
                       read_feature_csv, read_sequences_jsonl, sequence_sample, truncate_bin,
                       write_feature_csv, write_sequences_jsonl)
from .harness import McConfig, evaluate_mae, mae, monte_carlo_augment, split
from .predictors import ml, nn, poisson, ws
from .simulator import ConfigError, ScenarioConfig, simulate

log = logging.getLogger("galife")


class CliError(Exception):
    pass


def _fractions(text):
    try:
        fr = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from exc
    if not fr or any(not 0 < f < 1 for f in fr):
        raise argparse.ArgumentTypeError("fractions must lie in (0, 1)")
    return fr


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def _read_json(path):
    if not os.path.exists(path):
        raise CliError(f"missing {path}; run the previous pipeline step first")
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    scenario, binning, mc_dict = gio.load_scene(args.config)
    mc = McConfig.from_dict(mc_dict)
    if args.replicates is not None:
        mc = replace(mc, replicates=args.replicates)
    out = gio.ensure_dir(args.out)
    base = simulate(scenario)
    gio.write_dataset(os.path.join(out, "dataset.csv"), base)
    names = []
    if mc.replicates > 0:
        for d in monte_carlo_augment(base, mc):
            name = f"replicate_{d.replicate:03d}.csv"
            gio.write_dataset(os.path.join(out, name), d)
            names.append(name)
    _write_json(os.path.join(out, "scene.json"), {
        "scenario": scenario.to_dict(), "binning": binning.to_dict(),
        "monte_carlo": mc.to_dict(), "replicates": names,
        "config_hash": gio.config_hash(scenario.to_dict(), binning.to_dict(), mc.to_dict()),
    })
    counts = [len(s) for s in base.snapshots]
    print(f"simulated {len(counts)} positions, {sum(counts)} MPCs "
          f"(mean {np.mean(counts):.2f} per position), {len(names)} replicates -> {out}")


# ---------------------------------------------------------------------------
# bin
# ---------------------------------------------------------------------------


def cmd_bin(args):
    scene = _read_json(os.path.join(args.inp, "scene.json"))
    config = BinningConfig.from_dict(scene["binning"]).validate()
    if args.d_max is not None:
        config = replace(config, d_max=args.d_max).validate()
    out = gio.ensure_dir(args.out)
    entries = []
    for name in ["dataset.csv"] + list(scene["replicates"]):
        ds = gio.read_dataset(os.path.join(args.inp, name))
        b = bin_mpcs(ds, config)
        stem = os.path.splitext(name)[0]
        gio.write_bins(os.path.join(out, f"bins_{stem}.csv"), os.path.join(out, f"events_{stem}.csv"), b)
        entries.append({"name": stem, "first_index": b.first_index, "last_index": b.last_index,
                        "bins": len(b.bins), "closed": sum(x.closed for x in b.bins)})
    _write_json(os.path.join(out, "manifest.json"), {
        "binning": config.to_dict(), "scenario": scene["scenario"],
        "monte_carlo": scene["monte_carlo"], "config_hash": scene["config_hash"], "files": entries})
    print(f"binned {len(entries)} datasets -> {out}")


def _load_binnings(bins_dir):
    man = _read_json(os.path.join(bins_dir, "manifest.json"))
    config = BinningConfig.from_dict(man["binning"])
    out = {}
    for e in man["files"]:
        out[e["name"]] = gio.read_bins(os.path.join(bins_dir, f"bins_{e['name']}.csv"),
                                       os.path.join(bins_dir, f"events_{e['name']}.csv"),
                                       config, e["first_index"], e["last_index"])
    return man, config, out


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def _rows(pairs, ctxs, fractions, step):
    V, X, cov, frac, seqs = [], [], [], [], []
    for name, b in pairs:
        for f in fractions:
            p = truncate_bin(b, f)
            V.append(feature_row(p, ctxs[name]))
            X.append(b.lifespan)
            cov.append(p.covered)
            frac.append(f)
            seqs.append(sequence_sample(p, ctxs[name], step, label=b.lifespan))
    fm = FeatureMatrix(np.array(V).reshape(-1, len(FEATURE_NAMES)), np.array(X, dtype=float),
                       np.array(cov, dtype=np.int64), np.array(frac), [None] * len(V))
    return fm, seqs


def cmd_features(args):
    man, config, binnings = _load_binnings(args.inp)
    out = gio.ensure_dir(args.out or os.path.join(os.path.dirname(os.path.abspath(args.inp)), "features"))
    names = [n for n in binnings if n != "dataset"] or ["dataset"]
    pairs = [(n, b) for n in names for b in binnings[n].bins]
    train, test = split(pairs, args.ratio, args.seed, args.min_lifespan)
    by_name = {}
    for n, b in train:
        by_name.setdefault(n, []).append(b)
    alive_sum, positions = 0.0, 0
    rate_models = []
    scenario = ScenarioConfig.from_dict(man["scenario"])
    for n in names:
        bins = by_name.get(n, [])
        bz = binnings[n]
        ev, alive = birth_death_events(bins, bz.first_index, bz.last_index)
        alive_sum += float(alive.sum())
        positions += alive.shape[0]
        if bins:
            rate_models.append(poisson.estimate_rates(ev, bins, bz.num_positions, scenario.spatial_step))
    m_bar = alive_sum / positions
    ctxs = {n: build_context(binnings[n].bins, binnings[n].first_index, binnings[n].last_index,
                             m_bar=m_bar, rho_min=config.rho_min, min_overlap=config.min_overlap)
            for n in names}
    feat_train = [(n, b) for n, b in train if b.closed and b.lifespan >= args.min_lifespan]
    fm_tr, seq_tr = _rows(feat_train, ctxs, args.fractions, args.step)
    fm_te, seq_te = _rows(test, ctxs, args.fractions, args.step)
    write_feature_csv(os.path.join(out, "train_features.csv"), fm_tr)
    write_feature_csv(os.path.join(out, "test_features.csv"), fm_te)
    write_sequences_jsonl(os.path.join(out, "train_sequences.jsonl"), seq_tr)
    write_sequences_jsonl(os.path.join(out, "test_sequences.jsonl"), seq_te)
    poisson.pool_rates(rate_models).save(os.path.join(out, "rates.json"))
    _write_json(os.path.join(out, "manifest.json"), {
        "bins_dir": os.path.abspath(args.inp), "fractions": list(args.fractions),
        "m_bar": m_bar, "ratio": args.ratio, "seed": args.seed, "min_lifespan": args.min_lifespan,
        "undersample_step": args.step, "train_bins": len(feat_train), "test_bins": len(test),
        "config_hash": man["config_hash"],
        "test_keys": [[n, b.bin_id] for n, b in test]})
    print(f"features: {len(fm_tr)} training rows from {len(feat_train)} bins, "
          f"{len(fm_te)} test rows from {len(test)} bins -> {out}")


# ---------------------------------------------------------------------------
# train / evaluate / report
# ---------------------------------------------------------------------------


def _model_path(models_dir, method):
    return os.path.join(models_dir, method + (".json" if method not in ("lstm", "cnn") else ""))


def cmd_train(args):
    fdir = args.inp
    out = gio.ensure_dir(args.out)
    method = args.method
    if method == "poisson":
        model = poisson.PoissonModel.load(os.path.join(fdir, "rates.json"))
        model.save(_model_path(out, method))
        print(f"poisson: mu={model.mu:.5f} per bin-position, nu={model.nu:.4f} per position")
        return
    fm = read_feature_csv(os.path.join(fdir, "train_features.csv"))
    if method == "ws":
        model = ws.fit_ws(fm.V, fm.X)
        model.save(_model_path(out, method))
    elif method in ("lda", "nb", "rf"):
        model = ml.fit_ml(method, fm.V, fm.X, seed=args.seed)
        model.save(_model_path(out, method))
    elif method in ("lstm", "cnn"):
        seqs = read_sequences_jsonl(os.path.join(fdir, "train_sequences.jsonl"))
        n_frac = len(_read_json(os.path.join(fdir, "manifest.json"))["fractions"])
        # rows come grouped per bin; every tenth bin is held out for early stopping
        group = np.arange(len(seqs)) // n_frac
        val = group % 10 == 9
        tr = [s for s, v in zip(seqs, val) if not v]
        va = [s for s, v in zip(seqs, val) if v]
        cfg = nn.TrainConfig(epochs=args.epochs, seed=args.seed)
        fit = nn.fit_lstm if method == "lstm" else nn.fit_cnn1d
        model, curve = fit(tr, [s.label for s in tr], cfg, val_samples=va or None,
                           val_labels=[s.label for s in va])
        model.save(_model_path(out, method))
        nn.write_curve_csv(os.path.join(out, f"curve_{method}.csv"), curve)
    else:
        raise CliError(f"unknown method {method}")
    print(f"trained {method} -> {out}")


def _load_model(models_dir, method):
    path = _model_path(models_dir, method)
    if method == "poisson":
        return poisson.PoissonModel.load(path)
    if method == "ws":
        return ws.WsModel.load(path)
    if method in ("lda", "nb", "rf"):
        return ml.MlPredictor.load(path)
    return nn.LstmModel.load(path)


def _available(models_dir):
    found = []
    for m in METHODS:
        p = _model_path(models_dir, m)
        if os.path.exists(p if m not in ("lstm", "cnn") else p + ".json"):
            found.append(m)
    return found


def cmd_evaluate(args):
    fdir = args.features or os.path.join(os.path.dirname(os.path.abspath(args.models)), "features")
    fman = _read_json(os.path.join(fdir, "manifest.json"))
    missing = [f for f in args.fractions if f not in fman["fractions"]]
    if missing:
        raise CliError(f"fractions {missing} were not extracted by the features step")
    fm = read_feature_csv(os.path.join(fdir, "test_features.csv"))
    seqs = read_sequences_jsonl(os.path.join(fdir, "test_sequences.jsonl"))
    methods = _available(args.models)
    if not methods:
        raise CliError(f"no trained models in {args.models}")
    out = gio.ensure_dir(args.out)
    cells = {}
    overall = {}
    for m in methods:
        model = _load_model(args.models, m)
        rows = []
        for f in args.fractions:
            sel = np.flatnonzero(np.isclose(fm.fraction, f))
            if m == "poisson":
                pred = np.full(sel.shape[0], poisson.predict_lifespan_poisson(model))
            elif m == "ws":
                pred = ws.predict_ws(model, fm.V[sel], fm.covered[sel])
            elif m in ("lda", "nb", "rf"):
                pred = model.predict(fm.V[sel], fm.covered[sel])
            else:
                pred = model.predict([seqs[i] for i in sel], fm.covered[sel])
            rows.append({"fraction": f, "mae": mae(pred, fm.X[sel]), "samples": int(sel.shape[0])})
        cells[m] = rows
        overall[m] = float(np.mean([r["mae"] for r in rows]))
    with open(os.path.join(out, "mae_by_fraction.csv"), "w") as fh:
        fh.write("predictor,fraction,mae,samples\n")
        for m, rows in cells.items():
            for r in rows:
                fh.write(f"{m},{r['fraction']},{float(r['mae'])!r},{r['samples']}\n")
    # plot data that does not depend on the models
    bins_dir = fman["bins_dir"]
    bman, _, binnings = _load_binnings(bins_dir)
    with open(os.path.join(out, "bin_power.csv"), "w") as fh:
        fh.write("bin_id,rx_index,power_dbm\n")
        for b in binnings["dataset"].bins:
            for rec in b.records:
                fh.write(f"{b.bin_id},{rec.rx_index},{float(rec.power_dbm)!r}\n")
    rates = poisson.PoissonModel.load(os.path.join(fdir, "rates.json"))
    poisson.write_pmf_csv(os.path.join(out, "death_pmf.csv"), rates)
    _write_json(os.path.join(out, "summary.json"), {
        "provenance": {"config_hash": fman["config_hash"], "split_seed": fman["seed"],
                       "mc_seed": bman["monte_carlo"]["seed"]},
        "overall_mae": [{"predictor": m, "mae": overall[m]} for m in methods],
        "mae_by_fraction": cells,
        "rates": {"mu_per_bin_position": rates.mu, "nu_per_position": rates.nu,
                  "mu_per_position": rates.mu_per_position},
        "counts": {"test_bins": fman["test_bins"], "train_bins": fman["train_bins"]},
    })
    print(_format_summary(_read_json(os.path.join(out, "summary.json"))))


def _format_summary(summary):
    lines = [f"{'predictor':10s} " + " ".join(f"{'MAE@' + str(c['fraction']):>10s}"
                                                for c in next(iter(summary['mae_by_fraction'].values())))
             + f" {'overall':>9s} {'S':>6s}"]
    overall = {r["predictor"]: r["mae"] for r in summary["overall_mae"]}
    for m in overall:
        cells = summary["mae_by_fraction"][m]
        lines.append(f"{m:10s} " + " ".join(f"{c['mae']:10.3f}" for c in cells)
                     + f" {overall[m]:9.3f} {cells[0]['samples']:6d}")
    r = summary.get("rates", {})
    if r:
        lines.append(f"death rate mu = {r.get('mu_per_bin_position', float('nan')):.5f} per bin-position")
    return "\n".join(lines)


def cmd_report(args):
    summary = _read_json(os.path.join(args.inp, "summary.json"))
    print(_format_summary(summary))
    cx = os.path.join(args.inp, "complexity.json")
    if os.path.exists(cx):
        with open(cx) as fh:
            print(complexity_table(json.load(fh)["complexity"]))
    audit = summary.get("leakage_audit")
    if audit:
        bad = [m for m, ok in audit.items() if not ok]
        print("leakage audit: " + ("all predictors unchanged" if not bad else "CHANGED: " + ", ".join(bad)))


def cmd_run(args):
    scenario, binning, mc_dict = gio.load_scene(args.config)
    mc = McConfig.from_dict(mc_dict)
    if args.replicates is not None:
        mc = replace(mc, replicates=args.replicates)
    exp = ExperimentConfig(folds=args.folds, methods=tuple(args.methods),
                           fractions=args.fractions, split_seed=args.seed)
    if args.epochs is not None:
        tc = nn.TrainConfig(epochs=args.epochs)
        exp = replace(exp, lstm_train=tc, cnn_train=tc)
    result = run_experiment(scenario, binning, mc, exp)
    prov = {"config_hash": gio.config_hash(scenario.to_dict(), binning.to_dict(), mc.to_dict(),
                                           exp.to_dict()),
            "mc_seed": mc.seed, "split_seed": exp.split_seed, "scenario_seed": scenario.rng_seed}
    summary = write_report(result, args.out, prov)
    print(_format_summary(summary))
    print(complexity_table(result.complexity))


def build_parser():
    p = argparse.ArgumentParser(prog="galife", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="trace the scene and write datasets")
    s.add_argument("--config", default=None, help="scene JSON (default: bundled fixture)")
    s.add_argument("--out", required=True)
    s.add_argument("--replicates", type=int, default=None, help="override Monte Carlo replicate count")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bin", help="group MPCs into path bins")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--d-max", type=float, default=None)
    s.set_defaults(func=cmd_bin)

    s = sub.add_parser("features", help="split bins and extract features")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--fractions", type=_fractions, default=DEFAULT_FRACTIONS)
    s.add_argument("--ratio", type=float, default=0.8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-lifespan", type=int, default=ExperimentConfig.min_lifespan)
    s.add_argument("--step", type=int, default=1, help="sequence undersampling step")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="fit one predictor")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=nn.TrainConfig.epochs)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score trained predictors on the test bins")
    s.add_argument("--models", required=True)
    s.add_argument("--features", default=None)
    s.add_argument("--fractions", type=_fractions, default=DEFAULT_FRACTIONS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="print a finished report")
    s.add_argument("--in", dest="inp", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", help="whole experiment in one process")
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--replicates", type=int, default=None)
    s.add_argument("--folds", type=int, default=ExperimentConfig.folds)
    s.add_argument("--methods", type=lambda t: t.split(","), default=list(METHODS))
    s.add_argument("--fractions", type=_fractions, default=DEFAULT_FRACTIONS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=None)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    level = os.environ.get("GALIFE_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"galife {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

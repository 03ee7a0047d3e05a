"""Scene files, dataset CSVs and bin CSVs."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from importlib import resources

from .binning import Binning, BinningConfig, birth_death_events, make_bin
from .simulator import ChannelDataset, ChannelSnapshot, ConfigError, MpcRecord, ScenarioConfig

SCHEMA_VERSION = 1
DATASET_HEADER = ["rx_index", "path_id", "power_dbm", "alpha", "tau_s",
                  "theta_t", "phi_t", "theta_r", "phi_r", "phase"]
BINS_HEADER = ["bin_id", "rx_index", "power_dbm", "alpha", "tau_s",
               "theta_t", "phi_t", "theta_r", "phi_r"]
EVENTS_HEADER = ["kind", "rx_index", "bin_id"]


def _num(x):
    return repr(float(x))


def fixture_path():
    return str(resources.files("galife") / "data" / "fixture_scene.json")


def load_scene(path=None):
    """Parse a scene file into ``(ScenarioConfig, BinningConfig, mc_dict)``.

    ``binning`` and ``monte_carlo`` blocks are optional.
    """
    path = path or fixture_path()
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported scene schema_version {version}")
    if "scenario" not in doc:
        raise ConfigError(f"{path}: missing 'scenario' block")
    scenario = ScenarioConfig.from_dict(doc["scenario"]).validate()
    binning = BinningConfig.from_dict(doc.get("binning", {})).validate()
    return scenario, binning, dict(doc.get("monte_carlo", {}))


def config_hash(*parts):
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_dataset(path, dataset):
    """CSV, one row per MPC, plus ``<path>.json`` describing the run."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_HEADER)
        for m in dataset.records():
            w.writerow([m.rx_index, m.true_ray_id, _num(m.power_dbm), _num(m.alpha), _num(m.tau),
                        _num(m.theta_t), _num(m.phi_t), _num(m.theta_r), _num(m.phi_r), _num(m.phase)])
    side = {
        "schema_version": SCHEMA_VERSION,
        "seed": dataset.seed,
        "replicate": dataset.replicate,
        "rx_indices": [s.rx_index for s in dataset.snapshots],
        "scenario": dataset.config.to_dict() if dataset.config is not None else None,
    }
    with open(path + ".json", "w") as fh:
        json.dump(side, fh, indent=2)


def read_dataset(path):
    with open(path + ".json") as fh:
        side = json.load(fh)
    per = {n: [] for n in side["rx_indices"]}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != DATASET_HEADER:
            raise ValueError(f"{path}: unexpected header {r.fieldnames}")
        for row in r:
            n = int(row["rx_index"])
            per.setdefault(n, []).append(MpcRecord(
                alpha=float(row["alpha"]), power_dbm=float(row["power_dbm"]), tau=float(row["tau_s"]),
                theta_t=float(row["theta_t"]), phi_t=float(row["phi_t"]),
                theta_r=float(row["theta_r"]), phi_r=float(row["phi_r"]),
                phase=float(row["phase"]), rx_index=n, true_ray_id=row["path_id"]))
    config = ScenarioConfig.from_dict(side["scenario"]) if side.get("scenario") else None
    snaps = tuple(ChannelSnapshot(n, tuple(per[n])) for n in sorted(per))
    return ChannelDataset(snaps, config=config, seed=side.get("seed"), replicate=side.get("replicate"))


def write_bins(path, events_path, binning):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BINS_HEADER)
        for b in binning.bins:
            for m in b.records:
                w.writerow([b.bin_id, m.rx_index, _num(m.power_dbm), _num(m.alpha), _num(m.tau),
                            _num(m.theta_t), _num(m.phi_t), _num(m.theta_r), _num(m.phi_r)])
    with open(events_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENTS_HEADER)
        for e in binning.events:
            w.writerow([e.kind, e.rx_index, e.bin_id])


def read_bins(path, events_path, config, first_index, last_index):
    recs = {}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != BINS_HEADER:
            raise ValueError(f"{path}: unexpected header {r.fieldnames}")
        for row in r:
            b = int(row["bin_id"])
            recs.setdefault(b, []).append(MpcRecord(
                alpha=float(row["alpha"]), power_dbm=float(row["power_dbm"]), tau=float(row["tau_s"]),
                theta_t=float(row["theta_t"]), phi_t=float(row["phi_t"]),
                theta_r=float(row["theta_r"]), phi_r=float(row["phi_r"]),
                phase=0.0, rx_index=int(row["rx_index"])))
    dead = set()
    with open(events_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["kind"] == "death":
                dead.add(int(row["bin_id"]))
    bins = tuple(make_bin(b, recs[b], b in dead, config) for b in sorted(recs))
    events, _ = birth_death_events(bins, first_index, last_index)
    return Binning(bins, tuple(events), first_index, last_index)


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path

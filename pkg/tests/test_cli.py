import csv
import json

import pytest

from galife.cli import main

FR = "0.3,0.6,0.9"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sim, bins, feats, models, out = (str(root / d) for d in ("sim", "bins", "feats", "models", "out"))
    assert main(["simulate", "--out", sim, "--replicates", "3"]) == 0
    assert main(["bin", "--in", sim, "--out", bins]) == 0
    assert main(["features", "--in", bins, "--out", feats, "--fractions", FR, "--seed", "1"]) == 0
    for m in ("poisson", "ws", "lda", "nb", "rf"):
        assert main(["train", "--method", m, "--in", feats, "--out", models]) == 0
    for m in ("lstm", "cnn"):
        assert main(["train", "--method", m, "--in", feats, "--out", models, "--epochs", "2"]) == 0
    assert main(["evaluate", "--models", models, "--features", feats, "--fractions", FR, "--out", out]) == 0
    return root


def test_staged_outputs(pipeline):
    sim = json.loads((pipeline / "sim" / "scene.json").read_text())
    assert sim["replicates"] == ["replicate_000.csv", "replicate_001.csv", "replicate_002.csv"]
    man = json.loads((pipeline / "bins" / "manifest.json").read_text())
    assert [f["name"] for f in man["files"]][0] == "dataset"
    summary = json.loads((pipeline / "out" / "summary.json").read_text())
    assert {r["predictor"] for r in summary["overall_mae"]} == {"poisson", "ws", "lda", "nb", "rf", "lstm", "cnn"}
    assert summary["provenance"]["config_hash"] == sim["config_hash"]
    with open(pipeline / "out" / "mae_by_fraction.csv") as fh:
        rows = list(csv.DictReader(fh))
    pois = {r["mae"] for r in rows if r["predictor"] == "poisson"}
    assert len(pois) == 1
    assert (pipeline / "models" / "curve_lstm.csv").exists()


def test_report(pipeline, capsys):
    assert main(["report", "--in", str(pipeline / "out")]) == 0
    text = capsys.readouterr().out
    assert "poisson" in text and "cnn" in text


def test_missing_input_exits_1(tmp_path, capsys):
    assert main(["bin", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "b")]) == 1
    assert "error" in capsys.readouterr().err


def test_unextracted_fraction_exits_1(pipeline, tmp_path):
    args = ["evaluate", "--models", str(pipeline / "models"), "--features", str(pipeline / "feats"),
            "--fractions", "0.5", "--out", str(tmp_path / "o")]
    assert main(args) == 1


def test_bad_scene_exits_1(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"scenario": {"n_rx": -1}}))
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_bad_fraction_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["features", "--in", "x", "--fractions", "1.5"])
    assert exc.value.code == 2

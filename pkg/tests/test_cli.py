import csv
import filecmp
import json
import math

import pytest

from stgcnn.cli import config_hash, main
from stgcnn.data_model import load_dataset

SMALL = ["--P", "120", "--F-cont", "4", "--F-bin", "2", "--T", "3"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> graph -> train -> eval -> explain on a small cohort."""
    root = tmp_path_factory.mktemp("pipe")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"signal_pairs": [[0, 1], [2, 2]]}))
    data = root / "data.json"
    assert run("synth", "--spec", spec, "--out", data, *SMALL) == 0
    assert run("graph", "--dataset", data, "--method", "correlation", "--repr", "stg", "--threshold", 0.5,
               "--sweep", "0.6,0.725,0.85,0.975", "--folds", 3, "--out-dir", root / "g") == 0
    assert run("train", "--dataset", data, "--graph-dir", root / "g", "--grid", "smoke", "--epochs", 5,
               "--out-dir", root / "m") == 0
    assert run("eval", "--checkpoint", root / "m" / "checkpoint.json", "--dataset", data,
               "--split", root / "g" / "split.json", "--out", root / "eval.json") == 0
    assert run("explain", "--checkpoint", root / "m" / "checkpoint.json", "--dataset", data,
               "--split", root / "g" / "split.json", "--out-dir", root / "x") == 0
    return root


def test_synth_reloads_losslessly(pipeline):
    ds = load_dataset(pipeline / "data.json")
    assert ds.X.shape == (120, 6, 3)


def test_synth_default_spec(tmp_path):
    assert run("synth", "--out", tmp_path / "d.json", "--P", 30) == 0
    assert load_dataset(tmp_path / "d.json").X.shape == (30, 20, 8)


def test_synth_byte_identical(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"signal_pairs": [[1, 2]]}))
    for name in ("a.json", "b.json"):
        assert run("synth", "--spec", spec, "--out", tmp_path / name, *SMALL, "--seed", 4) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_synth_invalid_spec(tmp_path, capsys):
    assert run("synth", "--out", tmp_path / "d.json", "--missing-rate", 1.5) == 2
    assert "invalid synthetic spec" in capsys.readouterr().err
    assert not (tmp_path / "d.json").exists()
    # default planted cells fall outside a 6 x 3 grid
    assert run("synth", "--out", tmp_path / "d.json", *SMALL) == 2
    assert not (tmp_path / "d.json").exists()


def test_graph_outputs(pipeline):
    doc = json.loads((pipeline / "g" / "graphs.json").read_text())
    assert [g["t"] for g in doc["graphs"]] == [0, 1, 2]
    st = json.loads((pipeline / "g" / "st_graph.json").read_text())
    assert (st["F"], st["T"], st["repr"]) == (6, 3, "stg")
    assert (pipeline / "g" / "st_graph.dot").read_text().count("subgraph cluster_t") == 3


def test_graph_report_sweep_is_monotone(pipeline):
    report = json.loads((pipeline / "g" / "graph_report.json").read_text())
    dens = [row["mean_edge_density"] for row in report["sweep"]]
    assert [row["threshold"] for row in report["sweep"]] == [0.6, 0.725, 0.85, 0.975]
    assert all(a >= b for a, b in zip(dens, dens[1:]))


def test_graph_hgd_dtw_stg_is_config_error(pipeline, capsys):
    code = run("graph", "--dataset", pipeline / "data.json", "--method", "hgd-dtw", "--repr", "stg",
               "--out-dir", pipeline / "bad")
    assert code == 2
    assert "cpg" in capsys.readouterr().err


def test_graph_hgd_dtw_cpg_runs(pipeline):
    assert run("graph", "--dataset", pipeline / "data.json", "--method", "hgd-dtw", "--repr", "cpg",
               "--threshold", 0.5, "--folds", 3, "--out-dir", pipeline / "dtw") == 0
    assert json.loads((pipeline / "dtw" / "st_graph.json").read_text())["repr"] == "cpg"


def test_graph_missing_dataset(tmp_path, capsys):
    assert run("graph", "--dataset", tmp_path / "none.json", "--out-dir", tmp_path) == 1
    assert "error" in capsys.readouterr().err


def test_train_missing_graph_file(pipeline, tmp_path, capsys):
    code = run("train", "--dataset", pipeline / "data.json", "--graph-dir", tmp_path, "--grid", "smoke",
               "--out-dir", tmp_path / "m")
    assert code == 1
    assert "st_graph.json" in capsys.readouterr().err


def test_train_unknown_grid(pipeline, tmp_path):
    assert run("train", "--dataset", pipeline / "data.json", "--graph-dir", pipeline / "g", "--grid", "huge",
               "--out-dir", tmp_path) == 2


def test_train_rerun_identical_checkpoint(pipeline, tmp_path):
    assert run("train", "--dataset", pipeline / "data.json", "--graph-dir", pipeline / "g", "--grid", "smoke",
               "--epochs", 5, "--out-dir", tmp_path) == 0
    for name in ("checkpoint.json", "train_log.csv"):
        assert (tmp_path / name).read_bytes() == (pipeline / "m" / name).read_bytes()


def test_eval_report_schema(pipeline):
    doc = json.loads((pipeline / "eval.json").read_text())
    rep = doc["report"]
    assert set(rep) == {"roc_auc", "sensitivity", "specificity", "tp", "fp", "tn", "fn", "n_pos", "n_neg"}
    assert rep["tp"] + rep["fp"] + rep["tn"] + rep["fn"] == doc["n_patients"]
    assert 0 <= rep["roc_auc"] <= 1


def test_aggregate(pipeline, tmp_path):
    out = tmp_path / "agg.json"
    assert run("aggregate", pipeline / "eval.json", pipeline / "eval.json", "--out", out) == 0
    agg = json.loads(out.read_text())["aggregate"]
    assert agg["roc_auc"]["n"] == 2 and agg["roc_auc"]["std"] == 0.0


def _csv_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_explain_outputs(pipeline):
    FT = 6 * 3
    delta = _csv_rows(pipeline / "x" / "delta_sensitivity.csv")
    assert len([r for r in delta if r["partition"] != "reference"]) == FT
    imp = _csv_rows(pipeline / "x" / "importance.csv")
    per_patient = {}
    for r in imp:
        per_patient[r["patient"]] = per_patient.get(r["patient"], 0) + int(r["selected"])
    assert set(per_patient.values()) == {math.ceil(0.05 * FT)}
    freq = _csv_rows(pipeline / "x" / "class_frequency.csv")
    assert len(freq) == 2 * FT


def test_every_output_embeds_hash_and_version(pipeline):
    for path in pipeline.rglob("*"):
        if not path.is_file() or path.name == "spec.json":
            continue
        text = path.read_text()
        if path.suffix == ".json":
            meta = json.loads(text)["meta"]
            assert meta["version"] and len(meta["config_hash"]) == 16, path
        else:
            assert "config_hash=" in text.splitlines()[0] and "0.1.0" in text.splitlines()[0], path


def test_config_file_defaults_and_unknown_keys(pipeline, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "hgd-dtw", "repr": "stg"}))
    assert run("graph", "--config", cfg, "--dataset", pipeline / "data.json", "--out-dir", tmp_path / "o") == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("graph", "--config", cfg, "--dataset", pipeline / "data.json", "--out-dir", tmp_path / "o") == 2
    assert "bogus" in capsys.readouterr().err


def test_config_hash_stable():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_full_rerun_is_byte_identical(pipeline, tmp_path):
    # rerun every stage into a fresh tree and compare all files
    data = pipeline / "data.json"
    spec = pipeline / "spec.json"
    assert run("synth", "--spec", spec, "--out", tmp_path / "data.json", *SMALL) == 0
    assert (tmp_path / "data.json").read_bytes() == data.read_bytes()
    assert run("graph", "--dataset", data, "--method", "correlation", "--repr", "stg", "--threshold", 0.5,
               "--sweep", "0.6,0.725,0.85,0.975", "--folds", 3, "--out-dir", tmp_path / "g") == 0
    assert run("train", "--dataset", data, "--graph-dir", tmp_path / "g", "--grid", "smoke", "--epochs", 5,
               "--out-dir", tmp_path / "m") == 0
    assert run("explain", "--checkpoint", tmp_path / "m" / "checkpoint.json", "--dataset", data,
               "--split", tmp_path / "g" / "split.json", "--out-dir", tmp_path / "x") == 0
    for sub in ("g", "m", "x"):
        cmp = filecmp.dircmp(pipeline / sub, tmp_path / sub)
        names = cmp.common_files
        match, mismatch, errors = filecmp.cmpfiles(pipeline / sub, tmp_path / sub, names, shallow=False)
        assert not mismatch and not errors and not cmp.left_only and not cmp.right_only, sub

import csv
import hashlib
import json
import re

import numpy as np
import pytest

from mmpred.cli import main
from mmpred.pipeline import RunConfig, ConfigError

TINY = {
    "generate": {"generator": {"n_patients": 120, "positive_fraction": 0.4,
                               "notes_per_patient_range": [2, 3]}},
    "preprocess": {"tokenizer_vocab_size": 300, "max_tokens": 48},
    "split": {"inner_folds": 2},
    "grid": {
        "static": {"gbt": None, "rforest": None,
                   "logreg": {"C": [1, 10], "penalty": ["l2"], "solver": ["liblinear"]},
                   "mlp": {"dropout": [0.2], "units_multiplier": [1]}},
        "series": {"rocket": {"num_kernels": [50]}, "c22features": None,
                   "gru_rnn": {"dropout": [0.2], "units_multiplier": [1]}},
        "text": {"text_encoder": {"dropout": [0.2], "units_multiplier": [1]}},
        "fusion": {"intermediate": {"dropout": [0.2, 0.3]}},
    },
    "deep": {"max_epochs": 3, "patience": 2},
    "text": {"dim": 8, "n_heads": 2, "ff_dim": 16, "n_blocks": 1},
    "evaluate": {"bootstrap": 100, "rank_blocks": 20},
    "explain": {"n_patients": 2, "n_coalitions": None, "grid_points": 6},
}


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["generate", "--config", str(cfg), "--seed", "3", "-o", str(d / "cohort.jsonl")]) == 0
    run = d / "run"
    assert main(["train", "--config", str(cfg), "--cohort", str(d / "cohort.jsonl"), "-o", str(run)]) == 0
    for cmd in ("evaluate", "explain", "report"):
        assert main([cmd, str(run)]) == 0
    return d, run


def test_generate_fixture_and_determinism(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["generate", "--fixture", "lung-like", "--seed", "1", "-o", str(a)]) == 0
    assert main(["generate", "--fixture", "lung-like", "--seed", "1", "-o", str(b)]) == 0
    assert len(a.read_text().splitlines()) == 870
    assert sha(a) == sha(b)


def test_generate_size_flags(tmp_path):
    out = tmp_path / "c.jsonl"
    assert main(["generate", "--n", "100", "--pos-frac", "0.5", "-o", str(out)]) == 0
    labels = [json.loads(l)["label"] for l in out.read_text().splitlines()]
    assert labels.count("positive") == 50 and len(labels) == 100


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MMPRED_OUTPUT_ROOT", str(tmp_path))
    assert main(["generate", "--n", "40", "--pos-frac", "0.5", "-o", "sub/c.jsonl"]) == 0
    assert (tmp_path / "sub" / "c.jsonl").exists()


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_key": 1}))
    assert main(["train", "--config", str(bad), "--cohort", "x.jsonl", "-o", str(tmp_path / "r")]) == 2
    assert main(["train", "--cohort", str(tmp_path / "missing.jsonl"), "-o", str(tmp_path / "r")]) == 2
    assert main(["generate", "--fixture", "kidney-like", "-o", str(tmp_path / "k.jsonl")]) == 2
    assert main(["generate", "--n", "5", "-o", str(tmp_path / "k.jsonl")]) == 2
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad)]) == 2


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"split": {"dev_fraction": 1.0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"preprocess": {"tokenizer_vocab_size": 100}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"deep": {"epochs": 3}})
    cfg = RunConfig.from_dict({"split": {"mode": "nested"}})
    assert cfg.plan().mode == "nested" and cfg.plan().outer_folds == 5


def test_pipeline_errors_exit_3(tmp_path):
    assert main(["evaluate", str(tmp_path)]) == 3


def test_missing_checkpoint_lists_stage(tiny_run, tmp_path, capsys):
    import shutil
    _, run = tiny_run
    copy = tmp_path / "copy"
    shutil.copytree(run, copy)
    (copy / "fold_0" / "models" / "labs.json").unlink()
    assert main(["evaluate", str(copy)]) == 3
    assert "labs" in capsys.readouterr().err


def test_run_directory_is_self_describing(tiny_run):
    _, run = tiny_run
    cfg = json.loads((run / "config.json").read_text())
    assert cfg["grid"]["series"]["rocket"] == {"num_kernels": [50]}
    assert (run / "fold_0" / "dev.npz").exists()
    meta = json.loads((run / "fold_0" / "models" / "static.json").read_text())
    assert meta["schema_hash"]


def test_results_layout(tiny_run):
    _, run = tiny_run
    rows = read(run / "results.csv")
    assert list(rows[0]) == ["model", "AUPRC", "AUROC", "F1 (macro)", "Specificity", "Sensitivity"]
    assert [r["model"] for r in rows] == ["Static", "Labs", "Meds", "Text", "EF", "LF", "IF"]
    for r in rows:
        assert all(0 <= float(r[c]) <= 1 for c in list(r)[1:])
    stats = read(run / "rank_stats.csv")
    assert {r["metric"] for r in stats} == {"auprc", "auroc"}
    assert (run / "cd_auprc.svg").read_text().startswith("<svg")


def test_selection_log(tiny_run):
    _, run = tiny_run
    rows = read(run / "fold_0" / "selection.csv")
    per_mod = {}
    for r in rows:
        per_mod.setdefault(r["modality"], []).append(r)
    # one row per grid point per modality
    assert len(per_mod["static"]) == 3 and len(per_mod["labs"]) == 2 and len(per_mod["intermediate"]) == 2
    for m, rs in per_mod.items():
        win = [r for r in rs if r["winner"] == "1"]
        assert len(win) == 1
        assert float(win[0]["mean_val_auprc"]) == max(float(r["mean_val_auprc"]) for r in rs)


def test_explain_outputs(tiny_run):
    _, run = tiny_run
    ex = run / "explain"
    names = [r["model"] for r in read(ex / "censoring.csv")]
    assert "IF" in names and "IF (censored)" in names
    svg = (ex / "relevance.svg").read_text()
    vals = [float(v) for v in re.findall(r'class="bar" data-value="([0-9.]+)"', svg)]
    assert len(vals) == 4 and abs(sum(vals) - 1) < 1e-5
    svg = (ex / "faithfulness.svg").read_text()
    labels = re.findall(r'class="curve" data-label="([^"]+)"', svg)
    assert labels == ["High to Low", "Low to High", "Random"]
    att = read(ex / "attributions.csv")
    assert list(att[0]) == ["patient", "modality", "channel", "position", "phi"]
    curves = read(ex / "faithfulness.csv")
    first = {r["mean_output"] for r in curves if float(r["fraction_masked"]) == 0}
    last = {r["mean_output"] for r in curves if float(r["fraction_masked"]) == 1}
    assert len(first) == 1 and len(last) == 1
    assert "## Explanations" in (run / "report.md").read_text()


def test_evaluate_is_repeatable(tiny_run):
    _, run = tiny_run
    before = sha(run / "results.csv"), sha(run / "rank_stats.csv")
    assert main(["evaluate", str(run)]) == 0
    assert (sha(run / "results.csv"), sha(run / "rank_stats.csv")) == before


@pytest.mark.slow
def test_nested_mode(tiny_run):
    d, _ = tiny_run
    run = d / "nested"
    cfg = d / "cfg.json"
    assert main(["train", "--config", str(cfg), "--cohort", str(d / "cohort.jsonl"),
                 "--mode", "nested", "-o", str(run)]) == 0
    folds = sorted(run.glob("fold_*"))
    assert len(folds) == 5
    tests = np.concatenate([np.load(f / "test.npz")["patient_ids"] for f in folds])
    assert len(tests) == 120 and len(set(tests)) == 120
    for f in folds:
        assert sum(r["winner"] == "1" for r in read(f / "selection.csv")) == 6
    assert main(["evaluate", str(run)]) == 0
    cell = read(run / "results.csv")[0]["AUROC"]
    assert re.fullmatch(r"\d\.\d{3} \[\d\.\d{3}, \d\.\d{3}\]", cell)


def test_pool_size_does_not_change_selection(tiny_run, tmp_path):
    d, run = tiny_run
    cfg = tmp_path / "pool.json"
    cfg.write_text(json.dumps({**TINY, "jobs": 2}))
    pooled = tmp_path / "pool"
    assert main(["train", "--config", str(cfg), "--cohort", str(d / "cohort.jsonl"), "-o", str(pooled)]) == 0
    assert sha(pooled / "fold_0" / "selection.csv") == sha(run / "fold_0" / "selection.csv")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"jobs": 0})

"""End-to-end orchestration behind the command line: train, evaluate, explain, report.

A run directory is self-describing. It holds the resolved ``config.json`` and
one ``fold_<k>`` directory per outer split (a single fold in tripod2a mode),
each with the encoded datasets, the saved winners and a selection log.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .evaluation import (
    SplitPlan, auprc, bootstrap_ci, bootstrap_scores, cd_diagram_data, compute_metrics,
    critical_difference, friedman_test, nemenyi_posthoc, rank_matrix, stratified_folds,
    stratified_split,
)
from .evaluation.cv import _folds_with_retry
from .evaluation.splits import SplitError
from .explain import (
    ShapleyError, explain_dataset, faithfulness_curves, modality_relevance, top_percentile_local,
    write_attributions_csv, write_curves_csv, write_relevance_csv,
)
from .fusion import (
    UNIMODAL, IntermediateModel, LateEnsemble, ModalityModel, build_intermediate, late_weights,
    train_intermediate,
)
from .models import DEEP_KINDS, HyperGrid, load_model, make_model, save_model
from .models.neural import TRAIN_KEYS
from .preprocess import EncodedDataset, Preprocessor
from .synthgen import read_cohort

log = logging.getLogger("mmpred")

MODEL_ORDER = ("static", "labs", "meds", "text", "early", "late", "intermediate")
DISPLAY = {"static": "Static", "labs": "Labs", "meds": "Meds", "text": "Text", "early": "EF",
           "late": "LF", "intermediate": "IF"}
METRIC_COLUMNS = (("auprc", "AUPRC"), ("auroc", "AUROC"), ("f1_macro", "F1 (macro)"),
                  ("specificity", "Specificity"), ("sensitivity", "Sensitivity"))
# tie-break order for model selection: simpler kinds first
SIMPLICITY = ("logreg", "knn", "c22features", "rforest", "gbt", "rocket", "mlp", "gru_rnn",
              "text_encoder")


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


class PipelineError(RuntimeError):
    """Failure while running a pipeline stage (exit code 3)."""


@dataclass
class RunConfig:
    cohort: str | None = None
    output_dir: str = "run"
    seed: int = 0
    split: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)
    modalities: list = field(default_factory=lambda: ["static", "labs", "meds", "text", "early"])
    grid: dict = field(default_factory=dict)
    deep: dict = field(default_factory=dict)
    text: dict = field(default_factory=dict)
    fusion: dict = field(default_factory=lambda: {"late": True, "intermediate": True, "head_units": 64,
                                                  "stage1": {}, "stage2": {}})
    evaluate: dict = field(default_factory=lambda: {"bootstrap": 2000, "alpha": 0.05, "rank_blocks": 100,
                                                    "rank_metrics": ["auprc", "auroc"]})
    explain: dict = field(default_factory=lambda: {"n_patients": 10, "n_coalitions": None,
                                                   "groups": "feature", "grid_points": 21, "pct": 0.1})
    generate: dict = field(default_factory=dict)
    jobs: int | None = None  # grid-search worker processes; None means one per logical core

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls()
        for k, v in d.items():
            default = getattr(cfg, k)
            if isinstance(default, dict) and isinstance(v, dict):
                merged = dict(default)
                merged.update(v)
                v = merged
            setattr(cfg, k, v)
        return cfg.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def workers(self) -> int:
        return self.jobs or os.cpu_count() or 1

    def plan(self) -> SplitPlan:
        try:
            return SplitPlan(**{"seed": self.seed, **self.split})
        except TypeError as e:
            raise ConfigError(f"split: {e}") from None

    def validate(self) -> "RunConfig":
        try:
            self.plan().validate()
        except SplitError as e:
            raise ConfigError(str(e)) from None
        bad = [m for m in self.modalities if m not in UNIMODAL + ("early",)]
        if bad:
            raise ConfigError(f"unknown modalities {bad}")
        try:
            HyperGrid.from_config(self.grid)
        except ValueError as e:
            raise ConfigError(f"grid: {e}") from None
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        bad_deep = sorted(set(self.deep) - set(TRAIN_KEYS))
        if bad_deep:
            raise ConfigError(f"deep: unknown training keys {bad_deep}")
        if self.fusion.get("intermediate") and not set(UNIMODAL) <= set(self.modalities):
            raise ConfigError("intermediate fusion needs all four unimodal modalities")
        if self.jobs is not None and (not isinstance(self.jobs, int) or self.jobs < 1):
            raise ConfigError("jobs must be a positive integer or null")
        try:
            Preprocessor(**self.preprocess)
        except TypeError as e:
            raise ConfigError(f"preprocess: {e}") from None
        if self.preprocess.get("tokenizer_vocab_size", 1000) < 256:
            raise ConfigError("preprocess.tokenizer_vocab_size must be >= 256")
        return self


def _fmt(v) -> str:
    return "" if v is None else format(float(v), ".6f")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- training ---------------------------------------------------------------------

def _candidate_hp(kind: str, point: dict, cfg: RunConfig, dev: EncodedDataset) -> dict:
    hp = dict(point)
    if kind in DEEP_KINDS:
        hp.update(cfg.deep)
    if kind == "text_encoder":
        hp.update(cfg.text)
        hp["n_tokens"] = len(dev.vocab.tokenizer)
        hp.setdefault("max_len", dev.max_tokens)
    return hp


def _rank_key(row: dict):
    return (-row["score"], SIMPLICITY.index(row["kind"]) if row["kind"] in SIMPLICITY else 99, row["name"])


_WORKER_DATA: dict = {}


def _init_worker(inputs, y) -> None:
    _WORKER_DATA["inputs"], _WORKER_DATA["y"] = inputs, y


def _fit_score(job) -> float:
    """One (grid point, inner fold) fit; returns validation AUPRC."""
    modality, kind, hp, seed, tr, va = job
    inputs, y = _WORKER_DATA["inputs"], _WORKER_DATA["y"]
    sub = {k: v[tr] for k, v in inputs.items()}
    val = {k: v[va] for k, v in inputs.items()}
    m = ModalityModel(modality, make_model(kind, seed=seed, **hp)).fit(sub, y[tr], val, y[va])
    return auprc(m.predict_proba(val), y[va])


def _run_jobs(jobs: list, inputs, y, workers: int) -> list:
    # results come back in submission order, so the outcome does not depend on the pool size
    workers = min(workers, len(jobs))
    if workers <= 1:
        _init_worker(inputs, y)
        try:
            return [_try(_fit_score, j) for j in jobs]
        finally:
            _WORKER_DATA.clear()
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(inputs, y)) as ex:
        futures = [ex.submit(_fit_score, j) for j in jobs]
        return [_try(f.result) for f in futures]


def _try(fn, *args):
    try:
        return fn(*args)
    except Exception as e:  # keep the failure as a value; the caller names the grid point
        return e


def select_modality(modality: str, cfg: RunConfig, grid: HyperGrid, dev: EncodedDataset,
                    folds, seed: int) -> list[dict]:
    """Score every grid point of every kind by mean inner-validation AUPRC."""
    cands = [(kind, point, _candidate_hp(kind, point, cfg, dev))
             for kind in grid.kinds(modality) for point in grid.points(modality, kind)]
    if not cands:
        raise PipelineError(f"train/{modality}: the grid has no candidates")
    jobs = [(modality, kind, hp, seed, tr, va) for kind, _, hp in cands for tr, va in folds]
    scores = _run_jobs(jobs, dev.inputs(), dev.labels, cfg.workers())
    rows = []
    for i, (kind, point, hp) in enumerate(cands):
        vals = scores[i * len(folds):(i + 1) * len(folds)]
        err = next((v for v in vals if isinstance(v, Exception)), None)
        if err is not None:
            raise PipelineError(f"train/{modality}/{kind} {point}: {err}") from err
        name = f"{kind}{json.dumps(point, sort_keys=True)}"
        rows.append({"modality": modality, "kind": kind, "name": name, "point": point, "hp": hp,
                     "score": float(np.mean(vals))})
        log.info("%s %s mean val AUPRC %.4f", modality, name, rows[-1]["score"])
    return rows


def train_fold(cfg: RunConfig, dev_patients, test_patients, fold_dir: Path, seed: int) -> None:
    fold_dir.mkdir(parents=True, exist_ok=True)
    models_dir = fold_dir / "models"
    models_dir.mkdir(exist_ok=True)
    try:
        pre = Preprocessor(**cfg.preprocess).fit(dev_patients)
        dev = pre.transform(dev_patients)
    except ValueError as e:
        raise PipelineError(f"train/preprocess: {e}") from e
    dev.save(fold_dir / "dev.npz")
    pre.transform(test_patients).save(fold_dir / "test.npz")
    pre.transform(test_patients, censor=True).save(fold_dir / "test_censored.npz")
    schema = dev.schema_hash()
    grid = HyperGrid.from_config(cfg.grid)
    plan = cfg.plan()
    try:
        folds = _folds_with_retry(dev.labels, plan.inner_folds, seed)
    except SplitError as e:
        raise PipelineError(f"train: {e}") from e
    inputs, y = dev.inputs(), dev.labels
    log_rows, winners, donors, val_auprc = [], {}, {}, {}

    # stage 1: unimodal models and early fusion
    for m in cfg.modalities:
        rows = select_modality(m, cfg, grid, dev, folds, seed)
        best = min(rows, key=_rank_key)
        for r in rows:
            log_rows.append([r["modality"], r["kind"], json.dumps(r["point"], sort_keys=True),
                             _fmt(r["score"]), int(r is best)])
        model = ModalityModel(m, make_model(best["kind"], seed=seed, **best["hp"])).fit(inputs, y)
        save_model(model.model, models_dir / m, m, schema)
        winners[m], val_auprc[m] = model, best["score"]
        deep = [r for r in rows if r["kind"] in DEEP_KINDS]
        if m in UNIMODAL and deep:
            d = min(deep, key=_rank_key)
            donors[m] = model.model if d is best else \
                ModalityModel(m, make_model(d["kind"], seed=seed, **d["hp"])).fit(inputs, y).model

    # stage 2: late fusion over the unimodal winners
    members = [m for m in UNIMODAL if m in winners]
    if cfg.fusion.get("late") and members:
        w = late_weights([val_auprc[m] for m in members])
        (models_dir / "late.json").write_text(json.dumps(
            {"format": "mmpred.late/1", "members": members, "weights": [float(x) for x in w],
             "validation_auprc": [val_auprc[m] for m in members]}, indent=2, sort_keys=True))

    # stage 3: intermediate fusion on the deep donors
    if cfg.fusion.get("intermediate"):
        missing = [m for m in UNIMODAL if m not in donors]
        if missing:
            raise PipelineError(f"train/intermediate: no deep model in the grid for {missing}")
        tr, va = stratified_split(y, 0.8, seed)
        sub = {k: v[tr] for k, v in inputs.items()}
        val = {k: v[va] for k, v in inputs.items()}
        best_if, best_score = None, -np.inf
        for kind in grid.kinds("intermediate"):
            for point in grid.points("intermediate", kind):
                model = build_intermediate(donors, int(cfg.fusion.get("head_units", 64)),
                                           float(point.get("dropout", 0.2)), seed)
                try:
                    train_intermediate(model, sub, y[tr], val, y[va],
                                       stage1={**cfg.deep, **cfg.fusion.get("stage1", {})},
                                       stage2=cfg.fusion.get("stage2") or None)
                except Exception as e:
                    raise PipelineError(f"train/intermediate {point}: {e}") from e
                score = auprc(model.predict_proba(val), y[va])
                log_rows.append(["intermediate", kind, json.dumps(point, sort_keys=True), _fmt(score), 0])
                if score > best_score:
                    best_if, best_score, best_row = model, score, len(log_rows) - 1
        log_rows[best_row][-1] = 1
        best_if.save(models_dir / "intermediate")

    _write_csv(fold_dir / "selection.csv", ["modality", "kind", "params", "mean_val_auprc", "winner"],
               log_rows)


def _outer_splits(y: np.ndarray, plan: SplitPlan):
    if plan.mode == "nested":
        return stratified_folds(y, plan.outer_folds, plan.seed)
    return [stratified_split(y, plan.dev_fraction, plan.seed)]


def train(cfg: RunConfig) -> Path:
    if not cfg.cohort:
        raise ConfigError("train needs a cohort file (config 'cohort' or --cohort)")
    if not Path(cfg.cohort).exists():
        raise ConfigError(f"cohort file {cfg.cohort} does not exist")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    patients = read_cohort(cfg.cohort)
    y = np.array([p.y for p in patients])
    plan = cfg.plan()
    try:
        splits = _outer_splits(y, plan)
    except SplitError as e:
        raise PipelineError(f"train: {e}") from e
    for f, (dev_idx, test_idx) in enumerate(splits):
        log.info("fold %d: %d dev / %d test", f, len(dev_idx), len(test_idx))
        train_fold(cfg, [patients[i] for i in dev_idx], [patients[i] for i in test_idx],
                   out / f"fold_{f}", plan.seed + 101 * f)
    return out


# -- loading and prediction -----------------------------------------------------

def load_config(run_dir) -> RunConfig:
    path = Path(run_dir) / "config.json"
    if not path.exists():
        raise PipelineError(f"{run_dir} is not a run directory (no config.json); run 'train' first")
    return RunConfig.from_dict(json.loads(path.read_text()))


def fold_dirs(run_dir) -> list[Path]:
    dirs = sorted(Path(run_dir).glob("fold_*"), key=lambda p: int(p.name.split("_")[1]))
    if not dirs:
        raise PipelineError(f"{run_dir}: no trained folds; run 'train' first")
    return dirs


def expected_models(cfg: RunConfig) -> list[str]:
    names = list(cfg.modalities)
    if cfg.fusion.get("late"):
        names.append("late")
    if cfg.fusion.get("intermediate"):
        names.append("intermediate")
    return [m for m in MODEL_ORDER if m in names]


def load_fold_models(cfg: RunConfig, fold_dir: Path) -> dict:
    mdir = fold_dir / "models"
    need = expected_models(cfg)
    absent = [m for m in need if not (mdir / (m + ".json")).exists()]
    if absent:
        raise PipelineError(f"{fold_dir}: missing checkpoints for stages {absent}; rerun 'train'")
    models = {}
    for m in need:
        if m == "late":
            meta = json.loads((mdir / "late.json").read_text())
            models[m] = LateEnsemble([models[k] for k in meta["members"]], meta["weights"])
        elif m == "intermediate":
            models[m] = IntermediateModel.load(mdir / "intermediate")
        else:
            model, meta = load_model(mdir / m)
            models[m] = ModalityModel(meta["modality"], model)
    return models


def predict_fold(cfg: RunConfig, fold_dir: Path, censored: bool = False) -> tuple[EncodedDataset, dict]:
    data = EncodedDataset.load(fold_dir / ("test_censored.npz" if censored else "test.npz"))
    models = load_fold_models(cfg, fold_dir)
    inputs = data.inputs()
    return data, {m: np.asarray(model.predict_proba(inputs), dtype=float) for m, model in models.items()}


# -- evaluation -----------------------------------------------------------------

def evaluate(run_dir) -> Path:
    cfg = load_config(run_dir)
    run_dir = Path(run_dir)
    ev = cfg.evaluate
    pooled: dict[str, list] = {}
    labels, pids = [], []
    for fd in fold_dirs(run_dir):
        data, probs = predict_fold(cfg, fd)
        _write_csv(fd / "predictions.csv", ["patient", "label", *[DISPLAY[m] for m in probs]],
                   [[pid, int(lab), *[_fmt(probs[m][i]) for m in probs]]
                    for i, (pid, lab) in enumerate(zip(data.patient_ids, data.labels))])
        for m, p in probs.items():
            pooled.setdefault(m, []).append(p)
        labels.append(data.labels)
        pids += data.patient_ids
    y = np.concatenate(labels)
    probs = {m: np.concatenate(v) for m, v in pooled.items()}
    nested = cfg.plan().mode == "nested"
    rows = []
    for m, p in probs.items():
        rep = compute_metrics(p, y, strict=False).as_dict()
        row = [DISPLAY[m]]
        for key, _ in METRIC_COLUMNS:
            if nested and rep[key] is not None:
                ci = bootstrap_ci(p, y, key, B=int(ev["bootstrap"]), alpha=float(ev["alpha"]), seed=cfg.seed)
                row.append(f"{rep[key]:.3f} [{ci.lower:.3f}, {ci.upper:.3f}]")
            else:
                row.append(_fmt(rep[key]))
        rows.append(row)
    _write_csv(run_dir / "results.csv", ["model", *[c for _, c in METRIC_COLUMNS]], rows)
    rank_statistics(run_dir, probs, y, cfg)
    return run_dir / "results.csv"


def rank_statistics(run_dir: Path, probs: dict, y: np.ndarray, cfg: RunConfig) -> None:
    """Friedman / Nemenyi over bootstrap replicates of the pooled test predictions."""
    ev = cfg.evaluate
    names = [DISPLAY[m] for m in probs]
    stats_rows = []
    if len(names) < 3:
        _write_csv(run_dir / "rank_stats.csv", ["metric", "chi2", "p", "cd", "blocks", "k"], [])
        return
    for metric in ev.get("rank_metrics", ["auprc"]):
        _, S = bootstrap_scores({DISPLAY[m]: p for m, p in probs.items()}, y, metric,
                                B=int(ev["rank_blocks"]), seed=cfg.seed)
        rm = rank_matrix(S, names)
        chi2, p = friedman_test(rm)
        N, k = rm.shape
        cd = critical_difference(k, N, float(ev["alpha"]))
        stats_rows.append([metric, _fmt(chi2), _fmt(p), _fmt(cd), N, k])
        P = nemenyi_posthoc(rm)
        _write_csv(run_dir / f"nemenyi_{metric}.csv", ["model", "mean_rank", *names],
                   [[n, _fmt(rm.mean_ranks[i]), *map(_fmt, P[i])] for i, n in enumerate(names)])
        diagram = cd_diagram_data(rm.mean_ranks, cd, names)
        plots.write(run_dir / f"cd_{metric}.svg", plots.cd_diagram(diagram, f"Mean ranks ({metric.upper()})"))
    _write_csv(run_dir / "rank_stats.csv", ["metric", "chi2", "p", "cd", "blocks", "k"], stats_rows)


# -- explanation ------------------------------------------------------------------

def explain(run_dir) -> Path:
    cfg = load_config(run_dir)
    run_dir = Path(run_dir)
    if not cfg.fusion.get("intermediate"):
        raise PipelineError("explain needs the intermediate fusion model; enable fusion.intermediate")
    ex = cfg.explain
    fd = fold_dirs(run_dir)[0]
    out = run_dir / "explain"
    out.mkdir(exist_ok=True)
    models = load_fold_models(cfg, fd)
    model = models["intermediate"]
    data = EncodedDataset.load(fd / "test.npz")
    n = min(int(ex["n_patients"]), len(data))
    idx = list(range(n))
    budget = ex.get("n_coalitions")
    try:
        sers, atts = explain_dataset(model, data, idx, None if budget is None else int(budget),
                                     cfg.seed, ex.get("groups"))
    except ShapleyError as e:
        raise PipelineError(f"explain: {e}") from e
    pids = [data.patient_ids[i] for i in idx]
    write_attributions_csv(out / "attributions.csv", atts, pids)
    rel = modality_relevance(atts)
    write_relevance_csv(out / "relevance.csv", rel, pids)
    plots.write(out / "relevance.svg", plots.bar_chart(
        [DISPLAY[m] for m in rel.modalities], rel.global_share,
        "Global modality relevance", "share of |SHAP|", ymax=1.0))
    top = top_percentile_local(atts, float(ex.get("pct", 0.1)), data.vocab)
    _write_csv(out / "top_features.csv", ["patient", "feature", "name", "phi"],
               [[pid, i, name, _fmt(v)] for pid, sel in zip(pids, top) for i, name, v in sel])
    grid = np.linspace(0.0, 1.0, int(ex.get("grid_points", 21)))
    curves = faithfulness_curves(model, sers, atts, grid, cfg.seed, data.max_tokens)
    write_curves_csv(out / "faithfulness.csv", curves)
    labels = {"high_to_low": "High to Low", "low_to_high": "Low to High", "random": "Random"}
    plots.write(out / "faithfulness.svg", plots.line_plot(
        {labels[k]: (c.x, c.y) for k, c in curves.items()}, "Perturbation faithfulness",
        "fraction of features masked", "mean predicted probability", hline=0.5))
    _write_csv(out / "faithfulness_summary.csv", ["strategy", "drop_area", "crossing_0.5"],
               [[k, _fmt(c.drop_area()), _fmt(c.crossing()) if np.isfinite(c.crossing()) else "inf"]
                for k, c in curves.items()])
    # censored re-test of the fused model (and the text model for contrast)
    data_c = EncodedDataset.load(fd / "test_censored.npz")
    rows = []
    for name, key, d in (("IF", "intermediate", data), ("IF (censored)", "intermediate", data_c),
                         ("Text", "text", data), ("Text (censored)", "text", data_c)):
        if key not in models:
            continue
        rep = compute_metrics(models[key].predict_proba(d.inputs()), d.labels, strict=False).as_dict()
        rows.append([name, *[_fmt(rep[k]) for k, _ in METRIC_COLUMNS]])
    _write_csv(out / "censoring.csv", ["model", *[c for _, c in METRIC_COLUMNS]], rows)
    return out


# -- report -----------------------------------------------------------------------

def _md_table(rows: list[dict]) -> list[str]:
    if not rows:
        return ["(none)"]
    head = list(rows[0])
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(r[h] for h in head) + " |" for r in rows]
    return lines


def report(run_dir) -> Path:
    cfg = load_config(run_dir)
    run_dir = Path(run_dir)
    if not (run_dir / "results.csv").exists():
        raise PipelineError(f"{run_dir}: no results.csv; run 'evaluate' first")
    lines = ["# Run report", "", f"Split mode: {cfg.plan().mode}, seed {cfg.seed}, "
             f"{len(fold_dirs(run_dir))} fold(s).", "", "## Test performance", ""]
    lines += _md_table(_read_csv(run_dir / "results.csv"))
    lines += ["", "## Rank statistics", ""]
    lines += _md_table(_read_csv(run_dir / "rank_stats.csv"))
    for svg in sorted(run_dir.glob("cd_*.svg")):
        lines += ["", f"![critical difference]({svg.name})"]
    lines += ["", "## Selected models", ""]
    for fd in fold_dirs(run_dir):
        winners = [r for r in _read_csv(fd / "selection.csv") if r["winner"] == "1"]
        lines.append(f"### {fd.name}")
        lines.append("")
        lines += _md_table(winners)
        lines.append("")
    ex = run_dir / "explain"
    if ex.exists():
        lines += ["## Explanations", "", "### Modality relevance", ""]
        lines += _md_table(_read_csv(ex / "relevance.csv")[:1])
        lines += ["", "![relevance](explain/relevance.svg)", "", "### Faithfulness", ""]
        lines += _md_table(_read_csv(ex / "faithfulness_summary.csv"))
        lines += ["", "![faithfulness](explain/faithfulness.svg)", "", "### Censored text", ""]
        lines += _md_table(_read_csv(ex / "censoring.csv"))
    path = run_dir / "report.md"
    path.write_text("\n".join(lines) + "\n")
    return path

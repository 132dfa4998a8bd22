"""Discrimination and threshold metrics for binary outcomes."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

METRICS = ("auprc", "auroc", "f1_macro", "specificity", "sensitivity")


class MetricError(ValueError):
    pass


def _check(probs, labels):
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise MetricError(f"probs {p.shape} and labels {y.shape} must be equal-length vectors")
    if not np.isfinite(p).all():
        raise MetricError("probabilities must be finite")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be binary 0/1")
    return p, y.astype(np.int64)


def _both_classes(y):
    if y.min() == y.max():
        raise MetricError("area metrics are undefined for single-class labels")


def auroc(probs, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg) with mid-ranks for ties."""
    p, y = _check(probs, labels)
    _both_classes(y)
    r = rankdata(p)
    n1 = y.sum()
    n0 = len(y) - n1
    return float((r[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def auprc(probs, labels) -> float:
    """Step-wise average precision: sum over distinct thresholds of dRecall * precision."""
    p, y = _check(probs, labels)
    _both_classes(y)
    order = np.argsort(-p, kind="mergesort")
    ps, ys = p[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(ps)), len(ps) - 1]
    tp = np.cumsum(ys)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def confusion(probs, labels, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with positive prediction when prob >= threshold."""
    p, y = _check(probs, labels)
    pred = p >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return tp, fp, tn, fn


def _ratio(a, b) -> float:
    return a / b if b else 0.0


def threshold_metrics(probs, labels, threshold: float = 0.5) -> dict[str, float]:
    tp, fp, tn, fn = confusion(probs, labels, threshold)
    f1_pos = _ratio(2 * tp, 2 * tp + fp + fn)
    f1_neg = _ratio(2 * tn, 2 * tn + fn + fp)
    return {"f1_macro": (f1_pos + f1_neg) / 2, "sensitivity": _ratio(tp, tp + fn),
            "specificity": _ratio(tn, tn + fp)}


@dataclass
class MetricReport:
    auprc: float | None
    auroc: float | None
    f1_macro: float
    specificity: float
    sensitivity: float
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(probs, labels, threshold: float = 0.5, strict: bool = True) -> MetricReport:
    """All five metrics. With single-class labels the area metrics raise unless
    ``strict`` is false, in which case they are None."""
    p, y = _check(probs, labels)
    tm = threshold_metrics(p, y, threshold)
    if y.min() == y.max():
        if strict:
            raise MetricError("area metrics are undefined for single-class labels")
        return MetricReport(None, None, **tm)
    return MetricReport(auprc(p, y), auroc(p, y), **tm)


METRIC_FUNCS = {
    "auprc": auprc,
    "auroc": auroc,
    "f1_macro": lambda p, y: threshold_metrics(p, y)["f1_macro"],
    "sensitivity": lambda p, y: threshold_metrics(p, y)["sensitivity"],
    "specificity": lambda p, y: threshold_metrics(p, y)["specificity"],
}

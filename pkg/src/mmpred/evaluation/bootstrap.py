"""Percentile bootstrap confidence intervals for binary-classification metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import METRIC_FUNCS, _check


class BootstrapError(ValueError):
    pass


@dataclass
class BootstrapResult:
    lower: float
    upper: float
    estimate: float
    n_redrawn: int
    samples: np.ndarray


def bootstrap_indices(labels, B: int, seed: int, max_degenerate_frac: float = 0.5) -> tuple[np.ndarray, int]:
    """B resample index vectors, each containing both classes.

    Single-class resamples are discarded and redrawn; if they make up more
    than ``max_degenerate_frac`` of all draws the interval is refused.
    """
    y = np.asarray(labels)
    n = len(y)
    rng = np.random.default_rng(seed)
    kept, redrawn, total = [], 0, 0
    while len(kept) < B:
        need = B - len(kept)
        idx = rng.integers(0, n, size=(need, n))
        s = y[idx].sum(axis=1)
        ok = (s > 0) & (s < n)
        total += need
        redrawn += int((~ok).sum())
        if redrawn > max_degenerate_frac * total:
            raise BootstrapError(f"{redrawn} of {total} resamples contained a single class")
        kept.extend(idx[ok])
    return np.array(kept[:B]), redrawn


def bootstrap_ci(probs, labels, metric="auroc", B: int = 2000, alpha: float = 0.05,
                 seed: int = 0) -> BootstrapResult:
    p, y = _check(probs, labels)
    if len(y) < 10:
        raise BootstrapError(f"bootstrap needs n >= 10, got {len(y)}")
    fn = METRIC_FUNCS[metric] if isinstance(metric, str) else metric
    idx, redrawn = bootstrap_indices(y, B, seed)
    vals = np.array([fn(p[i], y[i]) for i in idx])
    lo, hi = np.quantile(vals, [alpha / 2, 1 - alpha / 2])
    return BootstrapResult(float(lo), float(hi), float(fn(p, y)), redrawn, vals)


def bootstrap_scores(probs_by_model: dict[str, np.ndarray], labels, metric="auprc", B: int = 200,
                     seed: int = 0) -> tuple[list[str], np.ndarray]:
    """Metric of every model on shared resamples: rows are Friedman blocks."""
    y = np.asarray(labels)
    fn = METRIC_FUNCS[metric] if isinstance(metric, str) else metric
    idx, _ = bootstrap_indices(y, B, seed)
    names = list(probs_by_model)
    S = np.array([[fn(np.asarray(probs_by_model[m])[i], y[i]) for m in names] for i in idx])
    return names, S

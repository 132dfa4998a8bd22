"""TRIPOD 2a and nested stratified cross-validation with inner-loop model selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metrics import auprc
from .splits import SplitError, stratified_folds, stratified_split


@dataclass
class SplitPlan:
    mode: str = "tripod2a"  # or "nested"
    outer_folds: int = 5
    inner_folds: int = 5
    dev_fraction: float = 0.8
    seed: int = 0

    def validate(self) -> "SplitPlan":
        if self.mode not in ("tripod2a", "nested"):
            raise SplitError(f"unknown split mode {self.mode!r}")
        if not 0.0 < self.dev_fraction < 1.0:
            raise SplitError(f"dev_fraction must lie strictly between 0 and 1, got {self.dev_fraction}")
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise SplitError("fold counts must be >= 2")
        return self


def _take(data, idx):
    if isinstance(data, dict):
        return {k: v[idx] for k, v in data.items()}
    return data[idx]


# a candidate is (name, factory); factory() returns an object with
# fit(data, y, val_data, val_y) and predict_proba(data)
Candidate = tuple[str, Callable[[], object]]


@dataclass
class OuterResult:
    fold: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    inner_idx: np.ndarray  # every index touched by the inner loop
    scores: dict[str, float]
    winner: str
    model: object = None
    test_probs: np.ndarray | None = None


@dataclass
class CVResult:
    folds: list[OuterResult]
    pooled_probs: np.ndarray
    pooled_labels: np.ndarray
    pooled_index: np.ndarray
    winners: list[str] = field(default_factory=list)


def _folds_with_retry(y, k: int, seed: int, attempts: int = 3):
    last = None
    for a in range(attempts):
        try:
            folds = stratified_folds(y, k, seed + 1000 * a)
        except SplitError as e:
            last = e
            continue
        if all(len(np.unique(y[tr])) == 2 and len(np.unique(y[te])) == 2 for tr, te in folds):
            return folds
        last = SplitError("degenerate inner fold")
    raise SplitError(f"could not form {k} non-degenerate folds after {attempts} attempts: {last}")


def select(candidates: list[Candidate], data, y, idx: np.ndarray, k: int, seed: int,
           refit_val: bool = True) -> tuple[str, dict[str, float], np.ndarray]:
    """Inner k-fold selection on ``idx``; returns (winner, mean val AUPRC per candidate, touched)."""
    folds = _folds_with_retry(y[idx], k, seed)
    scores = {}
    for name, factory in candidates:
        vals = []
        for tr, va in folds:
            m = factory()
            m.fit(_take(data, idx[tr]), y[idx[tr]], _take(data, idx[va]), y[idx[va]])
            vals.append(auprc(m.predict_proba(_take(data, idx[va])), y[idx[va]]))
        scores[name] = float(np.mean(vals))
    best = max(scores.values())
    winner = next(n for n, _ in candidates if scores[n] == best)
    return winner, scores, idx


def refit(factory, data, y, idx: np.ndarray, seed: int, val_fraction: float = 0.2):
    """Fit on ``idx``; deep models get a stratified validation slice carved from it."""
    tr, va = stratified_split(y[idx], 1 - val_fraction, seed)
    m = factory()
    m.fit(_take(data, idx[tr]), y[idx[tr]], _take(data, idx[va]), y[idx[va]])
    return m


def nested_cv(candidates: list[Candidate], data, y, plan: SplitPlan,
              on_fold: Callable[[OuterResult], None] | None = None) -> CVResult:
    """Outer stratified folds for testing; inner stratified folds pick the
    candidate with the best mean validation AUPRC, which is refit on the outer
    training part and scored on the outer test fold."""
    plan.validate()
    y = np.asarray(y)
    if plan.mode == "nested":
        outer = stratified_folds(y, plan.outer_folds, plan.seed)
    else:
        dev, hold = stratified_split(y, plan.dev_fraction, plan.seed)
        outer = [(dev, hold)]
    folds = []
    for f, (tr, te) in enumerate(outer):
        winner, scores, touched = select(candidates, data, y, tr, plan.inner_folds, plan.seed + 17 * f)
        factory = dict(candidates)[winner]
        model = refit(factory, data, y, tr, plan.seed + f)
        res = OuterResult(f, tr, te, touched, scores, winner, model,
                          model.predict_proba(_take(data, te)))
        if np.intersect1d(res.inner_idx, te).size:
            raise RuntimeError("outer test indices leaked into model selection")
        folds.append(res)
        if on_fold:
            on_fold(res)
    order = np.concatenate([r.test_idx for r in folds])
    probs = np.concatenate([r.test_probs for r in folds])
    return CVResult(folds, probs, y[order], order, [r.winner for r in folds])

"""Stratified splitting and fold assignment."""
from __future__ import annotations

import numpy as np


class SplitError(ValueError):
    pass


def _class_indices(labels) -> list[np.ndarray]:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise SplitError(f"labels must be 1-D, got shape {y.shape}")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SplitError("stratified split needs both classes present")
    groups = [np.flatnonzero(y == c) for c in classes]
    small = [int(c) for c, g in zip(classes, groups) if len(g) < 2]
    if small:
        raise SplitError(f"class(es) {small} have fewer than 2 members")
    return groups


def largest_remainder(quotas) -> np.ndarray:
    """Round non-negative quotas to integers preserving their rounded total."""
    q = np.asarray(quotas, dtype=float)
    base = np.floor(q + 1e-9).astype(int)
    short = int(np.floor(q.sum() + 0.5 + 1e-9)) - base.sum()
    order = np.lexsort((np.arange(len(q)), -(q - base)))
    base[order[:short]] += 1
    return base


def stratified_split(labels, fraction: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (dev, holdout) with ``fraction`` of each class in dev.

    Per-class dev counts come from largest-remainder rounding of
    ``fraction * n_class`` so the dev total is ``round(fraction * n)``.
    """
    if not 0.0 < fraction < 1.0:
        raise SplitError(f"dev fraction must lie strictly between 0 and 1, got {fraction}")
    groups = _class_indices(labels)
    rng = np.random.default_rng(seed)
    counts = largest_remainder([fraction * len(g) for g in groups])
    dev, hold = [], []
    for g, c in zip(groups, counts):
        c = min(max(int(c), 1), len(g) - 1)
        perm = rng.permutation(g)
        dev.append(perm[:c])
        hold.append(perm[c:])
    return np.sort(np.concatenate(dev)), np.sort(np.concatenate(hold))


def stratified_folds(labels, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """``k`` stratified (train, test) pairs whose test parts partition the indices."""
    if k < 2:
        raise SplitError(f"need at least 2 folds, got {k}")
    groups = _class_indices(labels)
    if any(len(g) < k for g in groups):
        raise SplitError(f"a class has fewer than {k} members")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(sum(len(g) for g in groups), dtype=np.int64)
    offset = 0
    for g in groups:
        perm = rng.permutation(g)
        # rotate the starting fold so that remainders spread across folds
        for j, part in enumerate(np.array_split(perm, k)):
            fold_of[part] = (j + offset) % k
        offset += len(g) % k
    all_idx = np.arange(len(fold_of))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]

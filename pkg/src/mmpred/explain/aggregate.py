"""Aggregation of attributions and the perturbation faithfulness harness."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .serialize import MODALITY_ORDER, serialize
from .shapley import Attribution, CoalitionGame, kernel_shap

STRATEGIES = ("high_to_low", "low_to_high", "random")


@dataclass
class ModalityRelevance:
    modalities: tuple[str, ...]
    per_patient: np.ndarray  # [n, 4], rows sum to 1
    global_share: np.ndarray  # [4]

    def as_dict(self) -> dict[str, float]:
        return {m: float(v) for m, v in zip(self.modalities, self.global_share)}


def modality_relevance(attributions: list[Attribution], modalities=MODALITY_ORDER) -> ModalityRelevance:
    """Share of absolute attribution per modality, per patient and cohort-averaged."""
    rows = []
    for a in attributions:
        mag = np.abs(a.values)
        shares = np.array([mag[a.layout.modality_mask(m)].sum() for m in modalities])
        total = shares.sum()
        if total > 0:
            rows.append(shares / total)
        else:
            warnings.warn("all-zero attribution vector; using uniform modality shares", RuntimeWarning)
            rows.append(np.full(len(modalities), 1.0 / len(modalities)))
    per = np.array(rows).reshape(len(rows), len(modalities))
    return ModalityRelevance(tuple(modalities), per, per.mean(axis=0) if len(per) else per.sum(axis=0))


def top_percentile_local(attributions: list[Attribution], pct: float = 0.1, vocab=None) -> list[list[tuple]]:
    """Per patient, the features whose |phi| reaches the (100 - pct) percentile.

    Ties at the cutoff are all included. Each entry is (feature index, name, phi).
    """
    if not 0 < pct < 100:
        raise ValueError("pct must lie in (0, 100)")
    out = []
    for a in attributions:
        v = a.values
        if len(v) == 0:
            out.append([])
            continue
        mag = np.abs(v)
        cut = np.percentile(mag, 100 - pct)
        names = a.layout.feature_names(vocab, a.features)
        sel = np.nonzero(mag >= cut)[0]
        sel = sel[np.argsort(-mag[sel], kind="stable")]
        out.append([(int(i), names[i], float(v[i])) for i in sel])
    return out


@dataclass
class FaithfulnessCurve:
    strategy: str
    x: np.ndarray
    y: np.ndarray

    def drop_area(self) -> float:
        """Area between the unperturbed output and the curve."""
        return float(np.trapezoid(self.y[0] - self.y, self.x))

    def crossing(self, level: float = 0.5) -> float:
        """First masked fraction at which the curve falls below ``level``
        (linear interpolation); inf if it never does."""
        if self.y[0] < level:
            return 0.0
        below = np.nonzero(self.y < level)[0]
        if not len(below):
            return np.inf
        j = below[0]
        x0, x1, y0, y1 = self.x[j - 1], self.x[j], self.y[j - 1], self.y[j]
        return float(x0 + (y0 - level) / (y0 - y1) * (x1 - x0))


def _order(a: Attribution, strategy: str, rng) -> np.ndarray:
    # importance is the attribution towards the sample's predicted class
    score = a.values * (1.0 if a.fx >= 0.5 else -1.0)
    if strategy == "high_to_low":
        return np.argsort(-score, kind="stable")
    if strategy == "low_to_high":
        return np.argsort(score, kind="stable")
    if strategy == "random":
        return rng.permutation(len(score))
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def perturbation_curve(model, samples, attributions: list[Attribution], strategy: str,
                       grid=None, seed: int = 0, max_tokens: int = 512) -> FaithfulnessCurve:
    """Mean model output as a growing share of features is replaced by the
    modality imputation symbols, in the order given by ``strategy``."""
    x = np.linspace(0.0, 1.0, 21) if grid is None else np.asarray(grid, dtype=float)
    if x[0] != 0 or x[-1] != 1 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must increase strictly from 0 to 1")
    rng = np.random.default_rng(seed)
    ys = []
    for s, a in zip(samples, attributions):
        ser = s if hasattr(s, "layout") else serialize(s)
        game = CoalitionGame(model, ser, None, max_tokens)
        n = ser.layout.n_features
        order = _order(a, strategy, rng)
        keep = np.ones((len(x), n), dtype=bool)
        for r, f in enumerate(x):
            keep[r, order[: int(np.rint(f * n))]] = False
        ys.append(game(keep))
    return FaithfulnessCurve(strategy, x, np.mean(ys, axis=0))


def faithfulness_curves(model, samples, attributions, grid=None, seed: int = 0,
                        max_tokens: int = 512) -> dict[str, FaithfulnessCurve]:
    return {s: perturbation_curve(model, samples, attributions, s, grid, seed, max_tokens)
            for s in STRATEGIES}


def explain_dataset(model, data, indices=None, n_coalitions: int | None = None, seed: int = 0,
                    groups=None, background=None) -> tuple[list, list[Attribution]]:
    """KernelSHAP for selected rows of an EncodedDataset; returns (serialized, attributions)."""
    idx = range(len(data)) if indices is None else indices
    sers, atts = [], []
    for k, i in enumerate(idx):
        ser = serialize(data.sample(int(i)))
        sers.append(ser)
        atts.append(kernel_shap(model, ser, background, n_coalitions, seed + k, groups, data.max_tokens))
    return sers, atts


def _fmt(v: float) -> str:
    return format(float(v), ".10g")


def write_attributions_csv(path, attributions: list[Attribution], patient_ids) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient", "modality", "channel", "position", "phi"])
        for pid, a in zip(patient_ids, attributions):
            for (m, ch, pos), v in zip(a.layout.coords, a.values):
                w.writerow([pid, m, ch, pos, _fmt(v)])


def write_relevance_csv(path, rel: ModalityRelevance, patient_ids) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient", *rel.modalities])
        w.writerow(["global", *map(_fmt, rel.global_share)])
        for pid, row in zip(patient_ids, rel.per_patient):
            w.writerow([pid, *map(_fmt, row)])


def write_curves_csv(path, curves: dict[str, FaithfulnessCurve]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "fraction_masked", "mean_output"])
        for name, c in curves.items():
            for xi, yi in zip(c.x, c.y):
                w.writerow([name, _fmt(xi), _fmt(yi)])

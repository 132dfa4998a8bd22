"""Shapley attributions over serialized multimodal samples.

A player is a group of serialized features (one feature per group by
default). The value of a coalition is the model output when every feature
outside the coalition is replaced by its background value; the default
background is the per-modality imputation symbol, so the base value is the
output on the fully masked sample.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..preprocess.encode import token_stream
from ..preprocess.tokenizer import PAD_ID
from .serialize import Layout, SerializedSample

MAX_EXACT_PLAYERS = 15
DEFAULT_MAX_COALITIONS = 2048
RIDGE = 1e-9


class ShapleyError(ValueError):
    pass


def _predictor(model):
    if hasattr(model, "predict_proba"):
        return model.predict_proba
    if callable(model):
        return model
    raise TypeError("model must be callable or expose predict_proba")


class CoalitionGame:
    """Evaluates the model on masked copies of one serialized sample.

    Parameters
    ----------
    model : object with ``predict_proba(inputs)`` or a callable on the
        modality dict {"static": [n, d], "labs": [n, C, T], "meds": [n, G, T],
        "text": [n, L]}.
    ser : SerializedSample
    background : None, [n_features] or [B, n_features] replacement values.
        With several rows the coalition value is the mean over rows.
    max_tokens : the text stream keeps the newest ``max_tokens`` tokens, as in
        ``EncodedDataset.inputs``; tokens cut off never reach the model.
    """

    def __init__(self, model, ser: SerializedSample, background=None, max_tokens: int = 512,
                 chunk: int = 512):
        self.predict = _predictor(model)
        self.ser, self.layout = ser, ser.layout
        lay = self.layout
        self.x = ser.features
        bg = lay.imputation_vector() if background is None else np.asarray(background, dtype=np.float64)
        self.background = np.atleast_2d(bg)
        if self.background.shape[1] != lay.n_features:
            raise ShapleyError(f"background has {self.background.shape[1]} features, sample has {lay.n_features}")
        self.chunk = chunk
        self.n_calls = 0

        # model-input row of the unmasked sample and, per feature, its flat slot
        notes, off = [], lay.n_static + lay.n_lab * lay.lab_months + lay.n_med * lay.med_months
        for n in lay.note_lengths:
            notes.append([int(t) for t in self.x[off : off + n]])
            off += n
        stream = token_stream(notes, max_tokens)
        full_len = sum(lay.note_lengths) + max(len(notes) - 1, 0)
        drop = full_len - len(stream)
        self.base = {
            "static": self.x[: lay.n_static].copy(),
            "labs": np.zeros(lay.n_lab * lay.lab_months),
            "meds": np.zeros(lay.n_med * lay.med_months),
            "text": np.array(stream if stream else [PAD_ID], dtype=np.float64),
        }
        slot = np.empty(lay.n_features, dtype=np.int64)
        note_start, pos = [], 0
        for n in lay.note_lengths:
            note_start.append(pos)
            pos += n + 1
        for i, (m, ch, p) in enumerate(lay.coords):
            if m == "static":
                slot[i] = ch
            elif m == "labs":
                slot[i] = ch * lay.lab_months + p
            elif m == "meds":
                slot[i] = ch * lay.med_months + p
            else:
                s = note_start[ch] + p - drop
                slot[i] = s if s >= 0 else -1
            if m in ("labs", "meds") and slot[i] >= 0:
                self.base[m][slot[i]] = self.x[i]
        self.slot = slot
        self.index = {m: np.nonzero((lay.feature_modality == m) & (slot >= 0))[0] for m in lay.order}

    def inputs(self, keep: np.ndarray) -> dict[str, np.ndarray]:
        """Model inputs for boolean keep-masks [K, n_features] crossed with the background rows."""
        keep = np.atleast_2d(keep)
        K, B = len(keep), len(self.background)
        lay = self.layout
        out = {}
        for m, base in self.base.items():
            rows = np.tile(base, (K * B, 1))
            idx = self.index[m]
            if len(idx):
                kept = np.repeat(keep[:, idx], B, axis=0)
                bg = np.tile(self.background[:, idx], (K, 1))
                rows[:, self.slot[idx]] = np.where(kept, self.x[idx], bg)
            out[m] = rows
        out["labs"] = out["labs"].reshape(K * B, lay.n_lab, lay.lab_months)
        out["meds"] = out["meds"].reshape(K * B, lay.n_med, lay.med_months)
        out["text"] = out["text"].astype(np.int64)
        return out

    def __call__(self, keep: np.ndarray) -> np.ndarray:
        keep = np.atleast_2d(np.asarray(keep, dtype=bool))
        vals = []
        step = max(1, self.chunk // len(self.background))
        for s in range(0, len(keep), step):
            block = keep[s : s + step]
            p = np.asarray(self.predict(self.inputs(block)), dtype=np.float64)
            self.n_calls += len(p)
            vals.append(p.reshape(len(block), len(self.background)).mean(axis=1))
        return np.concatenate(vals)

    def masked_vector(self, keep) -> np.ndarray:
        """Serialized vector of one coalition (sentinels untouched)."""
        vec = self.ser.vector.copy()
        keep = np.asarray(keep, dtype=bool)
        vec[self.layout.feature_positions] = np.where(keep, self.x, self.background.mean(axis=0))
        return vec


def feature_groups(layout: Layout, mode: str = "feature") -> list[np.ndarray]:
    """Player definitions: one per feature, or one per non-empty modality."""
    if mode == "feature":
        return [np.array([i]) for i in range(layout.n_features)]
    if mode == "modality":
        return [np.nonzero(layout.modality_mask(m))[0] for m in layout.order
                if layout.modality_mask(m).any()]
    raise ValueError(f"unknown grouping {mode!r}")


@dataclass
class Attribution:
    """Shapley values of one sample.

    ``phi`` holds one value per player; ``values`` spreads each player's
    value evenly over its features, giving a vector aligned to the
    non-sentinel positions of the layout.
    """

    phi: np.ndarray
    groups: list
    base_value: float
    fx: float
    layout: Layout
    features: np.ndarray = field(default=None, repr=False)
    n_evaluations: int = 0

    @property
    def values(self) -> np.ndarray:
        out = np.zeros(self.layout.n_features)
        for g, v in zip(self.groups, self.phi):
            if len(g):
                out[np.asarray(g)] += v / len(g)
        return out

    @property
    def modality_names(self):
        return self.layout.feature_modality


def _resolve_groups(layout, groups):
    if groups is None:
        groups = "feature"
    if isinstance(groups, str):
        return feature_groups(layout, groups)
    return [np.asarray(g, dtype=np.int64) for g in groups]


def _player_masks(Z: np.ndarray, groups, n_features: int) -> np.ndarray:
    """Coalitions over players [K, M] -> feature keep-masks [K, n_features]."""
    G = np.zeros((len(groups), n_features), dtype=bool)
    for j, g in enumerate(groups):
        G[j, g] = True
    return (Z.astype(np.int64) @ G.astype(np.int64)) > 0


def exact_shapley(model, ser: SerializedSample, background=None, groups=None,
                  max_tokens: int = 512) -> Attribution:
    """Shapley values by full enumeration of the 2^M coalitions (M <= 15)."""
    groups = _resolve_groups(ser.layout, groups)
    M = len(groups)
    if M > MAX_EXACT_PLAYERS:
        raise ShapleyError(f"exact enumeration refused for {M} players (limit {MAX_EXACT_PLAYERS})")
    game = CoalitionGame(model, ser, background, max_tokens)
    codes = np.arange(2 ** M)
    Z = ((codes[:, None] >> np.arange(M)) & 1).astype(bool)
    v = game(_player_masks(Z, groups, ser.layout.n_features))
    size = Z.sum(axis=1)
    fact = [math.factorial(k) for k in range(M + 1)]
    phi = np.zeros(M)
    for i in range(M):
        without = codes[~Z[:, i]]
        s = size[without]
        w = np.array([fact[k] * fact[M - k - 1] for k in s], dtype=float) / fact[M]
        phi[i] = np.sum(w * (v[without | (1 << i)] - v[without]))
    return Attribution(phi, groups, float(v[0]), float(v[-1]), ser.layout, ser.features, len(v))


def shapley_kernel_weight(M: int, z: int) -> float:
    """(M-1) / (C(M,z) z (M-z)); infinite for the empty and full coalitions."""
    if z == 0 or z == M:
        return np.inf
    return (M - 1) / (math.comb(M, z) * z * (M - z))


def sample_coalitions(M: int, n_coalitions: int, rng: np.random.Generator):
    """Coalitions (excluding empty/full) and their regression weights.

    Size layers z and M-z are enumerated completely, smallest first, as long
    as the budget share implied by their kernel mass covers them; the
    remaining mass is spread over paired samples (a coalition and its
    complement) drawn from the remaining sizes.
    Returns (Z [K, M] bool, weights [K], complete: bool).
    """
    budget = n_coalitions - 2
    rows, weights = [], []
    half = list(range(1, M // 2 + 1))

    def layer_mass(z):
        # kernel mass of size z plus its mirror M-z
        return (M - 1) / (z * (M - z)) * (1 if z == M - z else 2)

    left = sum(layer_mass(z) for z in half)
    remaining = []
    for z in half:
        sizes = (z,) if z == M - z else (z, M - z)
        count = sum(math.comb(M, s) for s in sizes)
        if not remaining and count <= budget * layer_mass(z) / left + 1e-9:
            for s in sizes:
                w = shapley_kernel_weight(M, s)
                for combo in _combinations(M, s):
                    rows.append(combo)
                    weights.append(w)
            budget -= count
            left -= layer_mass(z)
        else:
            remaining.append(z)
    if not remaining:
        return np.array(rows, dtype=bool).reshape(-1, M), np.array(weights), True
    mass = np.array([layer_mass(z) for z in remaining])
    counts: dict[bytes, list] = {}
    n_draw = max(budget, 2)
    drawn = 0
    while drawn < n_draw:
        z = remaining[rng.choice(len(remaining), p=mass / mass.sum())]
        mask = np.zeros(M, dtype=bool)
        mask[rng.choice(M, z, replace=False)] = True
        for m in (mask, ~mask):
            key = m.tobytes()
            if key in counts:
                counts[key][1] += 1
            else:
                counts[key] = [m, 1]
            drawn += 1
    total = sum(c for _, c in counts.values())
    for m, c in counts.values():
        rows.append(m)
        weights.append(mass.sum() * c / total)
    return np.array(rows, dtype=bool), np.array(weights), False


def _combinations(M: int, s: int):
    for c in itertools.combinations(range(M), s):
        m = np.zeros(M, dtype=bool)
        m[list(c)] = True
        yield m


def solve_kernel_wls(Z: np.ndarray, w: np.ndarray, y: np.ndarray, total: float) -> np.ndarray:
    """Weighted least squares for phi with sum(phi) == total imposed exactly.

    The last player is eliminated (phi_M = total - sum of the others), which is
    the limit of giving the empty and full coalitions unbounded weight.
    """
    M = Z.shape[1]
    if M == 1:
        return np.array([total])
    Zf = Z.astype(float)
    A = Zf[:, :-1] - Zf[:, -1:]
    b = y - Zf[:, -1] * total
    AtW = A.T * w
    H = AtW @ A
    g = AtW @ b
    if np.linalg.matrix_rank(H) < M - 1:
        warnings.warn("singular kernel regression; falling back to a small ridge", RuntimeWarning)
        H = H + RIDGE * np.eye(M - 1)
    head = np.linalg.solve(H, g)
    return np.append(head, total - head.sum())


def default_budget(M: int) -> int:
    """min(2^M, 2048), raised to 2M + 2 when M is too large for 2048 to
    leave a paired sample per player."""
    budget = max(DEFAULT_MAX_COALITIONS, 2 * M + 2)
    return min(2 ** M, budget) if M < 63 else budget


def kernel_shap(model, ser: SerializedSample, background=None, n_coalitions: int | None = None,
                seed: int = 0, groups=None, max_tokens: int = 512) -> Attribution:
    """Kernel-weighted regression estimate of Shapley values.

    ``n_coalitions`` counts the empty and full coalitions; see
    ``default_budget`` for the default. When the budget covers all 2^M coalitions the result is
    exact up to round-off.
    """
    groups = _resolve_groups(ser.layout, groups)
    M = len(groups)
    if n_coalitions is None:
        n_coalitions = default_budget(M)
    if n_coalitions < M + 2:
        raise ShapleyError(f"n_coalitions={n_coalitions} below M+2={M + 2}")
    game = CoalitionGame(model, ser, background, max_tokens)
    nf = ser.layout.n_features
    ends = game(_player_masks(np.array([np.zeros(M, bool), np.ones(M, bool)]), groups, nf))
    base, fx = float(ends[0]), float(ends[1])
    if M == 0:
        return Attribution(np.zeros(0), groups, base, fx, ser.layout, ser.features, 2)
    Z, w, _ = sample_coalitions(M, n_coalitions, np.random.default_rng(seed))
    y = game(_player_masks(Z, groups, nf)) - base
    phi = solve_kernel_wls(Z, w, y, fx - base)
    return Attribution(phi, groups, base, fx, ser.layout, ser.features, len(Z) + 2)

"""Deep unimodal classifiers built on numcore: MLP (static), GRU (labs/meds), text encoder."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import numcore as nc
from ..evaluation.metrics import auprc
from ..evaluation.splits import stratified_split
from ..preprocess.tokenizer import MASK_ID, PAD_ID, SEP_ID
from .base import Classifier, FitError

TRAIN_KEYS = ("lr", "batch_size", "max_epochs", "patience", "val_fraction")


class TrainingError(RuntimeError):
    """Raised when the loss diverges; ``state`` holds the last good weights."""

    def __init__(self, msg: str, state: dict | None = None):
        super().__init__(msg)
        self.state = state


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 20
    val_fraction: float = 0.2

    @classmethod
    def from_hp(cls, hp: dict) -> "TrainConfig":
        cfg = cls(**{k: hp[k] for k in TRAIN_KEYS if k in hp})
        if cfg.batch_size < 2 or cfg.max_epochs < 1 or cfg.patience < 1 or cfg.lr <= 0:
            raise ValueError(f"invalid training config {cfg}")
        return cfg


def take(X, idx):
    if isinstance(X, dict):
        return {k: v[idx] for k, v in X.items()}
    return X[idx]


def n_rows(X) -> int:
    return len(next(iter(X.values()))) if isinstance(X, dict) else len(X)


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    # batch statistics need two rows; fold a trailing singleton into its neighbour
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def predict_logits(net: nc.Module, forward, X, batch_size: int = 64) -> np.ndarray:
    was_training = net.training
    net.eval()
    out = []
    with nc.no_grad():
        for i in range(0, n_rows(X), batch_size):
            out.append(forward(take(X, slice(i, i + batch_size))).data.reshape(-1))
    net.train(was_training)
    return np.concatenate(out) if out else np.zeros(0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _val_score(net, forward, X_val, y_val) -> tuple[float, float]:
    z = predict_logits(net, forward, X_val)
    y = np.asarray(y_val, dtype=float)
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    return auprc(_sigmoid(z), y), -loss


def train_loop(net: nc.Module, forward, params: list, X, y, X_val, y_val, cfg: TrainConfig,
               seed: int = 0, keep_initial: bool = False) -> dict:
    """Adam on BCE with early stopping on validation AUPRC; the best state is restored.

    Ties in validation AUPRC (common once it saturates on small sets) are
    broken by lower validation loss.

    ``forward(batch) -> logits`` closes over ``net``. Only ``params`` are
    updated, so callers freeze tensors simply by leaving them out. With
    ``keep_initial`` the starting weights compete as a candidate, so the
    result never scores below them on validation.
    """
    rng = np.random.default_rng(seed)
    opt = nc.Adam(params, lr=cfg.lr)
    y = np.asarray(y, dtype=float)
    best, best_state, wait = (-np.inf, -np.inf), net.state_dict(), 0
    history = {"loss": [], "val_auprc": [], "best_epoch": 0}
    if keep_initial:
        best = _val_score(net, forward, X_val, y_val)
        history["best_epoch"] = -1
    for epoch in range(cfg.max_epochs):
        net.train()
        total = 0.0
        for idx in minibatches(len(y), cfg.batch_size, rng):
            opt.zero_grad()
            loss = nc.bce_with_logits(forward(take(X, idx)).reshape(-1), y[idx])
            if not np.isfinite(loss.data):
                net.load_state_dict(best_state)
                raise TrainingError(f"loss diverged at epoch {epoch}", best_state)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history["loss"].append(total / len(y))
        score = _val_score(net, forward, X_val, y_val)
        history["val_auprc"].append(score[0])
        if score > best:
            best, best_state, wait = score, net.state_dict(), 0
            history["best_epoch"] = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    net.load_state_dict(best_state)
    net.eval()
    history["best_val_auprc"] = best[0]
    return history


def _standardizer(X: np.ndarray, axes) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=axes)
    sd = X.std(axis=axes)
    sd[sd < 1e-12] = 1.0
    return mu, sd


class MLPNet(nc.Module):
    """dense(h) -> ReLU -> batchnorm -> dropout -> dense(1); the encoder stops before the last dense."""

    def __init__(self, in_dim: int, hidden: int, dropout: float, seed: int):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.dense = nc.Dense(in_dim, hidden, rng)
        self.bn = nc.BatchNorm(hidden)
        self.drop = nc.Dropout(dropout, seed + 1)
        self.out = nc.Dense(hidden, 1, rng)
        self.latent_dim = hidden
        self.register_buffer("x_mean", np.zeros(in_dim))
        self.register_buffer("x_scale", np.ones(in_dim))

    def encode(self, x) -> nc.Tensor:
        x = nc.Tensor((np.asarray(x, dtype=float) - self.x_mean) / self.x_scale)
        return self.drop(self.bn(nc.relu(self.dense(x))))

    def forward(self, x) -> nc.Tensor:
        return self.out(self.encode(x))


class GRUNet(nc.Module):
    """GRU over months (input = channel vector at month t) -> last state -> batchnorm -> dropout -> dense(1)."""

    def __init__(self, channels: int, hidden: int, dropout: float, seed: int):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.gru = nc.GRU(channels, hidden, rng)
        self.bn = nc.BatchNorm(hidden)
        self.drop = nc.Dropout(dropout, seed + 1)
        self.out = nc.Dense(hidden, 1, rng)
        self.latent_dim = hidden
        self.register_buffer("x_mean", np.zeros(channels))
        self.register_buffer("x_scale", np.ones(channels))

    def encode(self, x) -> nc.Tensor:
        x = np.asarray(x, dtype=float)  # [B, C, T]
        x = (x - self.x_mean[:, None]) / self.x_scale[:, None]
        return self.drop(self.bn(self.gru(nc.Tensor(x.transpose(0, 2, 1)))))

    def forward(self, x) -> nc.Tensor:
        return self.out(self.encode(x))


class TextNet(nc.Module):
    """Token embedding + sinusoidal positions -> transformer blocks -> masked GRU over
    positions -> batchnorm -> dropout -> dense(1)."""

    def __init__(self, n_tokens: int, dim: int, n_heads: int, ff_dim: int, n_blocks: int,
                 hidden: int, dropout: float, seed: int, max_len: int = 512):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.embed = nc.Embedding(n_tokens, dim, rng)
        self.blocks = []
        for b in range(n_blocks):
            blk = nc.TransformerBlock(dim, n_heads, ff_dim, rng, dropout=0.0, seed=seed + 10 + b)
            setattr(self, f"block{b}", blk)
            self.blocks.append(blk)
        self.gru = nc.GRU(dim, hidden, rng)
        self.bn = nc.BatchNorm(hidden)
        self.drop = nc.Dropout(dropout, seed + 1)
        self.out = nc.Dense(hidden, 1, rng)
        self.mlm = nc.Dense(dim, n_tokens, rng)
        self.latent_dim = hidden
        self.max_len = max_len
        self.positions = nc.sinusoidal_positions(max_len, dim)
        self.register_buffer("prior", np.array([0.5]))

    def contextual(self, ids: np.ndarray) -> tuple[nc.Tensor, np.ndarray]:
        ids = np.asarray(ids, dtype=np.int64)
        pad = ids == PAD_ID
        # left-aligned streams: trailing all-PAD columns change nothing, so drop them
        width = max(1, int((~pad).any(axis=0).nonzero()[0].max() + 1) if (~pad).any() else 1)
        if width > self.max_len:
            raise FitError(f"token stream of length {width} exceeds max_len {self.max_len}")
        ids, pad = ids[:, :width], pad[:, :width]
        h = self.embed(ids) * math.sqrt(self.embed.dim) + self.positions[:width]
        for blk in self.blocks:
            h = blk(h, pad_mask=pad)
        return h, pad

    def encode(self, ids) -> nc.Tensor:
        h, pad = self.contextual(ids)
        states = nc.gru_sequence(h, self.gru.w_x, self.gru.w_h, self.gru.b_x, self.gru.b_h,
                                 mask=~pad)
        return self.drop(self.bn(states[:, -1, :]))

    def forward(self, ids) -> nc.Tensor:
        return self.out(self.encode(ids))


def _hidden_units(mult, base: int) -> int:
    if int(mult) != mult or mult < 1:
        raise ValueError(f"units_multiplier must be a positive integer, got {mult}")
    return int(mult) * base


def _check_dropout(rate):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout must lie in [0, 1), got {rate}")
    return float(rate)


class NeuralClassifier(Classifier):
    """Shared fit/predict for the deep classifiers; subclasses build ``self.net``."""

    def __init__(self, seed: int = 0, dropout: float = 0.2, units_multiplier: int = 1, **hp):
        super().__init__(seed, dropout=dropout, units_multiplier=units_multiplier, **hp)
        _check_dropout(dropout)
        _hidden_units(units_multiplier, 1)
        self.train_cfg = TrainConfig.from_hp(hp)
        self.net: nc.Module | None = None
        self.history: dict = {}

    def build(self, X: np.ndarray) -> nc.Module:
        raise NotImplementedError

    def prepare(self, X: np.ndarray, y: np.ndarray) -> None:
        """Hook run on training data after the net is built (standardizers, pretraining)."""

    def _forward(self, X):
        return self.net(X).reshape(-1)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = self._check_fit_input(X, y)
        if X_val is None:
            tr, va = stratified_split(y, 1.0 - self.train_cfg.val_fraction, seed=self.seed)
            X, X_val, y, y_val = X[tr], X[va], y[tr], y[va]
        else:
            X_val = self._check_predict_input(X_val)
            y_val = np.asarray(y_val)
        self.net = self.build(X)
        # start the output at the training log-odds so early epochs are calibrated
        prev = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
        self.net.out.bias.data[:] = np.log(prev / (1 - prev))
        self.prepare(X, y)
        self.history = train_loop(self.net, self._forward, self.net.parameters(), X, y,
                                  X_val, y_val, self.train_cfg, seed=self.seed)
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        return _sigmoid(predict_logits(self.net, self._forward, X))

    def encoder_latent_dim(self) -> int:
        return self.net.latent_dim


class MLPClassifier(NeuralClassifier):
    kind = "mlp"
    input_kind = "tabular"

    def build(self, X):
        d = X.shape[1]
        return MLPNet(d, _hidden_units(self.hp["units_multiplier"], d), self.hp["dropout"], self.seed)

    def prepare(self, X, y):
        self.net.x_mean, self.net.x_scale = _standardizer(X, 0)


class GRUClassifier(NeuralClassifier):
    kind = "gru_rnn"
    input_kind = "series"

    def build(self, X):
        c = X.shape[1]
        return GRUNet(c, _hidden_units(self.hp["units_multiplier"], c), self.hp["dropout"], self.seed)

    def prepare(self, X, y):
        self.net.x_mean, self.net.x_scale = _standardizer(X, (0, 2))


TEXT_DEFAULTS = {"dim": 64, "n_heads": 4, "ff_dim": 128, "n_blocks": 2, "max_len": 512,
                 "pretrain_epochs": 0, "mask_prob": 0.15}


class TextEncoderClassifier(NeuralClassifier):
    """Transformer encoder + GRU over token positions.

    ``n_tokens`` must be the tokenizer vocabulary size. With
    ``pretrain_epochs > 0`` a masked-token pass over the training streams
    precedes supervised fitting. All-PAD rows get the training prevalence.
    """

    kind = "text_encoder"
    input_kind = "tokens"

    def __init__(self, seed: int = 0, dropout: float = 0.2, units_multiplier: int = 1,
                 n_tokens: int | None = None, **hp):
        for k, v in TEXT_DEFAULTS.items():
            hp.setdefault(k, v)
        super().__init__(seed, dropout, units_multiplier, n_tokens=n_tokens, **hp)
        if hp["dim"] % hp["n_heads"]:
            raise ValueError(f"model dim {hp['dim']} is not divisible by {hp['n_heads']} heads")

    def build(self, X):
        hp = self.hp
        n_tokens = hp["n_tokens"] or int(X.max()) + 1
        if X.size and X.max() >= n_tokens:
            raise FitError(f"token id {int(X.max())} outside vocabulary of size {n_tokens}")
        self.hp["n_tokens"] = int(n_tokens)
        return TextNet(int(n_tokens), hp["dim"], hp["n_heads"], hp["ff_dim"], hp["n_blocks"],
                       _hidden_units(hp["units_multiplier"], hp["dim"]), hp["dropout"],
                       self.seed, hp["max_len"])

    def prepare(self, X, y):
        self.net.prior = np.array([float(np.mean(y))])
        if self.hp["pretrain_epochs"]:
            self.pretrain(X, self.hp["pretrain_epochs"])

    def pretrain(self, X: np.ndarray, epochs: int) -> list[float]:
        """Masked-token prediction over the given streams; returns per-epoch loss."""
        net = self.net
        rng = np.random.default_rng(self.seed + 7)
        params = [p for n, p in net.named_parameters() if n.startswith(("embed", "block", "mlm"))]
        opt = nc.Adam(params, lr=self.train_cfg.lr)
        losses = []
        net.train()
        for _ in range(epochs):
            total, count = 0.0, 0
            for idx in minibatches(len(X), self.train_cfg.batch_size, rng):
                ids = X[idx].copy()
                real = (ids != PAD_ID) & (ids != SEP_ID)
                chosen = real & (rng.random(ids.shape) < self.hp["mask_prob"])
                if not chosen.any():
                    continue
                targets = ids.copy()
                ids[chosen] = MASK_ID
                opt.zero_grad()
                h, _ = net.contextual(ids)
                w = h.shape[1]
                loss = nc.cross_entropy(net.mlm(h), targets[:, :w], mask=chosen[:, :w])
                loss.backward()
                opt.step()
                total += loss.item()
                count += 1
            losses.append(total / max(count, 1))
        return losses

    def _check_fit_input(self, X, y):
        X, y = super()._check_fit_input(X, y)
        if not np.issubdtype(np.asarray(X).dtype, np.integer):
            raise FitError("text_encoder expects an integer token matrix")
        return X, y

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(self._check_predict_input(X))
        p = _sigmoid(predict_logits(self.net, self._forward, X))
        empty = (X == PAD_ID).all(axis=1)
        p[empty] = self.net.prior[0]
        return p

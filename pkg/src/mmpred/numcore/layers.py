"""Layer kit built on :mod:`mmpred.numcore.tensor`."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor


class Module:
    """Container of named parameters, buffers and sub-modules.

    Attribute assignment registers ``Tensor`` parameters (``requires_grad``)
    and nested modules automatically; plain numpy arrays listed in
    ``_buffers`` are saved with the state but never trained.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = None
        object.__setattr__(self, name, np.asarray(value, dtype=np.float64))

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name in self._params:
            yield prefix + name, getattr(self, name)
        for mname, mod in self._modules.items():
            yield from mod.named_parameters(prefix + mname + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for mname, mod in self._modules.items():
            yield from mod.named_buffers(prefix + mname + ".")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"state is missing entries: {missing}")
        for name, p in self.named_parameters():
            if state[name].shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)
        for name, _ in self.named_buffers():
            owner, attr = self._resolve(name)
            object.__setattr__(owner, attr, np.array(state[name], dtype=np.float64))

    def _resolve(self, dotted: str):
        parts = dotted.split(".")
        owner = self
        for part in parts[:-1]:
            owner = owner._modules[part]
        return owner, parts[-1]

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for mod in self._modules.values():
            mod.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Dense(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"Dense needs positive dimensions, got {in_dim} -> {out_dim}")
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = glorot_uniform(rng, in_dim, out_dim)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"Dense expects last dim {self.in_dim}, got input {x.shape}")
        return x @ self.weight + self.bias


class BatchNorm(Module):
    """Batch normalization over the leading axis of a [B, D] input."""

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.dim, self.momentum, self.eps = dim, momentum, eps
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(dim))
        self.register_buffer("running_var", np.ones(dim))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"BatchNorm({self.dim}) got input {x.shape}")
        if self.training and x.shape[0] > 1:
            mu = x.mean(axis=0, keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=0, keepdims=True)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mu.data[0]
            self.running_var = m * self.running_var + (1 - m) * var.data[0]
            xhat = xc / T.sqrt(var + self.eps)
        else:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return xhat * self.gamma + self.beta


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.dim, self.eps = dim, eps
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gamma + self.beta


class Dropout(Module):
    """Inverted dropout with its own seeded generator."""

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.rng, self.training)


class Embedding(Module):
    def __init__(self, n_tokens: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.n_tokens, self.dim = n_tokens, dim
        self.weight = Tensor(rng.normal(0.0, 1.0 / math.sqrt(dim), (n_tokens, dim)), requires_grad=True)

    def forward(self, ids) -> Tensor:
        return T.embedding(self.weight, ids)


def gru_cell(x_t, h_prev, params: dict) -> Tensor:
    """One GRU step written with primitive ops (reference for the fused kernel).

    ``params`` holds ``w_x`` [D, 3H], ``w_h`` [H, 3H], ``b_x`` and ``b_h`` [3H]
    with gate order (reset, update, candidate).
    """
    x_t, h_prev = T.as_tensor(x_t), T.as_tensor(h_prev)
    w_x, w_h = params["w_x"], params["w_h"]
    H = w_h.shape[0]
    if x_t.shape[-1] != w_x.shape[0] or h_prev.shape[-1] != H:
        raise DimensionError(
            f"gru_cell: x {x_t.shape} / h {h_prev.shape} incompatible with w_x {w_x.shape}, w_h {w_h.shape}"
        )
    xp = x_t @ w_x + params["b_x"]
    hp = h_prev @ w_h + params["b_h"]
    r = T.sigmoid(xp[..., :H] + hp[..., :H])
    z = T.sigmoid(xp[..., H : 2 * H] + hp[..., H : 2 * H])
    n = T.tanh(xp[..., 2 * H :] + r * hp[..., 2 * H :])
    return (1.0 - z) * n + z * h_prev


class GRU(Module):
    """Single-layer GRU over [B, T, D] sequences."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        if hidden < 1:
            raise ValueError(f"GRU hidden size must be >= 1, got {hidden}")
        self.input_dim, self.hidden = input_dim, hidden
        s = 1.0 / math.sqrt(hidden)
        self.w_x = Tensor(rng.uniform(-s, s, (input_dim, 3 * hidden)), requires_grad=True)
        self.w_h = Tensor(rng.uniform(-s, s, (hidden, 3 * hidden)), requires_grad=True)
        self.b_x = Tensor(np.zeros(3 * hidden), requires_grad=True)
        self.b_h = Tensor(np.zeros(3 * hidden), requires_grad=True)

    def params(self) -> dict:
        return {"w_x": self.w_x, "w_h": self.w_h, "b_x": self.b_x, "b_h": self.b_h}

    def forward(self, x: Tensor, mask=None) -> Tensor:
        """Final hidden state [B, H]; masked steps keep the previous state."""
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise DimensionError(f"GRU expects [B, T, {self.input_dim}] input, got {x.shape}")
        states = T.gru_sequence(x, self.w_x, self.w_h, self.b_x, self.b_h, mask=mask)
        return states[:, -1, :]


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % n_heads:
            raise ValueError(f"model dim {dim} is not divisible by {n_heads} heads")
        self.dim, self.n_heads, self.head_dim = dim, n_heads, dim // n_heads
        self.wq = glorot_uniform(rng, dim, dim)
        self.wk = glorot_uniform(rng, dim, dim)
        self.wv = glorot_uniform(rng, dim, dim)
        self.wo = glorot_uniform(rng, dim, dim)
        self.bo = Tensor(np.zeros(dim), requires_grad=True)

    def _split(self, x: Tensor, B: int, L: int) -> Tensor:
        return x.reshape(B, L, self.n_heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor, pad_mask=None) -> Tensor:
        """``pad_mask`` [B, L] is true where the key position is padding."""
        B, L, _ = x.shape
        q = self._split(x @ self.wq, B, L)
        k = self._split(x @ self.wk, B, L)
        v = self._split(x @ self.wv, B, L)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.head_dim))
        if pad_mask is not None:
            scores = T.masked_fill(scores, np.asarray(pad_mask, bool)[:, None, None, :], -1e9)
        attn = T.softmax(scores, axis=-1)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, L, self.dim)
        return ctx @ self.wo + self.bo


class TransformerBlock(Module):
    """Post-norm encoder block: attention and feed-forward, each residual + LayerNorm."""

    def __init__(self, dim: int, n_heads: int, ff_dim: int, rng: np.random.Generator,
                 dropout: float = 0.0, seed: int = 0):
        super().__init__()
        self.attn = MultiHeadSelfAttention(dim, n_heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ff1 = Dense(dim, ff_dim, rng)
        self.ff2 = Dense(ff_dim, dim, rng)
        self.norm2 = LayerNorm(dim)
        self.drop = Dropout(dropout, seed)

    def forward(self, x: Tensor, pad_mask=None) -> Tensor:
        x = self.norm1(x + self.drop(self.attn(x, pad_mask)))
        return self.norm2(x + self.drop(self.ff2(T.relu(self.ff1(x)))))


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))

"""Minimal float64 autodiff core: tensors, layers, Adam, checkpoints."""
from .tensor import (
    DimensionError,
    Tensor,
    add,
    bce_with_logits,
    binary_cross_entropy,
    concat,
    cross_entropy,
    dropout,
    embedding,
    gru_sequence,
    log_softmax,
    masked_fill,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    stack,
    sum_,
    tanh,
)
from .layers import (
    GRU,
    BatchNorm,
    Dense,
    Dropout,
    Embedding,
    LayerNorm,
    Module,
    MultiHeadSelfAttention,
    TransformerBlock,
    gru_cell,
    sinusoidal_positions,
)
from .optim import Adam, AdamState, adam_step
from . import checkpoint

__all__ = [
    "Adam", "AdamState", "BatchNorm", "Dense", "DimensionError", "Dropout", "Embedding",
    "GRU", "LayerNorm", "Module", "MultiHeadSelfAttention", "Tensor", "TransformerBlock",
    "adam_step", "add", "bce_with_logits", "binary_cross_entropy", "checkpoint", "concat",
    "cross_entropy", "dropout", "embedding", "gru_cell", "gru_sequence", "log_softmax",
    "masked_fill", "matmul", "mean", "mul", "no_grad", "relu", "sigmoid",
    "sinusoidal_positions", "softmax", "stack", "sum_", "tanh",
]

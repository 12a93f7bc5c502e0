"""Neural building blocks: linear layers, sinusoidal positions, layer norm,
dropout, masked multi-head attention, and the transformer sublayer stacks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

_ACTIVATIONS = ("identity", "relu", "tanh")
MASK_FILL = -1e9  # large negative instead of -inf: keeps softmax NaN-free


class Linear:
    """y = activation(x @ W + b), applied position-wise on the last axis."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity",
                 *, rng: np.random.Generator, init_scale: float = 1.0):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        limit = init_scale * math.sqrt(6.0 / (in_dim + out_dim))
        self.weight = Tensor(rng.uniform(-limit, limit, (in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)
        self.activation = activation
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise T.ShapeError(
                f"linear: input last axis {x.shape} does not match in_dim {self.in_dim}"
            )
        y = T.matmul(x, self.weight) + self.bias
        if self.activation == "relu":
            y = T.relu(y)
        elif self.activation == "tanh":
            y = T.tanh(y)
        return y

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


class PositionalEncoding:
    """Precomputed sinusoid table: even columns sin(pos/10000^(2i/d)),
    odd columns cos of the same argument."""

    def __init__(self, max_len: int, d_model: int):
        if max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {max_len}")
        if d_model <= 0 or d_model % 2 != 0:
            raise ValueError(f"d_model must be a positive even number, got {d_model}")
        pos = np.arange(max_len, dtype=np.float64)[:, None]
        idx = np.arange(0, d_model, 2, dtype=np.float64)
        angles = pos / np.power(10000.0, idx / d_model)
        table = np.zeros((max_len, d_model), dtype=np.float64)
        table[:, 0::2] = np.sin(angles)
        table[:, 1::2] = np.cos(angles)
        self.max_len = max_len
        self.d_model = d_model
        self.table = Tensor(table)  # constant buffer, not a parameter

    def rows(self, n: int) -> Tensor:
        if n > self.max_len:
            raise T.ShapeError(f"positional encoding: {n} rows requested, table has {self.max_len}")
        return self.table[:n]


class LayerNorm:
    """Last-axis normalization followed by a learned affine rescale."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm_core(x, self.eps) * self.gamma + self.beta

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * Tensor(keep)


@dataclass
class AttentionMask:
    """Boolean [query_len x key_len] gate; True = attendable."""

    kind: str  # padding | causal | combined
    matrix: np.ndarray

    @staticmethod
    def causal(n: int) -> "AttentionMask":
        return AttentionMask("causal", np.tril(np.ones((n, n), dtype=bool)))

    @staticmethod
    def padding(query_len: int, key_keep: np.ndarray) -> "AttentionMask":
        """Columns for dropped (pad) keys are all False."""
        keep = np.asarray(key_keep, dtype=bool)
        return AttentionMask("padding", np.repeat(keep[None, :], query_len, axis=0))

    def combine(self, other: "AttentionMask") -> "AttentionMask":
        if self.matrix.shape != other.matrix.shape:
            raise T.ShapeError(
                f"mask combine: shapes {self.matrix.shape} vs {other.matrix.shape}"
            )
        return AttentionMask("combined", self.matrix & other.matrix)


class MultiHeadAttention:
    """Scaled dot-product attention over n_heads splits of d_model."""

    def __init__(self, d_model: int, n_heads: int, dropout_rate: float = 0.0,
                 *, rng: np.random.Generator):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.dropout_rate = dropout_rate
        self.wq = Linear(d_model, d_model, rng=rng)
        self.wk = Linear(d_model, d_model, rng=rng)
        self.wv = Linear(d_model, d_model, rng=rng)
        self.wo = Linear(d_model, d_model, rng=rng)

    def _split(self, x: Tensor, length: int) -> Tensor:
        # [L, d_model] -> [H, L, head_dim]
        return T.transpose(T.reshape(x, (length, self.n_heads, self.head_dim)), (1, 0, 2))

    def __call__(self, q: Tensor, k: Tensor, v: Tensor,
                 mask: AttentionMask | None = None,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        lq, lk = q.shape[0], k.shape[0]
        qh = self._split(self.wq(q), lq)
        kh = self._split(self.wk(k), lk)
        vh = self._split(self.wv(v), lk)
        scores = T.matmul(qh, T.transpose(kh, (0, 2, 1))) * (1.0 / math.sqrt(self.head_dim))
        if mask is not None:
            m = mask.matrix
            if m.shape != (lq, lk):
                raise T.ShapeError(f"attention: mask {m.shape} does not match ({lq}, {lk})")
            dead = ~m.any(axis=1)
            if dead.any():
                if T.debug_checks_enabled():
                    warnings.warn("attention: fully-masked query rows forced to attend position 0")
                m = m.copy()
                m[dead, 0] = True
            gate = Tensor(m.astype(scores.data.dtype))
            scores = scores * gate + Tensor((1.0 - m) * MASK_FILL)
        weights = T.softmax(scores)
        weights = dropout(weights, self.dropout_rate, training, rng)
        heads = T.matmul(weights, vh)  # [H, Lq, head_dim]
        merged = T.reshape(T.transpose(heads, (1, 0, 2)), (lq, self.d_model))
        return self.wo(merged)

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for tag, layer in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)):
            out.update(layer.named_parameters(f"{prefix}.{tag}"))
        return out


class FeedForward:
    """Position-wise two-layer MLP with relu."""

    def __init__(self, d_model: int, d_ff: int, dropout_rate: float = 0.0,
                 *, rng: np.random.Generator):
        self.lin1 = Linear(d_model, d_ff, activation="relu", rng=rng)
        self.lin2 = Linear(d_ff, d_model, rng=rng)
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        return self.lin2(dropout(self.lin1(x), self.dropout_rate, training, rng))

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.lin1.named_parameters(f"{prefix}.lin1"),
                **self.lin2.named_parameters(f"{prefix}.lin2")}


class EncoderLayer:
    """Self-attention + feed-forward, each wrapped in residual + layer norm."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, dropout_rate: float,
                 *, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout_rate, rng=rng)
        self.ffn = FeedForward(d_model, d_ff, dropout_rate, rng=rng)
        self.norm1 = LayerNorm(d_model)
        self.norm2 = LayerNorm(d_model)
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, mask: AttentionMask | None,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        a = self.self_attn(x, x, x, mask, training, rng)
        x = self.norm1(x + dropout(a, self.dropout_rate, training, rng))
        f = self.ffn(x, training, rng)
        return self.norm2(x + dropout(f, self.dropout_rate, training, rng))

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.self_attn.named_parameters(f"{prefix}.self_attn"),
                **self.ffn.named_parameters(f"{prefix}.ffn"),
                **self.norm1.named_parameters(f"{prefix}.norm1"),
                **self.norm2.named_parameters(f"{prefix}.norm2")}


class DecoderLayer:
    """Causal self-attention, cross-attention to encoder memory, feed-forward."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, dropout_rate: float,
                 *, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout_rate, rng=rng)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, dropout_rate, rng=rng)
        self.ffn = FeedForward(d_model, d_ff, dropout_rate, rng=rng)
        self.norm1 = LayerNorm(d_model)
        self.norm2 = LayerNorm(d_model)
        self.norm3 = LayerNorm(d_model)
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, memory: Tensor,
                 self_mask: AttentionMask | None, cross_mask: AttentionMask | None,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        a = self.self_attn(x, x, x, self_mask, training, rng)
        x = self.norm1(x + dropout(a, self.dropout_rate, training, rng))
        c = self.cross_attn(x, memory, memory, cross_mask, training, rng)
        x = self.norm2(x + dropout(c, self.dropout_rate, training, rng))
        f = self.ffn(x, training, rng)
        return self.norm3(x + dropout(f, self.dropout_rate, training, rng))

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.self_attn.named_parameters(f"{prefix}.self_attn"),
                **self.cross_attn.named_parameters(f"{prefix}.cross_attn"),
                **self.ffn.named_parameters(f"{prefix}.ffn"),
                **self.norm1.named_parameters(f"{prefix}.norm1"),
                **self.norm2.named_parameters(f"{prefix}.norm2"),
                **self.norm3.named_parameters(f"{prefix}.norm3")}

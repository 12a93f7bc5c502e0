"""Wasserstein critic: transformer encoder over a [BOS, question, SEP,
answer, EOS] pair with a linear scoring head and no squashing nonlinearity.
Generated answers may enter as probability rows, embedded as mixtures of
embedding rows so gradient reaches the generator."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import BOS, EOS, SEP, TokenSequence
from .generator import GumbelRollout
from .layers import AttentionMask, EncoderLayer, Linear, PositionalEncoding, dropout
from .tensor import Tensor

ROW_SUM_TOL = 1e-4


def _check_delimiter(tokens: np.ndarray, answer_start: int) -> None:
    """The question segment must end in exactly one SEP right before the
    answer segment. (A *generated* answer may emit SEP as an ordinary token.)"""
    if answer_start < 2 or answer_start > len(tokens):
        raise ValueError("malformed pair: answer segment out of range")
    head = tokens[:answer_start]
    if head[-1] != SEP or int((head == SEP).sum()) != 1:
        raise ValueError("malformed pair: expected exactly one SEP between question and answer")


@dataclass
class CriticConfig:
    vocab_size: int
    n_layers: int = 8
    n_heads: int = 16
    d_model: int = 64
    embed_dim: int = 768
    max_len: int = 30            # per side; pairs occupy up to 2 * max_len
    dropout: float = 0.5
    pooling: str = "mean"        # "mean" | "first"
    positional_combine: str = "add"
    ffn_dim: int | None = None

    def __post_init__(self):
        for name in ("vocab_size", "n_layers", "n_heads", "d_model", "embed_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.pooling not in ("mean", "first"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.positional_combine not in ("add", "concat"):
            raise ValueError(f"unknown positional_combine {self.positional_combine!r}")
        if self.positional_combine == "concat" and self.d_model % 4 != 0:
            raise ValueError("concat positional mode needs d_model divisible by 4")
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model

    @property
    def pair_capacity(self) -> int:
        return 2 * self.max_len


class PairInput:
    """One (question, answer) pair laid out as [BOS, q..., SEP, a..., EOS].

    `soft_rows`, when present, replaces the answer-segment lookups with
    row-stochastic mixtures over the vocabulary (the generator's gradient
    path). `attend` masks padding, and for generated answers everything
    from the first EOS onward.
    """

    def __init__(self, tokens: np.ndarray, attend: np.ndarray, answer_start: int,
                 source: str, soft_rows: Tensor | None = None):
        self.tokens = np.asarray(tokens, dtype=np.int64)
        self.attend = np.asarray(attend, dtype=bool)
        self.answer_start = int(answer_start)
        self.source = source
        self.soft_rows = soft_rows
        if self.tokens.shape != self.attend.shape:
            raise ValueError("tokens and attend must have matching shape")
        _check_delimiter(self.tokens, self.answer_start)
        if soft_rows is not None:
            if soft_rows.ndim != 2:
                raise ValueError("soft rows must be a 2-d tensor")
            if soft_rows.shape[0] != len(self.tokens) - self.answer_start:
                raise ValueError("soft rows must cover exactly the answer segment")
            sums = soft_rows.data.sum(axis=-1)
            if not np.allclose(sums, 1.0, atol=ROW_SUM_TOL):
                raise ValueError("soft rows must be row-stochastic")

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    @classmethod
    def from_real(cls, question: TokenSequence, answer: TokenSequence,
                  capacity: int) -> "PairInput":
        qp, ap = question.payload(), answer.payload()
        toks = [BOS] + qp + [SEP] + ap + [EOS]
        if len(toks) > capacity:
            raise ValueError(f"pair length {len(toks)} exceeds capacity {capacity}")
        return cls(np.array(toks, dtype=np.int64), np.ones(len(toks), dtype=bool),
                   answer_start=len(qp) + 2, source="real")

    @classmethod
    def from_generated(cls, question: TokenSequence, rollout: GumbelRollout,
                       capacity: int, rows: str = "straight_through") -> "PairInput":
        """Question prefix + all rollout rows; EOS and later rows masked out."""
        if rows not in ("straight_through", "soft", "hard"):
            raise ValueError(f"unknown rows mode {rows!r}")
        qp = question.payload()
        gen = rollout.hard.ids
        toks = np.concatenate([np.array([BOS] + qp + [SEP], dtype=np.int64), gen])
        if len(toks) > capacity:
            raise ValueError(f"pair length {len(toks)} exceeds capacity {capacity}")
        start = len(qp) + 2
        attend = np.ones(len(toks), dtype=bool)
        eos_hits = np.flatnonzero(gen == EOS)
        if eos_hits.size:
            attend[start + int(eos_hits[0]):] = False
        soft = None
        if rows == "straight_through":
            soft = rollout.straight_through
        elif rows == "soft":
            soft = rollout.soft
        return cls(toks, attend, answer_start=start, source="generated", soft_rows=soft)


class CriticModel:
    """Encoder + pooled linear head producing one unbounded scalar per pair."""

    def __init__(self, config: CriticConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        pos_width = c.d_model if c.positional_combine == "add" else c.d_model // 2
        self.token_embedding = Tensor(
            rng.normal(0.0, 0.02, (c.vocab_size, c.embed_dim)), requires_grad=True
        )
        self.projection = Linear(c.embed_dim, pos_width, rng=rng)
        self.positional = PositionalEncoding(c.pair_capacity, pos_width)
        self.encoder_layers = [
            EncoderLayer(c.d_model, c.n_heads, c.ffn_dim, c.dropout, rng=rng)
            for _ in range(c.n_layers)
        ]
        self.score_head = Linear(c.d_model, 1, rng=rng)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"token_embedding": self.token_embedding}
        out.update(self.projection.named_parameters("projection"))
        for i, layer in enumerate(self.encoder_layers):
            out.update(layer.named_parameters(f"encoder.{i}"))
        out.update(self.score_head.named_parameters("score_head"))
        return out

    @contextlib.contextmanager
    def frozen(self):
        """Exclude critic parameters from gradient flow while active."""
        params = self.named_parameters()
        saved = {n: t.requires_grad for n, t in params.items()}
        for t in params.values():
            t.requires_grad = False
        try:
            yield
        finally:
            for n, t in params.items():
                t.requires_grad = saved[n]

    def _embed_pair(self, pair: PairInput) -> Tensor:
        if pair.soft_rows is None:
            emb = T.embedding_lookup(self.token_embedding, pair.tokens)
        else:
            prefix = T.embedding_lookup(self.token_embedding, pair.tokens[: pair.answer_start])
            mixed = T.matmul(pair.soft_rows, self.token_embedding)
            emb = T.concat([prefix, mixed], axis=0)
        return emb

    def score(self, pair: PairInput, training: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
        """Unbounded scalar realness score for one pair."""
        c = self.config
        if len(pair) > c.pair_capacity:
            raise T.ShapeError(f"pair length {len(pair)} exceeds capacity {c.pair_capacity}")
        _check_delimiter(pair.tokens, pair.answer_start)
        x = self.projection(self._embed_pair(pair))
        pe = self.positional.rows(len(pair))
        if c.positional_combine == "add":
            x = x + pe
        else:
            x = T.concat([x, pe], axis=1)
        x = dropout(x, c.dropout, training, rng)
        mask = AttentionMask.padding(len(pair), pair.attend)
        for layer in self.encoder_layers:
            x = layer(x, mask, training, rng)
        if c.pooling == "first":
            pooled = x[0:1]
        else:
            w = pair.attend.astype(x.data.dtype) / max(int(pair.attend.sum()), 1)
            pooled = T.matmul(Tensor(w.reshape(1, -1)), x)
        return T.reshape(self.score_head(pooled), ())


def _mean_score(model: CriticModel, pairs: list[PairInput], training: bool,
                rng) -> Tensor:
    total = model.score(pairs[0], training, rng)
    for p in pairs[1:]:
        total = total + model.score(p, training, rng)
    return total * (1.0 / len(pairs))


def critic_loss(model: CriticModel, real: list[PairInput], fake: list[PairInput],
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """mean(score(fake)) - mean(score(real)); minimizing widens the margin."""
    if not real or not fake:
        raise ValueError("critic_loss: empty batch")
    if len(real) != len(fake):
        raise ValueError(f"critic_loss: batch sizes differ ({len(real)} vs {len(fake)})")
    return _mean_score(model, fake, training, rng) - _mean_score(model, real, training, rng)


def generator_adv_loss(model: CriticModel, fake: list[PairInput],
                       training: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
    """-mean(score(fake)) with the critic frozen; requires soft rows so the
    gradient path to the generator is never silently cut."""
    if not fake:
        raise ValueError("generator_adv_loss: empty batch")
    missing = [i for i, p in enumerate(fake) if p.soft_rows is None]
    if missing:
        raise ValueError(f"generator_adv_loss: pairs {missing} are missing soft rows")
    with model.frozen():
        return _mean_score(model, fake, training, rng) * -1.0


def clip_weights(model: CriticModel, c: float) -> None:
    """Clamp every critic parameter into [-c, c]."""
    if c <= 0:
        raise ValueError(f"clip constant must be positive, got {c}")
    for t in model.named_parameters().values():
        np.clip(t.data, -c, c, out=t.data)


def reference_gan_losses(real_scores: np.ndarray, fake_scores: np.ndarray) -> tuple[float, float]:
    """Log-sigmoid discriminator/generator losses of the plain GAN objective.

    Test-only reference; training always uses the Wasserstein losses.
    """
    real_scores = np.asarray(real_scores, dtype=np.float64)
    fake_scores = np.asarray(fake_scores, dtype=np.float64)

    def sigmoid(z):
        return 1.0 / (1.0 + np.exp(-z))

    d_loss = float(np.mean(-np.log(sigmoid(real_scores)) - np.log(1.0 - sigmoid(fake_scores))))
    g_loss = float(np.mean(-np.log(sigmoid(fake_scores))))
    return d_loss, g_loss

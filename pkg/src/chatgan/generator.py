"""Transformer encoder-decoder generator: teacher-forced training pass,
token-level NLL loss, Gumbel-softmax rollout for adversarial training, and
greedy autoregressive inference."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import BOS, EOS, PAD, TokenSequence
from .layers import (
    AttentionMask,
    DecoderLayer,
    EncoderLayer,
    Linear,
    PositionalEncoding,
    dropout,
)
from .tensor import Tensor

GUMBEL_EPS = 1e-20
LOGPROB_EPS = 1e-9


@dataclass
class GeneratorConfig:
    vocab_size: int
    n_layers: int = 8
    n_heads: int = 16
    d_model: int = 64
    embed_dim: int = 768
    max_len: int = 30
    dropout: float = 0.5
    gumbel_temperature: float = 1.0
    positional_combine: str = "add"  # "add" | "concat"
    ffn_dim: int | None = None       # defaults to 4 * d_model

    def __post_init__(self):
        for name in ("vocab_size", "n_layers", "n_heads", "d_model", "embed_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.gumbel_temperature <= 0:
            raise ValueError("gumbel_temperature must be positive")
        if self.positional_combine not in ("add", "concat"):
            raise ValueError(f"unknown positional_combine {self.positional_combine!r}")
        if self.positional_combine == "concat" and self.d_model % 4 != 0:
            raise ValueError("concat positional mode needs d_model divisible by 4")
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model


@dataclass
class GumbelRollout:
    """One teacher-forcing-free rollout.

    `soft` holds the relaxed per-step distributions softmax((logits+g)/tau);
    `straight_through` evaluates to the one-hot rows of `hard` while carrying
    the gradient of `soft`, so a critic scored on it backpropagates into the
    generator.
    """

    hard: TokenSequence
    soft: Tensor
    straight_through: Tensor = field(repr=False)


class GeneratorModel:
    """Full encoder-decoder stack over a learned token embedding."""

    def __init__(self, config: GeneratorConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        pos_width = c.d_model if c.positional_combine == "add" else c.d_model // 2
        self.token_embedding = Tensor(
            rng.normal(0.0, 0.02, (c.vocab_size, c.embed_dim)), requires_grad=True
        )
        self.projection = Linear(c.embed_dim, pos_width, rng=rng)
        self.positional = PositionalEncoding(c.max_len, pos_width)
        self.encoder_layers = [
            EncoderLayer(c.d_model, c.n_heads, c.ffn_dim, c.dropout, rng=rng)
            for _ in range(c.n_layers)
        ]
        self.decoder_layers = [
            DecoderLayer(c.d_model, c.n_heads, c.ffn_dim, c.dropout, rng=rng)
            for _ in range(c.n_layers)
        ]
        # small head init keeps the initial next-token distribution near uniform
        self.output_head = Linear(c.d_model, c.vocab_size, rng=rng, init_scale=0.1)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"token_embedding": self.token_embedding}
        out.update(self.projection.named_parameters("projection"))
        for i, layer in enumerate(self.encoder_layers):
            out.update(layer.named_parameters(f"encoder.{i}"))
        for i, layer in enumerate(self.decoder_layers):
            out.update(layer.named_parameters(f"decoder.{i}"))
        out.update(self.output_head.named_parameters("output_head"))
        return out

    def _embed(self, ids: np.ndarray, training: bool, rng) -> Tensor:
        x = self.projection(T.embedding_lookup(self.token_embedding, ids))
        pe = self.positional.rows(len(ids))
        if self.config.positional_combine == "add":
            x = x + pe
        else:
            x = T.concat([x, pe], axis=1)
        return dropout(x, self.config.dropout, training, rng)

    def encode(self, question: TokenSequence, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Encoder memory over the padded question; pad rows carry no signal
        into non-pad rows."""
        memory, _ = self._encode_with_mask(question, training, rng)
        return memory

    def _question_keep(self, question: TokenSequence) -> np.ndarray:
        if question.capacity != self.config.max_len:
            raise T.ShapeError(
                f"question capacity {question.capacity} != max_len {self.config.max_len}"
            )
        if not question.payload():
            raise ValueError("empty question: no non-pad payload tokens")
        return np.arange(question.capacity) < question.length

    def _encode_with_mask(self, question: TokenSequence, training: bool,
                          rng) -> tuple[Tensor, np.ndarray]:
        keep = self._question_keep(question)
        x = self._embed(question.ids, training, rng)
        mask = AttentionMask.padding(len(question.ids), keep)
        for layer in self.encoder_layers:
            x = layer(x, mask, training, rng)
        return x, keep

    def _decode(self, memory: Tensor, enc_keep: np.ndarray, dec_ids: np.ndarray,
                dec_keep: np.ndarray | None, training: bool, rng) -> Tensor:
        n = len(dec_ids)
        x = self._embed(dec_ids, training, rng)
        self_mask = AttentionMask.causal(n)
        if dec_keep is not None:
            self_mask = self_mask.combine(AttentionMask.padding(n, dec_keep))
        cross_mask = AttentionMask.padding(n, enc_keep)
        for layer in self.decoder_layers:
            x = layer(x, memory, self_mask, cross_mask, training, rng)
        return self.output_head(x)

    def teacher_forced_logits(self, question: TokenSequence, answer_in: TokenSequence,
                              training: bool = False,
                              rng: np.random.Generator | None = None) -> Tensor:
        """Per-position next-token logits; row t predicts the token following
        answer_in[t] and sees only answer_in[0..t]."""
        if answer_in.capacity != self.config.max_len:
            raise T.ShapeError(
                f"answer capacity {answer_in.capacity} != max_len {self.config.max_len}"
            )
        if answer_in.ids[0] != BOS:
            raise ValueError("decoder input must begin with BOS")
        memory, enc_keep = self._encode_with_mask(question, training, rng)
        return self._decode(memory, enc_keep, answer_in.ids, answer_in.ids != PAD,
                            training, rng)

    def mle_loss(self, logits: Tensor, target: TokenSequence) -> Tensor:
        """Mean negative log-likelihood over non-pad target positions."""
        keep = target.ids != PAD
        n = int(keep.sum())
        if n == 0:
            raise ValueError("mle_loss: all target positions are padding")
        onehot = np.zeros((target.capacity, self.config.vocab_size), dtype=np.float64)
        onehot[np.arange(target.capacity)[keep], target.ids[keep]] = 1.0
        logp = T.log(T.softmax(logits) + LOGPROB_EPS)
        picked = T.tsum(logp * Tensor(onehot))
        return picked * (-1.0 / n)

    def gumbel_generate(self, question: TokenSequence, rng: np.random.Generator,
                        temperature: float | None = None) -> GumbelRollout:
        """Free-running rollout to max_len: sample Gumbel noise per step,
        relax with softmax((logits+g)/tau), feed the argmax token onward."""
        tau = self.config.gumbel_temperature if temperature is None else temperature
        if tau <= 0:
            raise ValueError("gumbel temperature must be positive")
        c = self.config
        memory, enc_keep = self._encode_with_mask(question, training=False, rng=None)
        dec_ids = np.full(c.max_len, PAD, dtype=np.int64)
        dec_ids[0] = BOS
        hard = np.full(c.max_len, PAD, dtype=np.int64)
        soft_rows: list[Tensor] = []
        for t in range(c.max_len):
            logits = self._decode(memory, enc_keep, dec_ids[: t + 1], None,
                                  training=False, rng=None)
            u = rng.random(c.vocab_size)
            noise = -np.log(-np.log(u + GUMBEL_EPS) + GUMBEL_EPS)
            row = (logits[t] + Tensor(noise)) * (1.0 / tau)
            soft = T.softmax(row)
            tok = int(np.argmax(soft.data))
            hard[t] = tok
            soft_rows.append(T.reshape(soft, (1, c.vocab_size)))
            if t + 1 < c.max_len:
                dec_ids[t + 1] = tok
        soft_all = T.concat(soft_rows, axis=0)
        onehot = np.zeros((c.max_len, c.vocab_size), dtype=soft_all.data.dtype)
        onehot[np.arange(c.max_len), hard] = 1.0
        st = soft_all + Tensor(onehot - soft_all.data)
        return GumbelRollout(
            hard=TokenSequence(hard, c.max_len),
            soft=soft_all,
            straight_through=st,
        )

    def infer(self, question: TokenSequence, max_steps: int | None = None) -> TokenSequence:
        """Greedy argmax decode from BOS until EOS or max_steps; returns the
        generated payload (no BOS/EOS)."""
        c = self.config
        steps = c.max_len if max_steps is None else min(max_steps, c.max_len)
        with T.no_grad():
            memory, enc_keep = self._encode_with_mask(question, training=False, rng=None)
            dec_ids = np.full(c.max_len, PAD, dtype=np.int64)
            dec_ids[0] = BOS
            out: list[int] = []
            for t in range(steps):
                logits = self._decode(memory, enc_keep, dec_ids[: t + 1], None,
                                      training=False, rng=None)
                tok = int(np.argmax(logits.data[t]))
                if tok == EOS:
                    break
                out.append(tok)
                if t + 1 < c.max_len:
                    dec_ids[t + 1] = tok
        ids = np.full(c.max_len, PAD, dtype=np.int64)
        ids[: len(out)] = out
        return TokenSequence(ids, len(out))

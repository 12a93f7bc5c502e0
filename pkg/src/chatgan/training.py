"""Two-phase training schedule: teacher-forced MLE pretraining, then
adversarial fine-tuning with k critic steps (weight-clipped) per generator
step. Keeps an append-only loss history and emits checkpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .critic import CriticModel, PairInput, clip_weights, critic_loss, generator_adv_loss
from .data import Batch, Vocab
from .generator import GeneratorModel
from .optim import Adam, RMSProp, zero_grads


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; aborts with location diagnostics."""

    def __init__(self, phase: str, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} in {phase} phase, epoch {epoch}, batch {batch}")
        self.phase = phase
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class PhaseOrderError(RuntimeError):
    """Adversarial phase requested without pretraining or an explicit override."""


@dataclass
class TrainConfig:
    pretrain_epochs: int = 200
    adv_epochs: int = 400
    batch_size: int = 64
    critic_steps_k: int = 5
    clip_c: float = 0.01
    lr: float = 5e-5
    seed: int = 0
    checkpoint_every: int = 0    # epochs; 0 disables periodic checkpoints
    eval_every: int = 0
    allow_cold_start: bool = False
    gumbel_critic_input: str = "straight_through"  # or "soft"

    def __post_init__(self):
        for name in ("pretrain_epochs", "adv_epochs", "checkpoint_every", "eval_every"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("batch_size", "critic_steps_k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.clip_c <= 0:
            raise ValueError("clip_c must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.gumbel_critic_input not in ("straight_through", "soft"):
            raise ValueError(f"unknown gumbel_critic_input {self.gumbel_critic_input!r}")


@dataclass
class LossRecord:
    phase: str
    step: int
    loss_g: float | None  # MLE loss during pretraining, adversarial loss after
    loss_c: float | None


@dataclass
class TrainState:
    phase: str = "pretrain"
    epoch: int = 0
    step: int = 0
    history: list[LossRecord] = field(default_factory=list)
    pretrained: bool = False
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    gen_optimizer: object | None = None
    critic_optimizer: object | None = None

    def record(self, phase: str, loss_g: float | None, loss_c: float | None) -> None:
        self.step += 1
        self.history.append(LossRecord(phase, self.step, loss_g, loss_c))

    def history_csv(self, path: str | Path) -> None:
        lines = ["phase,step,loss_g,loss_c"]
        for r in self.history:
            g = "" if r.loss_g is None else repr(r.loss_g)
            c = "" if r.loss_c is None else repr(r.loss_c)
            lines.append(f"{r.phase},{r.step},{g},{c}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_finite(value: float, phase: str, epoch: int, batch: int) -> float:
    if not math.isfinite(value):
        raise TrainingDiverged(phase, epoch, batch, value)
    return value


def _maybe_checkpoint(checkpoint_dir, generator, critic, config, vocab, state, epoch) -> None:
    if not checkpoint_dir or not config.checkpoint_every:
        return
    if (epoch + 1) % config.checkpoint_every != 0:
        return
    from .checkpoint import save_checkpoint

    path = Path(checkpoint_dir) / f"{state.phase}-epoch{epoch + 1:04d}.ckpt"
    save_checkpoint(path, generator=generator, critic=critic,
                    train_config=config, vocab=vocab, state=state)


def pretrain(generator: GeneratorModel, batches: list[Batch], config: TrainConfig,
             *, vocab: Vocab | None = None, checkpoint_dir: str | Path | None = None,
             state: TrainState | None = None) -> TrainState:
    """MLE pretraining over shuffled batches; returns the training state."""
    if not batches:
        raise ValueError("pretrain: empty corpus")
    if state is None:
        state = TrainState(rng=np.random.default_rng(config.seed))
    if config.pretrain_epochs == 0:
        return state
    if state.gen_optimizer is None:
        state.gen_optimizer = Adam(lr=config.lr)
    params = generator.named_parameters()
    for epoch in range(config.pretrain_epochs):
        order = state.rng.permutation(len(batches))
        for bi in order:
            batch = batches[int(bi)]
            zero_grads(params)
            loss = _batch_mle_loss(generator, batch, training=True, rng=state.rng)
            value = _check_finite(loss.item(), "pretrain", epoch, int(bi))
            T.backward(loss)
            state.gen_optimizer.step(params)
            state.record("pretrain", value, None)
        state.epoch += 1
        _maybe_checkpoint(checkpoint_dir, generator, None, config, vocab, state, epoch)
    state.pretrained = True
    return state


def _batch_mle_loss(generator: GeneratorModel, batch: Batch, training: bool, rng):
    total = None
    for i in range(batch.size):
        logits = generator.teacher_forced_logits(
            batch.question_seq(i), batch.answer_in_seq(i), training=training, rng=rng
        )
        item = generator.mle_loss(logits, batch.target_seq(i))
        total = item if total is None else total + item
    return total * (1.0 / batch.size)


def teacher_forced_accuracy(generator: GeneratorModel, batches: list[Batch]) -> float:
    """Fraction of non-pad target tokens predicted by argmax, teacher-forced."""
    hits = 0
    total = 0
    with T.no_grad():
        for batch in batches:
            for i in range(batch.size):
                logits = generator.teacher_forced_logits(
                    batch.question_seq(i), batch.answer_in_seq(i)
                )
                keep = batch.target_pad[i]
                pred = np.argmax(logits.data, axis=-1)
                hits += int((pred[keep] == batch.answer_target[i][keep]).sum())
                total += int(keep.sum())
    return hits / max(total, 1)


def begin_adversarial(state: TrainState, config: TrainConfig) -> None:
    if state.phase != "adversarial":
        if not state.pretrained and not config.allow_cold_start:
            raise PhaseOrderError(
                "adversarial phase requires a pretrained generator "
                "(or an explicit cold-start override)"
            )
        state.phase = "adversarial"


def adversarial_epoch(generator: GeneratorModel, critic: CriticModel,
                      batches: list[Batch], config: TrainConfig,
                      state: TrainState,
                      *, vocab: Vocab | None = None,
                      checkpoint_dir: str | Path | None = None) -> TrainState:
    """One pass over the corpus: per batch, k clipped critic steps on
    real-vs-rollout pairs (same questions on both sides), then one generator
    step through the critic with soft rows."""
    if not batches:
        raise ValueError("adversarial_epoch: empty corpus")
    begin_adversarial(state, config)
    if state.gen_optimizer is None or not isinstance(state.gen_optimizer, RMSProp):
        state.gen_optimizer = RMSProp(lr=config.lr)
    if state.critic_optimizer is None:
        state.critic_optimizer = RMSProp(lr=config.lr)
    gen_params = generator.named_parameters()
    critic_params = critic.named_parameters()
    cap = critic.config.pair_capacity
    epoch = state.epoch
    for bi, batch in enumerate(batches):
        questions = [batch.question_seq(i) for i in range(batch.size)]
        real = [PairInput.from_real(questions[i], batch.answer_seq(i), cap)
                for i in range(batch.size)]
        for _ in range(config.critic_steps_k):
            with T.no_grad():
                rollouts = [generator.gumbel_generate(q, state.rng) for q in questions]
            fake = [PairInput.from_generated(q, r, cap, rows="hard")
                    for q, r in zip(questions, rollouts)]
            zero_grads(critic_params)
            loss_c = critic_loss(critic, real, fake)
            value_c = _check_finite(loss_c.item(), "adversarial", epoch, bi)
            T.backward(loss_c)
            state.critic_optimizer.step(critic_params)
            clip_weights(critic, config.clip_c)
            max_abs = max(float(np.abs(t.data).max()) for t in critic_params.values())
            assert max_abs <= config.clip_c, "critic weights escaped the clip range"
            state.record("adversarial", None, value_c)
        rollouts = [generator.gumbel_generate(q, state.rng) for q in questions]
        fake = [PairInput.from_generated(q, r, cap, rows=config.gumbel_critic_input)
                for q, r in zip(questions, rollouts)]
        zero_grads(gen_params)
        loss_g = generator_adv_loss(critic, fake)
        value_g = _check_finite(loss_g.item(), "adversarial", epoch, bi)
        T.backward(loss_g)
        state.gen_optimizer.step(gen_params)
        state.record("adversarial", value_g, None)
    state.epoch += 1
    _maybe_checkpoint(checkpoint_dir, generator, critic, config, vocab, state, epoch)
    return state


def run_training(mode: str, generator: GeneratorModel, critic: CriticModel | None,
                 batches: list[Batch], config: TrainConfig,
                 *, vocab: Vocab | None = None,
                 checkpoint_dir: str | Path | None = None) -> TrainState:
    """The three schedules: "pretrain" only, "adversarial" only (cold start),
    or "combined" pretraining followed by adversarial fine-tuning."""
    if mode not in ("pretrain", "adversarial", "combined"):
        raise ValueError(f"unknown training mode {mode!r}")
    state = TrainState(rng=np.random.default_rng(config.seed))
    if mode in ("pretrain", "combined"):
        state = pretrain(generator, batches, config, vocab=vocab,
                         checkpoint_dir=checkpoint_dir, state=state)
        state.gen_optimizer = None  # adversarial phase re-pairs with RMSProp
    if mode in ("adversarial", "combined"):
        if critic is None:
            raise ValueError("adversarial training needs a critic")
        if mode == "adversarial":
            import dataclasses

            config = dataclasses.replace(config, allow_cold_start=True)
        for _ in range(config.adv_epochs):
            state = adversarial_epoch(generator, critic, batches, config, state,
                                      vocab=vocab, checkpoint_dir=checkpoint_dir)
    return state

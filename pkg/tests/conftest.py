"""Shared test helpers: finite-difference oracles, the op catalogue for
gradient checking, toy copy-task corpora, and session-scoped trained models."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import chatgan as cg
from chatgan import tensor as T


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f around x, elementwise."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_op_gradients(apply_fn, inputs: list[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between backward() grads and finite differences.

    `apply_fn(tensors) -> Tensor` builds the op under test; the loss is a
    fixed random weighting of its output so every entry matters.
    """
    tensors = [T.Tensor(x, requires_grad=True) for x in inputs]
    out = apply_fn(tensors)
    weights = np.random.default_rng(12345).normal(size=out.shape)
    loss = T.tsum(out * T.Tensor(weights))
    T.backward(loss)

    worst = 0.0
    for t, x in zip(tensors, inputs):
        def scalar():
            fresh = [T.Tensor(arr) for arr in inputs]
            val = apply_fn(fresh)
            return float((val.data * weights).sum())

        numeric = fd_gradient(scalar, x, h)
        worst = max(worst, relative_error(np.asarray(t.grad, dtype=np.float64), numeric))
    return worst


def _r(rng, *shape):
    return rng.normal(size=shape)


def op_cases(rng: np.random.Generator) -> list[tuple[str, list[np.ndarray], object]]:
    """One gradient-check case per engine op, on small random tensors."""
    def away(*s):
        # keep relu inputs off the kink at zero
        x = _r(rng, *s)
        return np.where(np.abs(x) < 0.1, 0.5, x)

    ids = rng.integers(0, 4, size=6)
    cases = [
        ("matmul", [_r(rng, 3, 4), _r(rng, 4, 2)], lambda t: T.matmul(t[0], t[1])),
        ("matmul-stacked", [_r(rng, 2, 3, 4), _r(rng, 4, 2)], lambda t: T.matmul(t[0], t[1])),
        ("add", [_r(rng, 3, 4), _r(rng, 4)], lambda t: T.add(t[0], t[1])),
        ("sub", [_r(rng, 3, 4), _r(rng, 3, 4)], lambda t: T.sub(t[0], t[1])),
        ("mul", [_r(rng, 3, 4), _r(rng, 4)], lambda t: T.mul(t[0], t[1])),
        ("softmax", [_r(rng, 3, 4)], lambda t: T.softmax(t[0])),
        ("log", [rng.uniform(0.5, 2.0, (3, 4))], lambda t: T.log(t[0])),
        ("exp", [_r(rng, 3, 4)], lambda t: T.exp(t[0])),
        ("tanh", [_r(rng, 3, 4)], lambda t: T.tanh(t[0])),
        ("relu", [away(3, 4)], lambda t: T.relu(t[0])),
        ("mean-all", [_r(rng, 3, 4)], lambda t: T.tmean(t[0])),
        ("mean-axis", [_r(rng, 3, 4)], lambda t: T.tmean(t[0], axis=0)),
        ("sum-all", [_r(rng, 3, 4)], lambda t: T.tsum(t[0])),
        ("sum-axis", [_r(rng, 3, 4)], lambda t: T.tsum(t[0], axis=1, keepdims=True)),
        ("transpose", [_r(rng, 3, 4)], lambda t: T.transpose(t[0], (1, 0))),
        ("reshape", [_r(rng, 3, 4)], lambda t: T.reshape(t[0], (4, 3))),
        ("concat", [_r(rng, 2, 3), _r(rng, 2, 3)], lambda t: T.concat(t, axis=0)),
        ("slice", [_r(rng, 4, 4)], lambda t: t[0][1:3, :2]),
        ("embedding-lookup", [_r(rng, 4, 3)], lambda t: T.embedding_lookup(t[0], ids)),
        ("layer-norm-core", [_r(rng, 3, 4)], lambda t: T.layer_norm_core(t[0])),
    ]
    return cases


@pytest.fixture
def float64_engine():
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float32)


# ---------------------------------------------------------------------------
# toy copy-task corpus (acceptance-scale: vocab 20, 200 pairs, max_len 10)

TOY_WORDS = [f"w{i}" for i in range(15)]  # 15 word types + 5 reserved = vocab 20


def toy_copy_pairs(n_pairs: int, seed: int = 7) -> list[cg.DialoguePair]:
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(3, 9))
        words = [TOY_WORDS[int(i)] for i in rng.integers(0, len(TOY_WORDS), length)]
        text = " ".join(words)
        pairs.append(cg.DialoguePair(text, text))
    return pairs


def toy_generator_config(vocab_size: int) -> cg.GeneratorConfig:
    return cg.GeneratorConfig(
        vocab_size=vocab_size, n_layers=2, n_heads=2, d_model=32,
        embed_dim=32, max_len=10, dropout=0.0,
    )


def toy_critic_config(vocab_size: int) -> cg.CriticConfig:
    return cg.CriticConfig(
        vocab_size=vocab_size, n_layers=2, n_heads=2, d_model=32,
        embed_dim=32, max_len=10, dropout=0.0,
    )


def build_toy_corpus(n_pairs: int = 200, batch_size: int = 20, seed: int = 7):
    pairs = toy_copy_pairs(n_pairs, seed)
    texts = []
    for p in pairs:
        texts.append(cg.tokenize(p.question))
        texts.append(cg.tokenize(p.answer))
    vocab = cg.Vocab.build(texts, min_frequency=1, max_size=20)
    batches = cg.data.make_batches(pairs, vocab, max_len=10, batch_size=batch_size)
    return pairs, vocab, batches


@dataclasses.dataclass
class TrainedToy:
    generator: cg.GeneratorModel
    vocab: cg.Vocab
    batches: list
    pairs: list
    state: cg.TrainState
    accuracy: float
    epochs_used: int
    seconds: float
    checkpoint_path: str


@pytest.fixture(scope="session")
def trained_copy_model(tmp_path_factory) -> TrainedToy:
    """Copy-task generator pretrained to the acceptance bar; checkpointed so
    later tests can load fresh instances instead of sharing mutable state."""
    import time

    from chatgan.checkpoint import save_checkpoint

    pairs, vocab, batches = build_toy_corpus()
    assert len(vocab) == 20
    gen = cg.GeneratorModel(toy_generator_config(len(vocab)), seed=11)
    config = cg.TrainConfig(pretrain_epochs=1, adv_epochs=0, batch_size=20,
                            lr=1e-3, seed=11)
    state = cg.TrainState(rng=np.random.default_rng(11))
    t0 = time.time()
    accuracy = 0.0
    epochs = 0
    for _ in range(200):
        state = cg.pretrain(gen, batches, config, state=state)
        state.pretrained = False  # only the final epoch flips it below
        epochs += 1
        accuracy = cg.teacher_forced_accuracy(gen, batches)
        if accuracy >= 0.99:
            break
    state.pretrained = True
    seconds = time.time() - t0
    path = str(tmp_path_factory.mktemp("ckpt") / "copy-task.ckpt")
    save_checkpoint(path, generator=gen, train_config=config, vocab=vocab, state=state)
    return TrainedToy(gen, vocab, batches, pairs, state, accuracy, epochs, seconds, path)

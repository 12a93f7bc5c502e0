"""Versioned binary checkpoints: magic, format version, JSON header
(configs, vocabulary, tensor manifest, phase counters), raw little-endian
float32 tensor payload, and a trailing SHA-256 checksum."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .critic import CriticConfig, CriticModel
from .data import Vocab
from .generator import GeneratorConfig, GeneratorModel

MAGIC = b"CWGC"
VERSION = 1
_DIGEST_LEN = 32


class CheckpointError(Exception):
    """Base for checkpoint load failures."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


@dataclass
class CheckpointBundle:
    generator: GeneratorModel
    critic: CriticModel | None
    train_config: "object | None"
    vocab: Vocab
    state_info: dict
    checksum: str


def _state_dict(state) -> dict:
    if state is None:
        return {}
    return {
        "phase": state.phase,
        "epoch": int(state.epoch),
        "step": int(state.step),
        "pretrained": bool(state.pretrained),
    }


def checkpoint_bytes(*, generator: GeneratorModel, critic: CriticModel | None = None,
                     train_config=None, vocab: Vocab, state=None) -> bytes:
    named: dict[str, np.ndarray] = {}
    for n, t in generator.named_parameters().items():
        named[f"generator.{n}"] = t.data
    if critic is not None:
        for n, t in critic.named_parameters().items():
            named[f"critic.{n}"] = t.data
    header = {
        "generator_config": dataclasses.asdict(generator.config),
        "critic_config": dataclasses.asdict(critic.config) if critic is not None else None,
        "train_config": dataclasses.asdict(train_config) if train_config is not None else None,
        "vocab": [vocab.token(i) for i in range(len(vocab))],
        "state": _state_dict(state),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in named.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", VERSION)
    body += struct.pack("<Q", len(header_bytes))
    body += header_bytes
    for arr in named.values():
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    return bytes(body)


def save_checkpoint(path: str | Path, *, generator: GeneratorModel,
                    critic: CriticModel | None = None, train_config=None,
                    vocab: Vocab, state=None) -> None:
    Path(path).write_bytes(checkpoint_bytes(
        generator=generator, critic=critic, train_config=train_config,
        vocab=vocab, state=state,
    ))


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointMagicError(f"not a checkpoint file: bad magic in {path}")
    if len(raw) < 8:
        raise CheckpointChecksumError(f"truncated checkpoint: {path}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    if len(raw) < 16 + _DIGEST_LEN:
        raise CheckpointChecksumError(f"truncated checkpoint: {path}")
    body, digest = raw[:-_DIGEST_LEN], raw[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointChecksumError(f"checksum mismatch in {path}")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    header_end = 16 + header_len
    if header_end > len(body):
        raise CheckpointFormatError(f"header overruns file: {path}")
    try:
        header = json.loads(body[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"unreadable header in {path}: {e}") from e

    vocab = Vocab(header["vocab"])
    generator = GeneratorModel(GeneratorConfig(**header["generator_config"]), seed=0)
    critic = None
    if header["critic_config"] is not None:
        critic = CriticModel(CriticConfig(**header["critic_config"]), seed=0)
    train_config = None
    if header["train_config"] is not None:
        from .training import TrainConfig

        train_config = TrainConfig(**header["train_config"])

    named = {f"generator.{n}": t for n, t in generator.named_parameters().items()}
    if critic is not None:
        named.update({f"critic.{n}": t for n, t in critic.named_parameters().items()})
    offset = header_end
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in named:
            raise CheckpointFormatError(f"unknown tensor {name!r} in {path}")
        t = named.pop(name)
        if t.data.shape != shape:
            raise CheckpointFormatError(
                f"tensor {name!r} shape {shape} does not match model {t.data.shape}"
            )
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(body):
            raise CheckpointFormatError(f"tensor payload overruns file: {path}")
        arr = np.frombuffer(body[offset:end], dtype="<f4").reshape(shape)
        t.data = arr.astype(t.data.dtype)
        offset = end
    if named:
        raise CheckpointFormatError(
            "checkpoint missing tensors: " + ", ".join(sorted(named))
        )
    return CheckpointBundle(
        generator=generator,
        critic=critic,
        train_config=train_config,
        vocab=vocab,
        state_info=header.get("state", {}),
        checksum=hashlib.sha256(raw).hexdigest(),
    )

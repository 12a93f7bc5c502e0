"""Text pipeline: tokenization, vocabulary, corpus parsers for the two
dialogue corpora, the normalized question/answer pair format, train/test
splitting, and batch assembly with masks."""

from __future__ import annotations

import ast
import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

PAD, BOS, EOS, UNK, SEP = 0, 1, 2, 3, 4
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>", "<sep>")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
CORNELL_DELIM = " +++$+++ "


def tokenize(text: str) -> list[str]:
    """Lowercase word/punctuation split; deterministic, empty-safe."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


@dataclass
class TokenSequence:
    """Fixed-capacity index vector, PAD-filled past `length`."""

    ids: np.ndarray
    length: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1:
            raise ValueError(f"token sequence must be 1-d, got shape {self.ids.shape}")
        if not 0 <= self.length <= self.ids.shape[0]:
            raise ValueError(f"length {self.length} outside capacity {self.ids.shape[0]}")

    @property
    def capacity(self) -> int:
        return int(self.ids.shape[0])

    @classmethod
    def wrap(cls, payload: list[int], capacity: int) -> "TokenSequence":
        """[BOS, payload truncated to capacity-2, EOS], PAD-filled."""
        body = list(payload)[: capacity - 2]
        ids = np.full(capacity, PAD, dtype=np.int64)
        ids[0] = BOS
        ids[1 : 1 + len(body)] = body
        ids[1 + len(body)] = EOS
        return cls(ids, len(body) + 2)

    def payload(self) -> list[int]:
        """Tokens with BOS/EOS/PAD stripped."""
        out = []
        for t in self.ids[: self.length]:
            if t not in (PAD, BOS, EOS):
                out.append(int(t))
        return out

    def nonpad_mask(self) -> np.ndarray:
        return self.ids != PAD


class Vocab:
    """token<->index bijection with fixed reserved entries."""

    def __init__(self, tokens: list[str]):
        if list(tokens[: len(RESERVED_TOKENS)]) != list(RESERVED_TOKENS):
            raise ValueError("vocabulary must start with the reserved tokens")
        self._tokens = list(tokens)
        self._index = {t: i for i, t in enumerate(self._tokens)}
        if len(self._index) != len(self._tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    @classmethod
    def build(cls, texts: Iterable[list[str]], min_frequency: int = 3,
              max_size: int = 20000) -> "Vocab":
        counts: dict[str, int] = {}
        for toks in texts:
            for t in toks:
                counts[t] = counts.get(t, 0) + 1
        kept = [t for t, c in counts.items() if c >= min_frequency]
        kept.sort(key=lambda t: (-counts[t], t))
        kept = kept[: max_size - len(RESERVED_TOKENS)]
        return cls(list(RESERVED_TOKENS) + kept)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln != ""])


@dataclass
class DialoguePair:
    """One (question, answer) training example."""

    question: str
    answer: str

    def to_json(self) -> str:
        return json.dumps({"q": self.question, "a": self.answer}, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "DialoguePair":
        d = json.loads(line)
        return cls(d["q"], d["a"])


@dataclass
class ParseStats:
    pairs_emitted: int = 0
    utterances: int = 0
    conversations: int = 0
    skipped_missing_line: int = 0
    skipped_malformed: int = 0


def parse_cornell(lines_path: str | Path, conversations_path: str | Path,
                  stats: ParseStats | None = None) -> Iterator[DialoguePair]:
    """Pairs of consecutive utterances from the movie-dialog corpus files."""
    stats = stats if stats is not None else ParseStats()
    id2text: dict[str, str] = {}
    with open(lines_path, encoding="utf-8", errors="ignore") as fh:
        for raw in fh:
            parts = raw.rstrip("\n").split(CORNELL_DELIM)
            if len(parts) < 5:
                stats.skipped_malformed += 1
                continue
            id2text[parts[0]] = parts[4]
            stats.utterances += 1
    with open(conversations_path, encoding="utf-8", errors="ignore") as fh:
        for raw in fh:
            parts = raw.rstrip("\n").split(CORNELL_DELIM)
            if len(parts) < 4:
                stats.skipped_malformed += 1
                continue
            try:
                line_ids = ast.literal_eval(parts[3])
            except (ValueError, SyntaxError):
                stats.skipped_malformed += 1
                continue
            stats.conversations += 1
            for a, b in zip(line_ids, line_ids[1:]):
                if a not in id2text or b not in id2text:
                    stats.skipped_missing_line += 1
                    continue
                q, ans = id2text[a].strip(), id2text[b].strip()
                if not q or not ans:
                    continue
                stats.pairs_emitted += 1
                yield DialoguePair(q, ans)
    if stats.skipped_missing_line or stats.skipped_malformed:
        warnings.warn(
            f"cornell parse: skipped {stats.skipped_missing_line} missing line refs, "
            f"{stats.skipped_malformed} malformed rows"
        )


def _chitchat_messages(convo) -> list[tuple[str, str]]:
    """Normalize one conversation to (speaker, text) turns."""
    if isinstance(convo, dict):
        convo = convo.get("messages", [])
    turns: list[tuple[str, str]] = []
    for i, msg in enumerate(convo):
        if isinstance(msg, dict):
            speaker = msg.get("sender") or msg.get("speaker") or msg.get("agent") or ""
            text = msg.get("text", "")
        elif isinstance(msg, (list, tuple)) and len(msg) == 2:
            speaker, text = str(msg[0]), str(msg[1])
        elif isinstance(msg, str):
            speaker, text = str(i % 2), msg
        else:
            continue
        if text:
            turns.append((str(speaker), text))
    return turns


def parse_chitchat(path: str | Path, stats: ParseStats | None = None) -> Iterator[DialoguePair]:
    """Consecutive-turn pairs from the chit-chat JSON distribution; adjacent
    messages from one speaker merge into a single utterance first."""
    stats = stats if stats is not None else ParseStats()
    with open(path, encoding="utf-8") as fh:
        corpus = json.load(fh)
    conversations = corpus.values() if isinstance(corpus, dict) else corpus
    for convo in conversations:
        turns = _chitchat_messages(convo)
        if not turns:
            continue
        stats.conversations += 1
        stats.utterances += len(turns)
        merged: list[str] = []
        last_speaker = None
        for speaker, text in turns:
            if speaker == last_speaker and merged:
                merged[-1] = merged[-1] + " " + text
            else:
                merged.append(text)
            last_speaker = speaker
        for q, ans in zip(merged, merged[1:]):
            q, ans = q.strip(), ans.strip()
            if q and ans:
                stats.pairs_emitted += 1
                yield DialoguePair(q, ans)


def write_pairs_jsonl(pairs: Iterable[DialoguePair], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(p.to_json() + "\n")
            n += 1
    return n


def read_pairs_jsonl(path: str | Path) -> list[DialoguePair]:
    with open(path, encoding="utf-8") as fh:
        return [DialoguePair.from_json(ln) for ln in fh if ln.strip()]


@dataclass
class Batch:
    """Index matrices plus the masks the model consumes."""

    questions: np.ndarray      # [B, max_len], BOS/EOS-wrapped, PAD-filled
    answers: np.ndarray        # [B, max_len], same wrapping (for pair assembly)
    answer_in: np.ndarray      # [B, max_len], answers without EOS (decoder input)
    answer_target: np.ndarray  # [B, max_len], answers without BOS (one step ahead)
    question_pad: np.ndarray   # [B, max_len] bool, True on non-pad
    target_pad: np.ndarray     # [B, max_len] bool, True on non-pad targets
    causal: np.ndarray         # [max_len, max_len] bool lower-triangular

    @property
    def size(self) -> int:
        return int(self.questions.shape[0])

    def question_seq(self, i: int) -> TokenSequence:
        return TokenSequence(self.questions[i].copy(), int(self.question_pad[i].sum()))

    def answer_seq(self, i: int) -> TokenSequence:
        row = self.answers[i]
        return TokenSequence(row.copy(), int((row != PAD).sum()))

    def answer_in_seq(self, i: int) -> TokenSequence:
        row = self.answer_in[i]
        return TokenSequence(row.copy(), int((row != PAD).sum()))

    def target_seq(self, i: int) -> TokenSequence:
        return TokenSequence(self.answer_target[i].copy(), int(self.target_pad[i].sum()))


def encode_pair(pair: DialoguePair, vocab: Vocab, max_len: int) -> tuple[TokenSequence, TokenSequence]:
    q = TokenSequence.wrap(vocab.encode(tokenize(pair.question)), max_len)
    a = TokenSequence.wrap(vocab.encode(tokenize(pair.answer)), max_len)
    return q, a


def make_batches(pairs: list[DialoguePair], vocab: Vocab, max_len: int,
                 batch_size: int) -> list[Batch]:
    if not pairs:
        return []
    if len(pairs) < batch_size:
        warnings.warn(f"corpus smaller than one batch ({len(pairs)} < {batch_size})")
    causal = np.tril(np.ones((max_len, max_len), dtype=bool))
    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        b = len(chunk)
        questions = np.full((b, max_len), PAD, dtype=np.int64)
        answers = np.full((b, max_len), PAD, dtype=np.int64)
        answer_in = np.full((b, max_len), PAD, dtype=np.int64)
        answer_target = np.full((b, max_len), PAD, dtype=np.int64)
        for i, pair in enumerate(chunk):
            q, a = encode_pair(pair, vocab, max_len)
            questions[i] = q.ids
            answers[i] = a.ids
            answer_in[i, : a.length - 1] = a.ids[: a.length - 1]          # drop EOS
            answer_target[i, : a.length - 1] = a.ids[1 : a.length]        # drop BOS
        batches.append(Batch(
            questions=questions,
            answers=answers,
            answer_in=answer_in,
            answer_target=answer_target,
            question_pad=questions != PAD,
            target_pad=answer_target != PAD,
            causal=causal,
        ))
    return batches


def split_pairs(pairs: list[DialoguePair], test_fraction: float,
                seed: int) -> tuple[list[DialoguePair], list[DialoguePair]]:
    """Deterministic seeded shuffle, then train/test split."""
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_test = int(round(len(pairs) * test_fraction))
    test_idx = set(order[:n_test].tolist())
    train = [pairs[i] for i in order[n_test:]]
    test = [pairs[i] for i in order[:n_test]]
    assert not test_idx.intersection(order[n_test:].tolist())
    return train, test


def split_and_batch(pairs: list[DialoguePair], vocab: Vocab, max_len: int,
                    batch_size: int, seed: int,
                    test_fraction: float = 0.2) -> tuple[list[Batch], list[DialoguePair]]:
    """80/20 split + train batches. `vocab` must come from the train split
    only; `prepare_corpus` enforces that end to end."""
    train, test = split_pairs(pairs, test_fraction, seed)
    return make_batches(train, vocab, max_len, batch_size), test


def prepare_corpus(pairs: list[DialoguePair], max_len: int, batch_size: int, seed: int,
                   test_fraction: float = 0.2, min_frequency: int = 3,
                   max_size: int = 20000) -> tuple[list[Batch], list[DialoguePair], Vocab]:
    """Split first, build the vocabulary from the train side, then batch."""
    train, test = split_pairs(pairs, test_fraction, seed)
    texts = []
    for p in train:
        texts.append(tokenize(p.question))
        texts.append(tokenize(p.answer))
    vocab = Vocab.build(texts, min_frequency=min_frequency, max_size=max_size)
    return make_batches(train, vocab, max_len, batch_size), test, vocab

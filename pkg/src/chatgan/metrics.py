"""Sentence- and corpus-level answer quality metrics: BLEU-4 with add-one
smoothing, LCS-based ROUGE-L, unigram F-measure, and a METEOR variant
without synonym/stemmer dictionaries ("meteor_lite"). All scores live in
[0, 1]; corpus scores are means of sentence scores."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

METRIC_NOTES = (
    "sentence-level BLEU-4 with add-one smoothing on zero counts; "
    "ROUGE-L with beta=1 (plain harmonic mean); "
    "meteor_lite: exact + suffix-stripped unigram alignment, no synonym dictionary; "
    "corpus scores are means of sentence scores"
)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: list[str], reference: list[str]) -> float:
    """Geometric mean of modified 1..4-gram precisions times the brevity
    penalty exp(min(0, 1 - |ref|/|cand|)); zero-count precisions smoothed
    to 1/(total+1)."""
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        total = max(len(candidate) - n + 1, 0)
        matched = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        p = matched / total if matched > 0 else 1.0 / (total + 1)
        log_sum += math.log(p)
    bp = math.exp(min(0.0, 1.0 - len(reference) / len(candidate)))
    return bp * math.exp(log_sum / 4.0)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """LCS F-score with beta=1: 2PR/(P+R) over LCS/|cand| and LCS/|ref|."""
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return 2 * p * r / (p + r)


def f_measure(candidate: list[str], reference: list[str]) -> float:
    """Harmonic mean of unigram bag-overlap precision and recall."""
    if not candidate or not reference:
        return 0.0
    overlap = sum((Counter(candidate) & Counter(reference)).values())
    if overlap == 0:
        return 0.0
    p = overlap / len(candidate)
    r = overlap / len(reference)
    return 2 * p * r / (p + r)


_SUFFIXES = ("ing", "es", "ed", "s")


def _strip_suffix(token: str) -> str:
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) > len(suf) + 1:
            return token[: -len(suf)]
    return token


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Greedy left-to-right unigram alignment: exact matches first, then
    suffix-stripped matches over the leftovers."""
    matches: list[tuple[int, int]] = []
    used = [False] * len(reference)
    cand_taken = [False] * len(candidate)
    for ci, tok in enumerate(candidate):
        for ri, ref_tok in enumerate(reference):
            if not used[ri] and ref_tok == tok:
                matches.append((ci, ri))
                used[ri] = True
                cand_taken[ci] = True
                break
    for ci, tok in enumerate(candidate):
        if cand_taken[ci]:
            continue
        stem = _strip_suffix(tok)
        for ri, ref_tok in enumerate(reference):
            if not used[ri] and _strip_suffix(ref_tok) == stem:
                matches.append((ci, ri))
                used[ri] = True
                break
    matches.sort()
    return matches


def _chunk_count(matches: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for ci, ri in matches:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor_lite(candidate: list[str], reference: list[str]) -> float:
    """Recall-weighted unigram F (10PR/(R+9P)) with the cubic chunk penalty
    0.5*(chunks/matches)^3 over exact + suffix-stripped alignments."""
    if not candidate or not reference:
        return 0.0
    matches = _align(candidate, reference)
    m = len(matches)
    if m == 0:
        return 0.0
    p = m / len(candidate)
    r = m / len(reference)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (_chunk_count(matches) / m) ** 3
    return f_mean * (1.0 - penalty)


@dataclass
class SentenceScores:
    question: str
    reference: str
    generated: str
    bleu4: float
    rouge_l: float
    f_measure: float
    meteor: float


@dataclass
class MetricReport:
    corpus: str
    n: int
    bleu4: float
    rouge_l: float
    f_measure: float
    meteor: float
    sentences: list[SentenceScores] = field(default_factory=list)
    notes: str = METRIC_NOTES

    def to_json(self) -> str:
        return json.dumps({
            "corpus": self.corpus,
            "n": self.n,
            "bleu4": self.bleu4,
            "rouge_l": self.rouge_l,
            "f_measure": self.f_measure,
            "meteor": self.meteor,
            "notes": self.notes,
        }, indent=2)

    def write(self, json_path: str | Path, csv_path: str | Path | None = None) -> None:
        Path(json_path).write_text(self.to_json() + "\n", encoding="utf-8")
        if csv_path is not None:
            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["question", "reference", "generated",
                                 "bleu4", "rouge_l", "f_measure", "meteor"])
                for s in self.sentences:
                    writer.writerow([s.question, s.reference, s.generated,
                                     s.bleu4, s.rouge_l, s.f_measure, s.meteor])


def score_sentence(candidate: list[str], reference: list[str]) -> tuple[float, float, float, float]:
    return (bleu4(candidate, reference), rouge_l(candidate, reference),
            f_measure(candidate, reference), meteor_lite(candidate, reference))


def evaluate_corpus(generator, test_pairs, vocab, corpus_name: str = "test",
                    infer_fn=None) -> MetricReport:
    """Greedy-infer every test question and score against its reference.

    `infer_fn(question_text) -> token list` overrides the model call (used
    by test doubles such as reference echoes).
    """
    from .data import TokenSequence, tokenize

    if not test_pairs:
        raise ValueError("evaluate_corpus: empty test set")
    sentences = []
    for pair in test_pairs:
        ref_tokens = tokenize(pair.answer)
        if infer_fn is not None:
            gen_tokens = infer_fn(pair.question)
        else:
            q = TokenSequence.wrap(vocab.encode(tokenize(pair.question)),
                                   generator.config.max_len)
            out = generator.infer(q)
            gen_tokens = vocab.decode(out.payload())
        b, rl, fm, mt = score_sentence(gen_tokens, ref_tokens)
        sentences.append(SentenceScores(
            question=pair.question, reference=pair.answer,
            generated=" ".join(gen_tokens),
            bleu4=b, rouge_l=rl, f_measure=fm, meteor=mt,
        ))
    n = len(sentences)
    return MetricReport(
        corpus=corpus_name,
        n=n,
        bleu4=sum(s.bleu4 for s in sentences) / n,
        rouge_l=sum(s.rouge_l for s in sentences) / n,
        f_measure=sum(s.f_measure for s in sentences) / n,
        meteor=sum(s.meteor for s in sentences) / n,
        sentences=sentences,
    )

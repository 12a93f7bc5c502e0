#!/usr/bin/env python3
# Corpus ingestion end to end: parse both corpus formats from small inline
# fixtures, normalize to q/a pairs, split, build a vocabulary, batch.

import json
import tempfile
from pathlib import Path

import chatgan.data as D

tmp = Path(tempfile.mkdtemp())

# --- movie-dialog format: field-delimited lines + conversation line lists
(tmp / "lines.txt").write_text("\n".join([
    "L1 +++$+++ u0 +++$+++ m0 +++$+++ AMY +++$+++ Hello Mr. Parker, how are you?",
    "L2 +++$+++ u1 +++$+++ m0 +++$+++ JO +++$+++ Hello Jo, thank you.",
    "L3 +++$+++ u0 +++$+++ m0 +++$+++ AMY +++$+++ Feeling better?",
    "L4 +++$+++ u1 +++$+++ m0 +++$+++ JO +++$+++ I just cannot believe it.",
]))
(tmp / "convs.txt").write_text(
    "u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L1', 'L2', 'L3', 'L4']\n")

stats = D.ParseStats()
movie_pairs = list(D.parse_cornell(tmp / "lines.txt", tmp / "convs.txt", stats))
print(f"movie fixture: {stats.pairs_emitted} pairs from {stats.utterances} utterances")
for p in movie_pairs:
    print("  Q:", p.question, "| A:", p.answer)

# --- chat format: conversation id -> messages; same-speaker turns merge
(tmp / "chit.json").write_text(json.dumps({
    "c1": {"messages": [
        {"sender": "a", "text": "can you hear me?"},
        {"sender": "b", "text": "hello there"},
        {"sender": "b", "text": "loud and clear"},
        {"sender": "a", "text": "how are you today?"},
    ]},
}))
chat_pairs = list(D.parse_chitchat(tmp / "chit.json"))
print("\nchat fixture:")
for p in chat_pairs:
    print("  Q:", p.question, "| A:", p.answer)

# --- normalized JSONL is the corpus-agnostic interchange format
out = tmp / "pairs.jsonl"
D.write_pairs_jsonl(movie_pairs + chat_pairs, out)
print("\nnormalized record:", out.read_text().splitlines()[0])

# --- split -> vocab (train side only) -> padded batches with masks
pairs = [D.DialoguePair(f"question {i} about w{i % 6}", f"answer w{i % 6} indeed")
         for i in range(50)]
batches, test, vocab = D.prepare_corpus(pairs, max_len=10, batch_size=16, seed=0,
                                        min_frequency=1)
print(f"\n{len(pairs)} pairs -> {sum(b.size for b in batches)} train / {len(test)} test, "
      f"vocab {len(vocab)}")
b = batches[0]
print("question row:", b.questions[0])
print("answer in   :", b.answer_in[0])
print("target      :", b.answer_target[0], "(shifted left, EOS appended)")

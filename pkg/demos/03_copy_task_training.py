#!/usr/bin/env python3
# MLE pretraining on a miniature copy task: the generator learns to echo
# the question. Watch teacher-forced accuracy climb.

import numpy as np

import chatgan as cg
import chatgan.data as D

rng = np.random.default_rng(7)
words = [f"w{i}" for i in range(10)]
pairs = []
for _ in range(60):
    n = int(rng.integers(2, 6))
    text = " ".join(words[int(i)] for i in rng.integers(0, len(words), n))
    pairs.append(D.DialoguePair(text, text))

texts = [D.tokenize(p.question) for p in pairs]
vocab = D.Vocab.build(texts, min_frequency=1, max_size=20)
batches = D.make_batches(pairs, vocab, max_len=8, batch_size=12)
print(f"{len(pairs)} pairs, vocab {len(vocab)}, {len(batches)} batches")

gen = cg.GeneratorModel(cg.GeneratorConfig(
    vocab_size=len(vocab), n_layers=2, n_heads=2, d_model=32,
    embed_dim=32, max_len=8, dropout=0.0), seed=3)

config = cg.TrainConfig(pretrain_epochs=5, lr=3e-3, seed=3)
state = cg.TrainState(rng=np.random.default_rng(3))
for round_ in range(20):
    state = cg.pretrain(gen, batches, config, state=state)
    acc = cg.teacher_forced_accuracy(gen, batches)
    print(f"epoch {state.epoch:3d}  loss {state.history[-1].loss_g:.3f}  "
          f"accuracy {acc:.1%}")
    if acc > 0.98:
        break

q = batches[0].question_seq(0)
answer = gen.infer(q)
print("question:", " ".join(vocab.decode(q.payload())))
print("decoded :", " ".join(vocab.decode(answer.payload())))

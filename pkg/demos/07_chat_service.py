#!/usr/bin/env python3
# Serve a checkpoint over HTTP and talk to it: train a small echo model,
# save it, start the service, exercise /health, /info and /chat.

import json
import tempfile
import urllib.request
from pathlib import Path

import numpy as np

import chatgan as cg
import chatgan.data as D
from chatgan.checkpoint import save_checkpoint
from chatgan.server import RuntimeConfig, start_server

rng = np.random.default_rng(2)
words = [f"w{i}" for i in range(8)]
pairs = []
for _ in range(50):
    n = int(rng.integers(2, 5))
    text = " ".join(words[int(i)] for i in rng.integers(0, len(words), n))
    pairs.append(D.DialoguePair(text, text))
vocab = D.Vocab.build([D.tokenize(p.question) for p in pairs], min_frequency=1,
                      max_size=16)
batches = D.make_batches(pairs, vocab, max_len=7, batch_size=10)

gen = cg.GeneratorModel(cg.GeneratorConfig(
    vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=32,
    embed_dim=32, max_len=7, dropout=0.0), seed=4)
config = cg.TrainConfig(pretrain_epochs=5, lr=2e-3, seed=4)
state = cg.TrainState(rng=np.random.default_rng(4))
for _ in range(10):
    state = cg.pretrain(gen, batches, config, state=state)
    if cg.teacher_forced_accuracy(gen, batches) > 0.97:
        break
print(f"echo model ready after {state.epoch} epochs")

ckpt = Path(tempfile.mkdtemp()) / "echo.ckpt"
save_checkpoint(ckpt, generator=gen, train_config=config, vocab=vocab, state=state)

server, thread = start_server(RuntimeConfig(checkpoint=ckpt, port=0))
port = server.server_address[1]
base = f"http://127.0.0.1:{port}"
print("serving on", base)


def get(path):
    with urllib.request.urlopen(f"{base}{path}", timeout=10) as r:
        return json.loads(r.read())


def chat(message):
    req = urllib.request.Request(
        f"{base}/chat",
        data=json.dumps({"session_id": "demo", "message": message}).encode(),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req, timeout=30) as r:
        return json.loads(r.read())


print("health:", get("/health"))
print("model:", {k: get("/info")["model"][k] for k in ("n_layers", "d_model", "max_len")})
for message in (" ".join(words[:3]), " ".join(words[3:6])):
    reply = chat(message)
    print(f"you: {message!r} -> bot: {reply['answer']!r} "
          f"({reply['tokens']} tokens, {reply['latency_ms']:.0f} ms)")

server.shutdown()
server.server_close()
print("\nthe same checkpoint also drives the terminal REPL:")
print(f"  chatgan chat --checkpoint {ckpt}")

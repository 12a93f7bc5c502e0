"""Command-line lifecycle: prepare-data, build-vocab, pretrain, train-adv,
eval, chat, serve. Flags override config-file keys; exit codes distinguish
usage errors (2), missing files (3), and incompatible checkpoints (4)."""

from __future__ import annotations

import argparse
import json
import sys
import time
import uuid
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CHECKPOINT = 4

DEFAULT_FALLBACK = "i do not know"

# flat config keys mirroring the published hyperparameter table
CONFIG_DEFAULTS = {
    "learning_rate": 5e-5,
    "batch_size": 64,
    "epochs": 400,
    "pretrain_epochs": 200,
    "dropout": 0.5,
    "n_layers": 8,
    "n_heads": 16,
    "max_len": 30,
    "embed_dim": 768,
    "d_model": 64,
    "test_split": 0.2,
    "critic_steps": 5,
    "clip_c": 0.01,
    "gumbel_temperature": 1.0,
    "min_frequency": 3,
    "vocab_max_size": 20000,
    "seed": 0,
}


def parse_config_file(path: str | Path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key = value): {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = type(CONFIG_DEFAULTS[key])(val) if not isinstance(
            CONFIG_DEFAULTS[key], float) else float(val)
    return values


def _merged_config(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chatgan", description=__doc__)
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="seed every stage deterministically")
    parser.add_argument("--float64", action="store_true", help="run the engine in 64-bit mode")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective flat config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prepare-data", help="parse a corpus into normalized q/a JSONL")
    p.add_argument("--cornell-lines")
    p.add_argument("--cornell-conversations")
    p.add_argument("--chitchat")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-vocab", help="build a vocabulary from pairs JSONL")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-frequency", type=int, dest="min_frequency")
    p.add_argument("--vocab-max-size", type=int, dest="vocab_max_size")
    p.add_argument("--test-split", type=float, dest="test_split")

    for name in ("pretrain", "train-adv"):
        p = sub.add_parser(name)
        p.add_argument("--pairs", required=True)
        p.add_argument("--out", required=True, help="checkpoint output path")
        p.add_argument("--history-csv")
        p.add_argument("--epochs", type=int)
        p.add_argument("--pretrain-epochs", type=int, dest="pretrain_epochs")
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--dropout", type=float)
        p.add_argument("--n-layers", type=int, dest="n_layers")
        p.add_argument("--n-heads", type=int, dest="n_heads")
        p.add_argument("--d-model", type=int, dest="d_model")
        p.add_argument("--embed-dim", type=int, dest="embed_dim")
        p.add_argument("--max-len", type=int, dest="max_len")
        p.add_argument("--test-split", type=float, dest="test_split")
        p.add_argument("--min-frequency", type=int, dest="min_frequency")
        if name == "pretrain":
            p.add_argument("--checkpoint", help="resume from an existing checkpoint")
        else:
            p.add_argument("--pretrain-checkpoint", help="checkpoint from the pretrain stage")
            p.add_argument("--critic-steps", type=int, dest="critic_steps")
            p.add_argument("--clip-c", type=float, dest="clip_c")
            p.add_argument("--allow-cold-start", action="store_true")

    p = sub.add_parser("eval", help="score a checkpoint on test pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, help="pairs JSONL")
    p.add_argument("--out", default="metrics.json")
    p.add_argument("--csv", help="per-sentence scores CSV")

    p = sub.add_parser("chat", help="interactive REPL against a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--transcript", help="JSONL transcript path")
    p.add_argument("--fallback", default=None)

    p = sub.add_parser("serve", help="HTTP inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8007)
    p.add_argument("--max-sessions", type=int, dest="max_sessions", default=8)

    return parser


def _require_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return p


def _cmd_prepare_data(args) -> int:
    from .data import ParseStats, parse_chitchat, parse_cornell, write_pairs_jsonl

    stats = ParseStats()
    if args.chitchat:
        pairs = parse_chitchat(_require_file(args.chitchat), stats)
    elif args.cornell_lines and args.cornell_conversations:
        pairs = parse_cornell(_require_file(args.cornell_lines),
                              _require_file(args.cornell_conversations), stats)
    else:
        print("prepare-data needs --chitchat or both --cornell-* paths", file=sys.stderr)
        return EXIT_USAGE
    n = write_pairs_jsonl(pairs, args.out)
    print(f"wrote {n} pairs to {args.out} "
          f"(conversations={stats.conversations}, utterances={stats.utterances}, "
          f"skipped={stats.skipped_missing_line + stats.skipped_malformed})")
    return EXIT_OK


def _cmd_build_vocab(args, cfg) -> int:
    from .data import Vocab, read_pairs_jsonl, split_pairs, tokenize

    pairs = read_pairs_jsonl(_require_file(args.pairs))
    train, _ = split_pairs(pairs, cfg["test_split"], cfg["seed"])
    texts = []
    for p in train:
        texts.append(tokenize(p.question))
        texts.append(tokenize(p.answer))
    vocab = Vocab.build(texts, min_frequency=cfg["min_frequency"],
                        max_size=cfg["vocab_max_size"])
    vocab.save(args.out)
    print(f"vocabulary of {len(vocab)} tokens written to {args.out}")
    return EXIT_OK


def _load_corpus(args, cfg):
    from .data import prepare_corpus, read_pairs_jsonl

    pairs = read_pairs_jsonl(_require_file(args.pairs))
    return prepare_corpus(pairs, cfg["max_len"], cfg["batch_size"], cfg["seed"],
                          test_fraction=cfg["test_split"],
                          min_frequency=cfg["min_frequency"],
                          max_size=cfg["vocab_max_size"])


def _train_config(cfg, **overrides):
    from .training import TrainConfig

    base = dict(
        pretrain_epochs=cfg["pretrain_epochs"],
        adv_epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        critic_steps_k=cfg["critic_steps"],
        clip_c=cfg["clip_c"],
        lr=cfg["learning_rate"],
        seed=cfg["seed"],
    )
    base.update(overrides)
    return TrainConfig(**base)


def _cmd_pretrain(args, cfg) -> int:
    from .checkpoint import load_checkpoint, save_checkpoint
    from .generator import GeneratorConfig, GeneratorModel
    from .training import pretrain

    batches, _, vocab = _load_corpus(args, cfg)
    if args.checkpoint:
        bundle = load_checkpoint(_require_file(args.checkpoint))
        generator, vocab = bundle.generator, bundle.vocab
    else:
        generator = GeneratorModel(GeneratorConfig(
            vocab_size=len(vocab), n_layers=cfg["n_layers"], n_heads=cfg["n_heads"],
            d_model=cfg["d_model"], embed_dim=cfg["embed_dim"], max_len=cfg["max_len"],
            dropout=cfg["dropout"], gumbel_temperature=cfg["gumbel_temperature"],
        ), seed=cfg["seed"])
    config = _train_config(cfg)
    state = pretrain(generator, batches, config, vocab=vocab)
    save_checkpoint(args.out, generator=generator, train_config=config,
                    vocab=vocab, state=state)
    if args.history_csv:
        state.history_csv(args.history_csv)
    last = state.history[-1].loss_g if state.history else float("nan")
    print(f"pretrained {state.epoch} epochs, final MLE loss {last:.4f}; saved {args.out}")
    return EXIT_OK


def _cmd_train_adv(args, cfg) -> int:
    from .checkpoint import load_checkpoint, save_checkpoint
    from .critic import CriticConfig, CriticModel
    from .training import PhaseOrderError, TrainState, adversarial_epoch

    batches, _, vocab = _load_corpus(args, cfg)
    state = TrainState(rng=np.random.default_rng(cfg["seed"]))
    critic = None
    if args.pretrain_checkpoint:
        bundle = load_checkpoint(_require_file(args.pretrain_checkpoint))
        generator, vocab, critic = bundle.generator, bundle.vocab, bundle.critic
        state.pretrained = bool(bundle.state_info.get("pretrained", True))
        state.epoch = int(bundle.state_info.get("epoch", 0))
    elif args.allow_cold_start:
        from .generator import GeneratorConfig, GeneratorModel

        generator = GeneratorModel(GeneratorConfig(
            vocab_size=len(vocab), n_layers=cfg["n_layers"], n_heads=cfg["n_heads"],
            d_model=cfg["d_model"], embed_dim=cfg["embed_dim"], max_len=cfg["max_len"],
            dropout=cfg["dropout"], gumbel_temperature=cfg["gumbel_temperature"],
        ), seed=cfg["seed"])
    else:
        raise PhaseOrderError(
            "train-adv needs --pretrain-checkpoint or --allow-cold-start"
        )
    if critic is None:
        gc = generator.config
        critic = CriticModel(CriticConfig(
            vocab_size=gc.vocab_size, n_layers=gc.n_layers, n_heads=gc.n_heads,
            d_model=gc.d_model, embed_dim=gc.embed_dim, max_len=gc.max_len,
            dropout=gc.dropout,
        ), seed=cfg["seed"] + 1)
    config = _train_config(cfg, allow_cold_start=args.allow_cold_start)
    for _ in range(config.adv_epochs):
        state = adversarial_epoch(generator, critic, batches, config, state, vocab=vocab)
    save_checkpoint(args.out, generator=generator, critic=critic,
                    train_config=config, vocab=vocab, state=state)
    if args.history_csv:
        state.history_csv(args.history_csv)
    print(f"adversarial training done at epoch {state.epoch}; saved {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import read_pairs_jsonl
    from .metrics import evaluate_corpus

    bundle = load_checkpoint(_require_file(args.checkpoint))
    pairs = read_pairs_jsonl(_require_file(args.test))
    report = evaluate_corpus(bundle.generator, pairs, bundle.vocab,
                             corpus_name=Path(args.test).stem)
    report.write(args.out, args.csv)
    print(report.to_json())
    return EXIT_OK


def chat_repl(checkpoint_path, transcript_path=None, fallback=None,
              input_fn=input, output_fn=print, session_id=None) -> int:
    """Line-oriented chat loop; `/quit` exits, empty lines re-prompt."""
    from .checkpoint import load_checkpoint
    from .data import TokenSequence, detokenize, tokenize

    bundle = load_checkpoint(_require_file(checkpoint_path))
    generator, vocab = bundle.generator, bundle.vocab
    fallback = fallback if fallback is not None else DEFAULT_FALLBACK
    session = session_id or uuid.uuid4().hex[:12]
    transcript = open(transcript_path, "a", encoding="utf-8") if transcript_path else None
    output_fn(f"chat session {session} (/quit to exit)")
    try:
        while True:
            try:
                line = input_fn("> ")
            except EOFError:
                break
            if line is None:
                break
            text = line.strip()
            if not text:
                continue
            if text == "/quit":
                break
            t0 = time.perf_counter()
            seq = TokenSequence.wrap(vocab.encode(tokenize(text)), generator.config.max_len)
            out = generator.infer(seq)
            tokens = vocab.decode(out.payload())
            reply = detokenize(tokens) if tokens else fallback
            latency_ms = (time.perf_counter() - t0) * 1000.0
            output_fn(reply)
            if transcript:
                transcript.write(json.dumps({
                    "session_id": session,
                    "user_text": text,
                    "bot_text": reply,
                    "token_count": len(tokens),
                    "latency_ms": latency_ms,
                }) + "\n")
                transcript.flush()
    finally:
        if transcript:
            transcript.close()
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import RuntimeConfig, serve

    _require_file(args.checkpoint)
    serve(RuntimeConfig(checkpoint=args.checkpoint, host=args.host, port=args.port,
                        max_sessions=args.max_sessions))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if args.float64:
        from .tensor import set_default_dtype

        set_default_dtype(np.float64)
    try:
        cfg = _merged_config(args)
        if args.dump_config:
            for key in CONFIG_DEFAULTS:
                print(f"{key} = {cfg[key]}")
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.command == "prepare-data":
            return _cmd_prepare_data(args)
        if args.command == "build-vocab":
            return _cmd_build_vocab(args, cfg)
        if args.command == "pretrain":
            return _cmd_pretrain(args, cfg)
        if args.command == "train-adv":
            return _cmd_train_adv(args, cfg)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "chat":
            return chat_repl(args.checkpoint, args.transcript, args.fallback)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except Exception as e:
        from .checkpoint import CheckpointError
        from .training import PhaseOrderError

        if isinstance(e, (CheckpointError, PhaseOrderError)):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_BAD_CHECKPOINT
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

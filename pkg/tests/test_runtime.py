"""Runtime surface tests: CLI lifecycle and exit codes, REPL behavior, and
the HTTP service contract."""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import requests

import chatgan.data as D
from chatgan.checkpoint import save_checkpoint
from chatgan.cli import chat_repl, main, parse_config_file
from chatgan.server import RuntimeConfig, start_server


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    import chatgan as cg

    pairs = [D.DialoguePair(f"w{i % 4} w{(i + 1) % 4}", f"w{(i + 2) % 4}")
             for i in range(8)]
    texts = [D.tokenize(p.question) for p in pairs] + [D.tokenize(p.answer) for p in pairs]
    vocab = D.Vocab.build(texts, min_frequency=1, max_size=20)
    gen = cg.GeneratorModel(cg.GeneratorConfig(
        vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=16,
        embed_dim=16, max_len=8, dropout=0.0), seed=0)
    path = tmp_path_factory.mktemp("rt") / "tiny.ckpt"
    save_checkpoint(path, generator=gen, vocab=vocab)
    return str(path), pairs


def _weights_digest(generator) -> str:
    h = hashlib.sha256()
    for name, t in sorted(generator.named_parameters().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()


# CLI -----------------------------------------------------------------------


def test_dump_config_matches_published_defaults(capsys):
    assert main(["--dump-config"]) == 0
    parsed = {}
    for line in capsys.readouterr().out.splitlines():
        key, val = line.split(" = ")
        parsed[key] = val
    assert float(parsed["learning_rate"]) == 0.00005
    assert int(parsed["batch_size"]) == 64
    assert int(parsed["epochs"]) == 400
    assert float(parsed["dropout"]) == 0.5
    assert int(parsed["n_layers"]) == 8
    assert int(parsed["n_heads"]) == 16
    assert int(parsed["max_len"]) == 30
    assert float(parsed["test_split"]) == 0.2
    assert int(parsed["embed_dim"]) == 768


def test_unknown_flag_exits_2():
    assert main(["--no-such-flag"]) == 2
    assert main(["eval", "--bogus"]) == 2


def test_no_subcommand_exits_2():
    assert main([]) == 2


def test_missing_file_exits_3(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"),
                 "--test", str(tmp_path / "nope.jsonl")]) == 3


def test_train_adv_without_pretrain_checkpoint_exits_4(tmp_path):
    pairs_path = tmp_path / "pairs.jsonl"
    D.write_pairs_jsonl([D.DialoguePair("w0", "w1")] * 4, pairs_path)
    code = main(["train-adv", "--pairs", str(pairs_path),
                 "--out", str(tmp_path / "x.ckpt"), "--min-frequency", "1"])
    assert code == 4


def test_incompatible_checkpoint_exits_4(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"JUNKJUNKJUNK")
    pairs_path = tmp_path / "pairs.jsonl"
    D.write_pairs_jsonl([D.DialoguePair("w0", "w1")] * 4, pairs_path)
    assert main(["eval", "--checkpoint", str(bad), "--test", str(pairs_path)]) == 4


def test_config_file_merging_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("learning_rate = 0.001\nbatch_size = 8  # comment\n")
    values = parse_config_file(cfg)
    assert values == {"learning_rate": 0.001, "batch_size": 8}
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope = 1")
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config_file(bad)


def test_prepare_data_cornell_and_vocab_cli(tmp_path, capsys):
    lines = tmp_path / "lines.txt"
    convs = tmp_path / "convs.txt"
    lines.write_text("L1 +++$+++ u0 +++$+++ m0 +++$+++ A +++$+++ Hi there\n"
                     "L2 +++$+++ u1 +++$+++ m0 +++$+++ B +++$+++ Hello you\n")
    convs.write_text("u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L1', 'L2']\n")
    out = tmp_path / "pairs.jsonl"
    assert main(["prepare-data", "--cornell-lines", str(lines),
                 "--cornell-conversations", str(convs), "--out", str(out)]) == 0
    assert len(D.read_pairs_jsonl(out)) == 1
    vocab_out = tmp_path / "vocab.txt"
    assert main(["build-vocab", "--pairs", str(out), "--out", str(vocab_out),
                 "--min-frequency", "1", "--test-split", "0.0"]) == 0
    assert vocab_out.read_text().splitlines()[:5] == list(D.RESERVED_TOKENS)


def test_cli_full_mini_lifecycle(tmp_path):
    pairs = [D.DialoguePair(f"w{i % 3} w{(i + 1) % 3}", f"w{(i + 2) % 3}")
             for i in range(10)]
    pairs_path = tmp_path / "pairs.jsonl"
    D.write_pairs_jsonl(pairs, pairs_path)
    ck = tmp_path / "pre.ckpt"
    code = main(["--seed", "3", "pretrain", "--pairs", str(pairs_path),
                 "--out", str(ck), "--pretrain-epochs", "2",
                 "--batch-size", "4", "--min-frequency", "1",
                 "--n-layers", "1", "--n-heads", "2", "--d-model", "16",
                 "--embed-dim", "16", "--max-len", "8",
                 "--learning-rate", "0.001"])
    assert code == 0 and ck.exists()
    adv = tmp_path / "adv.ckpt"
    code = main(["--seed", "3", "train-adv", "--pairs", str(pairs_path),
                 "--out", str(adv), "--pretrain-checkpoint", str(ck),
                 "--epochs", "1", "--critic-steps", "1", "--batch-size", "4",
                 "--min-frequency", "1", "--max-len", "8",
                 "--learning-rate", "0.0001",
                 "--history-csv", str(tmp_path / "h.csv")])
    assert code == 0 and adv.exists()
    assert (tmp_path / "h.csv").read_text().startswith("phase,step,loss_g,loss_c")
    report = tmp_path / "metrics.json"
    code = main(["eval", "--checkpoint", str(adv), "--test", str(pairs_path),
                 "--out", str(report)])
    assert code == 0
    data = json.loads(report.read_text())
    assert set(data) >= {"corpus", "n", "bleu4", "rouge_l", "f_measure", "meteor"}
    assert data["n"] == 10


# REPL ----------------------------------------------------------------------


def _scripted_repl(checkpoint, lines, transcript=None):
    lines = iter(lines)
    outputs = []
    model_calls = []

    def fake_input(prompt):
        try:
            return next(lines)
        except StopIteration:
            raise EOFError

    code = chat_repl(checkpoint, transcript_path=transcript,
                     input_fn=fake_input, output_fn=outputs.append,
                     session_id="s1")
    return code, outputs


def test_repl_quit_exits_cleanly(tiny_checkpoint):
    code, outputs = _scripted_repl(tiny_checkpoint[0], ["/quit"])
    assert code == 0 and len(outputs) == 1  # banner only


def test_repl_empty_line_reprompts_without_model_call(tiny_checkpoint):
    code, outputs = _scripted_repl(tiny_checkpoint[0], ["", "   ", "/quit"])
    assert code == 0 and len(outputs) == 1


def test_repl_echo_model_replies_with_input(trained_copy_model, tmp_path):
    toy = trained_copy_model
    batch = toy.batches[0]
    probe = None
    for i in range(batch.size):
        q = batch.question_seq(i)
        if list(toy.generator.infer(q).payload()) == q.payload():
            probe = " ".join(toy.vocab.decode(q.payload()))
            break
    assert probe is not None, "echo model reproduces no training question exactly"
    transcript = tmp_path / "session.jsonl"
    code, outputs = _scripted_repl(toy.checkpoint_path, [probe, "/quit"],
                                   transcript=str(transcript))
    assert code == 0
    assert outputs[1] == probe
    turn = json.loads(transcript.read_text().splitlines()[0])
    assert turn["user_text"] == probe and turn["bot_text"] == probe
    assert turn["session_id"] == "s1" and turn["token_count"] == len(probe.split())


# HTTP service ---------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_server(tiny_checkpoint):
    server, thread = start_server(RuntimeConfig(checkpoint=tiny_checkpoint[0], port=0))
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield server, base
    server.shutdown()
    server.server_close()


def test_health_endpoint(tiny_server):
    _, base = tiny_server
    r = requests.get(f"{base}/health", timeout=5)
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok" and len(body["checkpoint"]) == 12


def test_info_endpoint_echoes_model_config(tiny_server):
    _, base = tiny_server
    body = requests.get(f"{base}/info", timeout=5).json()
    assert body["model"]["max_len"] == 8 and body["model"]["d_model"] == 16


def test_chat_malformed_bodies_400(tiny_server):
    _, base = tiny_server
    r = requests.post(f"{base}/chat", data=b"{not json", timeout=5)
    assert r.status_code == 400
    r = requests.post(f"{base}/chat", json={"session_id": "s"}, timeout=5)
    assert r.status_code == 400
    r = requests.post(f"{base}/chat", json={"session_id": "s", "message": "  "}, timeout=5)
    assert r.status_code == 400
    r = requests.post(f"{base}/chat", json={"message": "hi"}, timeout=5)
    assert r.status_code == 400


def test_chat_oversized_message_413(tiny_server):
    server, base = tiny_server
    cap = server.service.max_message_chars
    r = requests.post(f"{base}/chat",
                      json={"session_id": "s", "message": "x" * (cap + 1)}, timeout=5)
    assert r.status_code == 413


def test_chat_unknown_path_404(tiny_server):
    _, base = tiny_server
    assert requests.get(f"{base}/nope", timeout=5).status_code == 404
    assert requests.post(f"{base}/nope", json={}, timeout=5).status_code == 404


def test_chat_answers_and_reload_503(tiny_server):
    server, base = tiny_server
    r = requests.post(f"{base}/chat",
                      json={"session_id": "s", "message": "w0 w1"}, timeout=10)
    assert r.status_code == 200
    body = r.json()
    assert set(body) == {"answer", "tokens", "latency_ms"}
    assert isinstance(body["answer"], str) and body["answer"]
    server.service.reloading = True
    try:
        r = requests.post(f"{base}/chat",
                          json={"session_id": "s", "message": "w0"}, timeout=5)
        assert r.status_code == 503
    finally:
        server.service.reloading = False


def test_repl_fallback_when_model_decodes_nothing(tmp_path):
    import chatgan as cg

    vocab = D.Vocab.build([["w0", "w1"] * 3], min_frequency=1, max_size=10)
    gen = cg.GeneratorModel(cg.GeneratorConfig(
        vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=16,
        embed_dim=16, max_len=8, dropout=0.0), seed=0)
    gen.output_head.bias.data[:] = 0
    gen.output_head.bias.data[D.EOS] = 50.0  # immediate EOS: empty decode
    ck = tmp_path / "mute.ckpt"
    save_checkpoint(ck, generator=gen, vocab=vocab)
    code, outputs = _scripted_repl(str(ck), ["w0 w1", "/quit"])
    assert code == 0 and outputs[1] == "i do not know"


def test_repl_and_service_agree_on_same_checkpoint(trained_copy_model):
    toy = trained_copy_model
    message = " ".join(toy.vocab.decode(toy.batches[0].question_seq(3).payload()))
    server, _ = start_server(RuntimeConfig(checkpoint=toy.checkpoint_path, port=0))
    try:
        base = f"http://127.0.0.1:{server.server_address[1]}"
        http_answer = requests.post(
            f"{base}/chat", json={"session_id": "s", "message": message},
            timeout=30).json()["answer"]
    finally:
        server.shutdown()
        server.server_close()
    _, outputs = _scripted_repl(toy.checkpoint_path, [message, "/quit"])
    assert outputs[1] == http_answer


def test_concurrent_chats_match_serial_and_weights_untouched(trained_copy_model):
    toy = trained_copy_model
    server, thread = start_server(RuntimeConfig(checkpoint=toy.checkpoint_path,
                                                port=0, max_sessions=8))
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        digest_before = _weights_digest(server.service.generator)
        messages = [" ".join(toy.vocab.decode(toy.batches[0].question_seq(i).payload()))
                    for i in range(16)]
        serial = [requests.post(f"{base}/chat",
                                json={"session_id": f"serial-{i}", "message": m},
                                timeout=30).json()["answer"]
                  for i, m in enumerate(messages)]

        def ask(i):
            r = requests.post(f"{base}/chat",
                              json={"session_id": f"conc-{i}", "message": messages[i]},
                              timeout=60)
            return r.json()["answer"]

        with ThreadPoolExecutor(max_workers=16) as pool:
            concurrent = list(pool.map(ask, range(16)))
        assert concurrent == serial
        assert _weights_digest(server.service.generator) == digest_before
    finally:
        server.shutdown()
        server.server_close()

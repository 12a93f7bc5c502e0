"""HTTP inference service: a loaded checkpoint served over a small JSON API
(POST /chat, GET /health, GET /info). Weights are shared read-only across a
bounded pool of concurrent decodes."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import tensor as T
from .checkpoint import load_checkpoint
from .data import TokenSequence, detokenize, tokenize

DEFAULT_FALLBACK = "i do not know"


@dataclass
class RuntimeConfig:
    checkpoint: str | Path
    host: str = "127.0.0.1"
    port: int = 8007
    max_sessions: int = 8
    decode_cap: int | None = None     # per-request decode length, <= max_len
    request_timeout: float = 30.0
    fallback_text: str = DEFAULT_FALLBACK

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ValueError(f"invalid port {self.port}")
        if self.max_sessions <= 0:
            raise ValueError("max_sessions must be positive")
        if self.decode_cap is not None and self.decode_cap <= 0:
            raise ValueError("decode_cap must be positive")


class ChatService:
    """Checkpointed generator behind a concurrency-bounded answer() call."""

    def __init__(self, config: RuntimeConfig):
        bundle = load_checkpoint(config.checkpoint)
        self.config = config
        self.generator = bundle.generator
        self.vocab = bundle.vocab
        self.checkpoint_id = bundle.checksum[:12]
        max_len = self.generator.config.max_len
        self.decode_cap = min(config.decode_cap or max_len, max_len)
        self.max_message_chars = max_len * 8
        self.reloading = False
        self._slots = threading.BoundedSemaphore(config.max_sessions)

    def answer(self, message: str) -> dict:
        t0 = time.perf_counter()
        ids = self.vocab.encode(tokenize(message))
        seq = TokenSequence.wrap(ids, self.generator.config.max_len)
        out = self.generator.infer(seq, self.decode_cap)
        tokens = self.vocab.decode(out.payload())
        text = detokenize(tokens) if tokens else self.config.fallback_text
        return {
            "answer": text,
            "tokens": len(tokens),
            "latency_ms": (time.perf_counter() - t0) * 1000.0,
        }

    def try_acquire(self) -> bool:
        return self._slots.acquire(timeout=self.config.request_timeout)

    def release(self) -> None:
        self._slots.release()


def _make_handler(service: ChatService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet by default
            pass

        def _send(self, code: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/health":
                self._send(200, {"status": "ok", "checkpoint": service.checkpoint_id})
            elif self.path == "/info":
                import dataclasses

                self._send(200, {
                    "checkpoint": service.checkpoint_id,
                    "model": dataclasses.asdict(service.generator.config),
                    "vocab_size": len(service.vocab),
                    "decode_cap": service.decode_cap,
                })
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/chat":
                self._send(404, {"error": "not found"})
                return
            if service.reloading:
                self._send(503, {"error": "checkpoint reloading"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
                if not isinstance(payload, dict):
                    raise ValueError("body must be a JSON object")
                message = payload["message"]
                session_id = payload["session_id"]
                if not isinstance(message, str) or not message.strip():
                    raise ValueError("message must be a non-empty string")
                if not isinstance(session_id, str):
                    raise ValueError("session_id must be a string")
            except (KeyError, ValueError, UnicodeDecodeError, json.JSONDecodeError) as e:
                self._send(400, {"error": f"malformed body: {e}"})
                return
            if len(message) > service.max_message_chars:
                self._send(413, {
                    "error": f"message exceeds {service.max_message_chars} characters"
                })
                return
            if not service.try_acquire():
                self._send(503, {"error": "decode queue timeout"})
                return
            try:
                self._send(200, service.answer(message))
            finally:
                service.release()

    return Handler


def make_server(config: RuntimeConfig) -> ThreadingHTTPServer:
    service = ChatService(config)
    server = ThreadingHTTPServer((config.host, config.port), _make_handler(service))
    server.service = service  # exposed for tests and the CLI banner
    return server


def start_server(config: RuntimeConfig) -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Server on a daemon thread; the bound port is server.server_address[1]."""
    server = make_server(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def serve(config: RuntimeConfig) -> None:
    server = make_server(config)
    host, port = server.server_address[:2]
    print(f"serving checkpoint {server.service.checkpoint_id} on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()

"""Reference HTTP scorer service.

Implements the scoring wire protocol with a deterministic mock model so the
whole pipeline can run end to end without any real inference:

    GET  /v1/health -> {"status": "ok", "model": ...}
    GET  /v1/stats  -> {"peak_concurrency": ..., "total_requests": ...}
    POST /v1/score  -> {"results": [{"id", "metric", "raw", "model"}, ...]}

The mock score for (id, metric) is FNV-1a 64 of "{id}:{metric}" modulo 101.
That hash is implemented here from scratch on purpose: clients are expected
to carry their own copy, and the two must agree bit for bit. A real model can
be mounted through the adapter seam instead, a single callable
(prompt, image, max_new_tokens) -> raw text.
"""

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

METRICS = ("itm", "odf", "ctq", "su")

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211
_U64 = 0xFFFFFFFFFFFFFFFF

MOCK_MODEL_NAME = "mock-fnv"


class BindError(Exception):
    pass


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _U64
    return h


def mock_score(pair_id: str, metric: str) -> tuple:
    """Deterministic (score, raw text) for a pair and metric.

    The raw text has the score-first shape: value line, then a rationale.
    """
    score = fnv1a64(f"{pair_id}:{metric}".encode("utf-8")) % 101
    return score, f"{score}\nMock rationale."


def truncate_tokens(text: str, max_tokens: int) -> str:
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787          # 0 picks an ephemeral port
    model: str = "mock"       # "mock" | "adapter"
    latency_ms: int = 0       # artificial per-call latency, for concurrency tests
    adapter: Callable | None = None  # (prompt, image, max_new_tokens) -> raw text
    model_name: str | None = None

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ValueError(f"invalid port {self.port}")
        if self.latency_ms < 0:
            raise ValueError("latency must be nonnegative")
        if self.model not in ("mock", "adapter"):
            raise ValueError(f"model must be 'mock' or 'adapter', got {self.model!r}")
        if self.model == "adapter" and self.adapter is None:
            raise ValueError("adapter model requires an adapter callable")


class _BadRequest(Exception):
    pass


def _validate_request(obj) -> list:
    if not isinstance(obj, dict) or not isinstance(obj.get("requests"), list):
        raise _BadRequest("body must be an object with a 'requests' list")
    out = []
    for i, req in enumerate(obj["requests"]):
        if not isinstance(req, dict):
            raise _BadRequest(f"requests[{i}] must be an object")
        pair_id = req.get("id")
        metric = req.get("metric")
        if not isinstance(pair_id, str) or not pair_id:
            raise _BadRequest(f"requests[{i}].id must be a nonempty string")
        if metric not in METRICS:
            raise _BadRequest(f"requests[{i}].metric must be one of {METRICS}")
        prompt = req.get("prompt", "")
        if not isinstance(prompt, str):
            raise _BadRequest(f"requests[{i}].prompt must be a string")
        max_new_tokens = req.get("max_new_tokens", 4)
        if not isinstance(max_new_tokens, int) or isinstance(max_new_tokens, bool) or max_new_tokens < 1:
            raise _BadRequest(f"requests[{i}].max_new_tokens must be a positive integer")
        out.append((pair_id, metric, prompt, req.get("image"), max_new_tokens))
    return out


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send_json(200, {"status": "ok", "model": self.server.model_name})
        elif self.path == "/v1/stats":
            self._send_json(
                200,
                {
                    "peak_concurrency": self.server.peak_concurrency,
                    "total_requests": self.server.total_requests,
                },
            )
        else:
            self._send_json(404, {"error": "NotFound", "message": self.path})

    def do_POST(self):
        if self.path != "/v1/score":
            self._send_json(404, {"error": "NotFound", "message": self.path})
            return
        with self.server.track_inflight():
            try:
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length))
                except (json.JSONDecodeError, UnicodeDecodeError) as e:
                    raise _BadRequest(f"invalid JSON: {e}")
                requests = _validate_request(body)
            except _BadRequest as e:
                self._send_json(400, {"error": "BadRequest", "message": str(e)})
                return

            cfg = self.server.config
            if cfg.latency_ms:
                time.sleep(cfg.latency_ms / 1000.0)
            results = []
            for pair_id, metric, prompt, image, max_new_tokens in requests:
                if cfg.model == "adapter":
                    raw = cfg.adapter(prompt, image, max_new_tokens)
                else:
                    _, raw = mock_score(pair_id, metric)
                results.append(
                    {
                        "id": pair_id,
                        "metric": metric,
                        "raw": truncate_tokens(raw, max_new_tokens),
                        "model": self.server.model_name,
                    }
                )
            self._send_json(200, {"results": results})


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, config: ServiceConfig):
        super().__init__(addr, _Handler)
        self.config = config
        self.model_name = config.model_name or (MOCK_MODEL_NAME if config.model == "mock" else "adapter")
        self.peak_concurrency = 0
        self.total_requests = 0
        self._inflight = 0
        self._stats_lock = threading.Lock()

    def track_inflight(self):
        server = self

        class _Tracker:
            def __enter__(self):
                with server._stats_lock:
                    server._inflight += 1
                    server.total_requests += 1
                    server.peak_concurrency = max(server.peak_concurrency, server._inflight)

            def __exit__(self, *exc):
                with server._stats_lock:
                    server._inflight -= 1

        return _Tracker()


class ScorerService:
    """A running service; close() shuts it down."""

    def __init__(self, config: ServiceConfig):
        try:
            self._server = _Server((config.host, config.port), config)
        except OSError as e:
            raise BindError(f"cannot bind {config.host}:{config.port}: {e}") from e
        self.config = config
        self.host, self.port = self._server.server_address[:2]
        self.url = f"http://{self.host}:{self.port}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def peak_concurrency(self) -> int:
        return self._server.peak_concurrency

    @property
    def total_requests(self) -> int:
        return self._server.total_requests

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "ScorerService":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve(config: ServiceConfig = ServiceConfig()) -> ScorerService:
    """Start the service in a background thread and return its handle."""
    return ScorerService(config)

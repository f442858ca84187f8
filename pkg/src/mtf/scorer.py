"""Assemble metric prompts, call a scorer backend, and parse integer scores.

Backends speak one contract: a list of score requests in, one raw generation
per request out. `HttpScorerBackend` talks to a remote endpoint over the JSON
wire protocol; `MockScorerBackend` is an in-process deterministic stand-in
that any remote mock must agree with bit-for-bit.
"""

import math
import random
import re
import struct
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Iterable, Iterator

import httpx
import numpy as np

from .core import (
    ImageRef,
    ImageTextPair,
    Metric,
    MtfError,
    QualityScore,
    ScoreRecord,
)
from .ingest import ProgressLog, completed_ids_in_score_file, score_record_line
from .prompts import MODE_SUFFIXES, PROMPT_BODIES, Mode, TeacherPath


class MissingDenseCaption(MtfError):
    pass


class NoScoreFound(MtfError):
    pass


class OutOfRange(MtfError):
    def __init__(self, value: int):
        super().__init__(f"score {value} outside [0, 100]")
        self.value = value


class EndpointUnreachable(MtfError):
    pass


class ScoreFailed(MtfError):
    def __init__(self, pair_id: str, metric, cause: str):
        super().__init__(f"scoring {pair_id!r} ({metric}) failed: {cause}")
        self.pair_id = pair_id
        self.metric = metric
        self.cause = cause


class DimensionMismatch(MtfError):
    pass


class ZeroVector(MtfError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    metric: Metric
    body: str
    mode: Mode
    suffix: str


def template_for(metric: Metric, mode: Mode = Mode.RATIONALIZATION) -> PromptTemplate:
    return PromptTemplate(metric=metric, body=PROMPT_BODIES[metric], mode=mode, suffix=MODE_SUFFIXES[mode])


def assemble_prompt(
    metric: Metric,
    pair: ImageTextPair,
    mode: Mode = Mode.RATIONALIZATION,
    teacher_path: TeacherPath = TeacherPath.VISION,
) -> str:
    """Fixed layout: body, [image description,] caption, mode suffix.

    The text-only path labels the pair's dense caption as the image
    description; it is an error to take that path without one.
    """
    template = template_for(metric, mode)
    parts = [template.body]
    if teacher_path is TeacherPath.TEXT_ONLY:
        if not pair.dense_caption:
            raise MissingDenseCaption(f"pair {pair.id!r} has no dense caption for the text-only path")
        parts.append(f"Image Description: {pair.dense_caption}")
    parts.append(f"Caption: {pair.caption}")
    parts.append(template.suffix)
    return "\n\n".join(parts)


_INT_TOKEN = re.compile(r"\d+")


def parse_score(raw: str, mode: Mode = Mode.RATIONALIZATION) -> QualityScore:
    """Extract the integer score from a generation.

    Rationalization output carries the value on the first nonempty line; CoT
    output carries it on the last line, so lines are scanned bottom-up until
    one holds an integer token. The first maximal digit run on the decisive
    line is the score ("Score: 92" and "92/100" both parse as 92).
    """
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if mode is Mode.RATIONALIZATION:
        candidates = lines[:1]
    else:
        candidates = [ln for ln in reversed(lines) if _INT_TOKEN.search(ln)][:1]
    for line in candidates:
        m = _INT_TOKEN.search(line)
        if m:
            value = int(m.group())
            if value > 100:
                raise OutOfRange(value)
            return QualityScore(value)
    raise NoScoreFound(f"no integer score in {raw!r}")


# ---------------------------------------------------------------------------
# Deterministic mock contract (FNV-1a 64)
# ---------------------------------------------------------------------------

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _U64
    return h


def mock_quality_score(pair_id: str, metric: Metric) -> QualityScore:
    """The shared mock contract: FNV-1a 64 of "{id}:{metric}" modulo 101."""
    return QualityScore(fnv1a64(f"{pair_id}:{metric.value}".encode("utf-8")) % 101)


def truncate_tokens(text: str, max_tokens: int) -> str:
    """Crude early-stop: keep at most `max_tokens` whitespace-delimited tokens."""
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 1.0
    multiplier: float = 2.0
    jitter: float = 0.2

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = self.base_delay * self.multiplier**attempt
        return base * (1.0 + rng.uniform(-self.jitter, self.jitter))


@dataclass(frozen=True)
class ScoreRequest:
    pair_id: str
    metric: Metric
    prompt: str
    image_ref: ImageRef = ImageRef()
    max_new_tokens: int = 4
    timeout: float = 30.0
    attempt: int = 0

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")

    def to_json(self) -> dict:
        return {
            "id": self.pair_id,
            "metric": self.metric.value,
            "prompt": self.prompt,
            "image": self.image_ref.to_json(),
            "max_new_tokens": self.max_new_tokens,
        }


@dataclass(frozen=True)
class ScorerEndpoint:
    base_url: str
    concurrency: int = 4
    retry: RetryPolicy = RetryPolicy()
    auth_token: str | None = None
    timeout: float = 30.0

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValueError("concurrency limit must be >= 1")


class MockScorerBackend:
    """In-process stub with the same deterministic contract as the mock service."""

    model_name = "mock-fnv"

    def health(self) -> None:
        pass

    def score_requests(self, requests: list) -> list:
        out = []
        for req in requests:
            score = mock_quality_score(req.pair_id, req.metric)
            out.append(truncate_tokens(f"{score}\nMock rationale.", req.max_new_tokens))
        return out

    def close(self) -> None:
        pass


class HttpScorerBackend:
    """Client for the JSON wire protocol: GET /v1/health, POST /v1/score."""

    def __init__(self, endpoint: ScorerEndpoint):
        self.endpoint = endpoint
        self.model_name = endpoint.base_url
        headers = {}
        if endpoint.auth_token:
            headers["Authorization"] = f"Bearer {endpoint.auth_token}"
        self._client = httpx.Client(
            base_url=endpoint.base_url.rstrip("/"),
            headers=headers,
            timeout=endpoint.timeout,
        )

    def health(self) -> None:
        try:
            resp = self._client.get("/v1/health")
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as e:
            raise EndpointUnreachable(f"{self.endpoint.base_url}: {e}") from e
        if body.get("status") != "ok":
            raise EndpointUnreachable(f"{self.endpoint.base_url}: status {body.get('status')!r}")
        self.model_name = body.get("model", self.model_name)

    def score_requests(self, requests: list) -> list:
        payload = {"requests": [r.to_json() for r in requests]}
        timeout = max(r.timeout for r in requests)
        resp = self._client.post("/v1/score", json=payload, timeout=timeout)
        resp.raise_for_status()
        results = resp.json()["results"]
        by_key = {(r["id"], r["metric"]): r["raw"] for r in results}
        return [by_key[(r.pair_id, r.metric.value)] for r in requests]

    def close(self) -> None:
        self._client.close()


def backend_for(endpoint) -> "MockScorerBackend | HttpScorerBackend":
    """Build a backend from a ScorerEndpoint or a URL; "mock:" is the stub."""
    if isinstance(endpoint, str):
        endpoint = ScorerEndpoint(base_url=endpoint)
    if endpoint.base_url.startswith("mock:"):
        return MockScorerBackend()
    return HttpScorerBackend(endpoint)


# ---------------------------------------------------------------------------
# Batch scoring
# ---------------------------------------------------------------------------


def score_batch(
    pairs: Iterable[ImageTextPair],
    metrics: Iterable[Metric],
    backend,
    *,
    concurrency: int = 4,
    mode: Mode = Mode.RATIONALIZATION,
    max_new_tokens: int = 4,
    timeout: float = 30.0,
    retry: RetryPolicy = RetryPolicy(),
    log: ProgressLog | None = None,
    on_failure: str = "abort",  # "abort" | "quarantine"
    reject_log: ProgressLog | None = None,
) -> Iterator[ScoreRecord]:
    """Score every pair on every metric with at most `concurrency` requests in flight.

    Records are yielded as they complete, so output order may differ from
    input order. A pair's id is appended to the progress log only once all of
    its metrics parsed successfully. Failures exhaust the retry policy and
    then either abort the run or quarantine the pair id, per `on_failure`.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    if on_failure not in ("abort", "quarantine"):
        raise ValueError(f"on_failure must be 'abort' or 'quarantine', got {on_failure!r}")
    metrics = tuple(metrics)
    if not metrics:
        raise ValueError("need at least one metric")

    backend.health()  # EndpointUnreachable before any scoring request

    return _score_batch_iter(
        pairs, metrics, backend, concurrency, mode, max_new_tokens, timeout,
        retry, log, on_failure, reject_log,
    )


def _score_batch_iter(
    pairs, metrics, backend, concurrency, mode, max_new_tokens, timeout,
    retry, log, on_failure, reject_log,
) -> Iterator[ScoreRecord]:
    rng = random.Random()

    def score_one(pair: ImageTextPair) -> ScoreRecord:
        requests = [
            ScoreRequest(
                pair_id=pair.id,
                metric=m,
                prompt=assemble_prompt(m, pair, mode),
                image_ref=pair.image,
                max_new_tokens=max_new_tokens,
                timeout=timeout,
            )
            for m in metrics
        ]
        last_error = None
        for attempt in range(retry.max_attempts):
            if attempt:
                time.sleep(retry.delay(attempt - 1, rng))
            current = metrics[0]
            try:
                raws = backend.score_requests(requests)
                scores = {}
                for req, raw in zip(requests, raws):
                    current = req.metric
                    scores[req.metric] = parse_score(raw, mode)
                return ScoreRecord(pair_id=pair.id, scores=scores, provenance=backend.model_name)
            except (MtfError, httpx.HTTPError, KeyError, ValueError) as e:
                last_error = ScoreFailed(pair.id, current, str(e))
        raise last_error

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        pending = set()
        pairs_iter = iter(pairs)
        # Keep the submission window small so huge pools stream instead of
        # materializing one future per pair up front.
        window = max(concurrency * 4, 8)

        def drain(done):
            for fut in done:
                try:
                    record = fut.result()
                except ScoreFailed as e:
                    if on_failure == "abort":
                        raise
                    if reject_log is not None:
                        reject_log.append(e.pair_id)
                    continue
                if log is not None:
                    log.append(record.pair_id)
                yield record

        try:
            while True:
                while len(pending) < window:
                    pair = next(pairs_iter, None)
                    if pair is None:
                        break
                    pending.add(pool.submit(score_one, pair))
                if not pending:
                    break
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                yield from drain(done)
        except ScoreFailed:
            for fut in pending:
                fut.cancel()
            raise
    if log is not None:
        log.flush()
    if reject_log is not None:
        reject_log.flush()


@dataclass
class ScoreRunSummary:
    written: int
    skipped: int
    out_path: str


def score_to_file(
    pairs,
    metrics,
    backend,
    out_path,
    *,
    resume: bool = False,
    log_path=None,
    flush_every: int = 64,
    **batch_kwargs,
) -> ScoreRunSummary:
    """Score a pool and write records to `out_path` in input order.

    Completed records are reordered through a small buffer so the file always
    holds a prefix of the full input-order output; a killed run resumed with
    `resume=True` therefore appends the missing suffix and reproduces the
    uninterrupted file byte for byte. On resume the score file itself is the
    source of truth for what finished (the progress log may run ahead of it).
    """
    pairs = list(pairs)
    out_path = str(out_path)

    completed = completed_ids_in_score_file(out_path) if resume else set()
    todo = [p for p in pairs if p.id not in completed]
    index = {p.id: i for i, p in enumerate(todo)}
    if len(index) != len(todo):
        raise ValueError("pair ids must be unique within a scoring run")

    log = ProgressLog(log_path, flush_every=flush_every) if log_path else None
    buffer: dict = {}
    next_idx = 0
    written = 0
    mode = "a" if (resume and completed) else "w"
    try:
        with open(out_path, mode, encoding="utf-8") as out:
            for record in score_batch(todo, metrics, backend, log=log, **batch_kwargs):
                buffer[index[record.pair_id]] = record
                while next_idx in buffer:
                    out.write(score_record_line(buffer.pop(next_idx)) + "\n")
                    next_idx += 1
                    written += 1
                    if written % flush_every == 0:
                        out.flush()
                        if log is not None:
                            log.flush()
    finally:
        if log is not None:
            log.close()
    return ScoreRunSummary(written=written, skipped=len(pairs) - len(todo), out_path=out_path)


# ---------------------------------------------------------------------------
# Embedding-cosine baseline
# ---------------------------------------------------------------------------


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatch(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_score(u, v) -> QualityScore:
    """Cosine similarity mapped onto the 0-100 integer scale.

    Negative similarity clamps to 0; rounding is half-away-from-zero so the
    baseline lands on the same integer grid as model scores.
    """
    c = max(0.0, cosine_similarity(u, v))
    return QualityScore(int(math.floor(100.0 * c + 0.5)))


EMBEDDING_MAGIC = b"MTEB"
EMBEDDING_VERSION = 1


@dataclass
class EmbeddingTable:
    """Per-pair (image, text) embedding vectors of one shared dimension."""

    ids: list
    image: np.ndarray  # (n, d) float32
    text: np.ndarray   # (n, d) float32

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float32)
        self.text = np.asarray(self.text, dtype=np.float32)
        n = len(self.ids)
        if self.image.shape != self.text.shape or self.image.shape[0] != n:
            raise DimensionMismatch(
                f"need matching (n, d) arrays for {n} ids, got {self.image.shape} and {self.text.shape}"
            )
        if not (np.isfinite(self.image).all() and np.isfinite(self.text).all()):
            raise ValueError("embedding vectors must be finite")

    @property
    def dim(self) -> int:
        return int(self.image.shape[1])

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(EMBEDDING_MAGIC)
            f.write(struct.pack("<IIQ", EMBEDDING_VERSION, self.dim, len(self.ids)))
            for i, pair_id in enumerate(self.ids):
                raw = pair_id.encode("utf-8")
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
                f.write(self.image[i].astype("<f4").tobytes())
                f.write(self.text[i].astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != EMBEDDING_MAGIC:
                raise ValueError(f"bad magic {magic!r}")
            version, d, n = struct.unpack("<IIQ", f.read(16))
            if version != EMBEDDING_VERSION:
                raise ValueError(f"unsupported version {version}")
            ids = []
            image = np.empty((n, d), dtype=np.float32)
            text = np.empty((n, d), dtype=np.float32)
            vec_bytes = 4 * d
            for i in range(n):
                (id_len,) = struct.unpack("<H", f.read(2))
                ids.append(f.read(id_len).decode("utf-8"))
                image[i] = np.frombuffer(f.read(vec_bytes), dtype="<f4")
                text[i] = np.frombuffer(f.read(vec_bytes), dtype="<f4")
        return cls(ids=ids, image=image, text=text)

    def cosine_scores(self) -> dict:
        """Image-text cosine score per pair id, on the 0-100 integer scale."""
        return {
            pair_id: cosine_score(self.image[i], self.text[i])
            for i, pair_id in enumerate(self.ids)
        }

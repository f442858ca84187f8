"""Build the instruction-tuning dataset: diversity selection over caption
embeddings, teacher-job emission, score-balanced sampling, and multi-task
mixture assembly.
"""

import json
import random
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .core import ImageRef, ImageTextPair, Metric, MtfError, QualityScore, parse_metric
from .prompts import DENSE_CAPTION_PROMPT, Mode, TeacherPath
from .scorer import assemble_prompt


class TooFewPoints(MtfError):
    pass


class NonFiniteEmbedding(MtfError):
    pass


class InsufficientPool(MtfError):
    def __init__(self, pool: str, have: int, need: int):
        super().__init__(f"pool {pool!r} holds {have} records, need {need}")
        self.pool = pool
        self.have = have
        self.need = need


# ---------------------------------------------------------------------------
# Clustering and centroid-nearest selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterConfig:
    k: int
    seed: int = 0
    max_iters: int = 100
    epsilon: float = 1e-6       # relative objective change that counts as converged
    minibatch: int | None = None  # enable mini-batch updates for very large pools

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    iterations: int
    objective: float
    objective_history: list


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n, k), clipped at zero."""
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centers D^2-proportionally; degenerate weights fall back to the
    smallest unchosen index so duplicate-heavy inputs still get k centers."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    min_d2 = np.einsum("ij,ij->i", points - points[chosen[0]], points - points[chosen[0]])
    while len(chosen) < k:
        total = float(min_d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=min_d2 / total))
        else:
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        chosen.append(idx)
        diff = points - points[idx]
        min_d2 = np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff))
    return points[chosen].copy()


def kmeans_fit(embeddings, cfg: ClusterConfig) -> KMeansResult:
    """Lloyd iterations from a k-means++ seeding until the relative objective
    change drops below cfg.epsilon or cfg.max_iters passes run out.

    Empty clusters (including ones emptied by duplicate centroids) are
    reseeded to the point currently farthest from its assigned centroid, which
    is then force-assigned there; that never increases the objective, so the
    recorded per-iteration objective stays nonincreasing.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"embeddings must be an (n, d) matrix, got shape {points.shape}")
    if not np.isfinite(points).all():
        raise NonFiniteEmbedding("embeddings contain NaN or infinity")
    n = points.shape[0]
    if n < cfg.k:
        raise TooFewPoints(f"{n} points cannot form {cfg.k} clusters")

    rng = np.random.default_rng(cfg.seed)
    if cfg.minibatch:
        return _minibatch_fit(points, cfg, rng)

    centers = _kmeans_pp_init(points, cfg.k, rng)
    history = []
    prev_obj = None
    labels = np.zeros(n, dtype=np.int64)
    for iteration in range(1, cfg.max_iters + 1):
        if iteration > 1:
            for j in range(cfg.k):
                centers[j] = points[labels == j].mean(axis=0)

        d2 = _squared_distances(points, centers)
        labels = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), labels]

        counts = np.bincount(labels, minlength=cfg.k)
        for j in range(cfg.k):
            if counts[j] > 0:
                continue
            # Farthest point that is not its cluster's sole member; distance
            # ties resolve to the smallest index via the stable sort.
            order = np.argsort(-point_d2, kind="stable")
            far = next(int(i) for i in order if counts[labels[i]] > 1)
            counts[labels[far]] -= 1
            counts[j] += 1
            centers[j] = points[far]
            labels[far] = j
            point_d2[far] = 0.0

        objective = float(point_d2.sum())
        history.append(objective)
        if prev_obj is not None:
            scale = max(prev_obj, 1e-300)
            if (prev_obj - objective) / scale <= cfg.epsilon:
                break
        prev_obj = objective

    return KMeansResult(
        centroids=centers,
        labels=labels,
        iterations=len(history),
        objective=history[-1],
        objective_history=history,
    )


def _minibatch_fit(points: np.ndarray, cfg: ClusterConfig, rng: np.random.Generator) -> KMeansResult:
    n = points.shape[0]
    batch = min(cfg.minibatch, n)
    centers = _kmeans_pp_init(points, cfg.k, rng)
    counts = np.zeros(cfg.k, dtype=np.int64)
    for _ in range(cfg.max_iters):
        idx = rng.choice(n, size=batch, replace=False)
        sample = points[idx]
        labels = np.argmin(_squared_distances(sample, centers), axis=1)
        for x, j in zip(sample, labels):
            counts[j] += 1
            centers[j] += (x - centers[j]) / counts[j]
    d2 = _squared_distances(points, centers)
    labels = np.argmin(d2, axis=1)
    objective = float(d2[np.arange(n), labels].sum())
    return KMeansResult(
        centroids=centers,
        labels=labels,
        iterations=cfg.max_iters,
        objective=objective,
        objective_history=[objective],
    )


def representatives_from_fit(embeddings, fit: KMeansResult) -> list:
    """Per cluster, the index of the member nearest its centroid (ties take
    the smallest index). Members are disjoint, so indices are distinct."""
    points = np.asarray(embeddings, dtype=np.float64)
    reps = []
    for j in range(fit.centroids.shape[0]):
        members = np.flatnonzero(fit.labels == j)
        diffs = points[members] - fit.centroids[j]
        d2 = np.einsum("ij,ij->i", diffs, diffs)
        reps.append(int(members[int(np.argmin(d2))]))
    return reps


def cluster_representatives(embeddings, cfg: ClusterConfig) -> list:
    """Cluster the embeddings and keep one centroid-nearest point per cluster."""
    fit = kmeans_fit(embeddings, cfg)
    return representatives_from_fit(embeddings, fit)


# ---------------------------------------------------------------------------
# Teacher jobs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TeacherJob:
    pair_id: str
    path: TeacherPath
    kind: str  # "dense_caption" | "scoring"
    metric: Metric | None = None
    prompt: str | None = None
    image_ref: ImageRef = ImageRef()
    max_new_tokens: int = 512  # teachers keep their rationale; no early stop
    pending: bool = False      # waiting on a prerequisite dense caption

    def to_json(self) -> dict:
        return {
            "id": self.pair_id,
            "metric": self.metric.value if self.metric else None,
            "prompt": self.prompt,
            "image": self.image_ref.to_json(),
            "max_new_tokens": self.max_new_tokens,
            "kind": self.kind,
            "path": self.path.value,
            "pending": self.pending,
        }


def emit_teacher_jobs(
    pairs: Iterable[ImageTextPair],
    metrics: Iterable[Metric],
    path: TeacherPath = TeacherPath.VISION,
    mode: Mode = Mode.RATIONALIZATION,
) -> Iterator[TeacherJob]:
    """One scoring job per (pair, metric). Text-only pairs without a dense
    caption first get a captioning job; their scoring jobs are flagged pending
    until that prerequisite output exists."""
    metrics = tuple(metrics)
    for pair in pairs:
        needs_caption = path is TeacherPath.TEXT_ONLY and not pair.dense_caption
        if needs_caption:
            yield TeacherJob(
                pair_id=pair.id,
                path=path,
                kind="dense_caption",
                prompt=DENSE_CAPTION_PROMPT,
                image_ref=pair.image,
            )
        for m in metrics:
            if needs_caption:
                yield TeacherJob(pair_id=pair.id, path=path, kind="scoring", metric=m, pending=True)
            else:
                yield TeacherJob(
                    pair_id=pair.id,
                    path=path,
                    kind="scoring",
                    metric=m,
                    prompt=assemble_prompt(m, pair, mode, path),
                    image_ref=pair.image,
                )


# ---------------------------------------------------------------------------
# Score-balanced sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    bucket_count: int = 10
    target_size: int = 1000
    downsample_threshold: int = 130
    seed: int = 0

    def __post_init__(self):
        if self.bucket_count not in (10, 100):
            raise ValueError("bucket_count must be 10 or 100")
        if self.target_size < 1:
            raise ValueError("target_size must be positive")
        if self.downsample_threshold < 1:
            raise ValueError("downsample_threshold must be positive")


def bucket_index(score: int, bucket_count: int = 10) -> int:
    """Closed partition of 0..100; score 100 folds into the last bucket."""
    return min(int(score) // (100 // bucket_count), bucket_count - 1)


def balanced_sample(items: Iterable[tuple], cfg: SamplerConfig = SamplerConfig()) -> list:
    """Flatten a skewed score distribution into a near-uniform sample.

    Items are (item, score) tuples. Buckets smaller than the downsample
    threshold are kept whole; each remaining bucket contributes
    floor((target - kept) / large_bucket_count) uniformly sampled items,
    clamped to its size. The concatenation in bucket order is truncated to the
    target, so a shortfall (clamped large buckets) shows up as a short output
    rather than an error.
    """
    buckets: list = [[] for _ in range(cfg.bucket_count)]
    for item, score in items:
        buckets[bucket_index(QualityScore(int(score)), cfg.bucket_count)].append((item, score))

    large = [b for b in buckets if len(b) >= cfg.downsample_threshold]
    kept = sum(len(b) for b in buckets if len(b) < cfg.downsample_threshold)
    per_bucket = max((cfg.target_size - kept) // len(large), 0) if large else 0

    rng = random.Random(cfg.seed)
    selected: list = []
    for b in buckets:
        if len(b) < cfg.downsample_threshold:
            selected.extend(b)
        else:
            selected.extend(rng.sample(b, min(per_bucket, len(b))))
    return selected[: cfg.target_size]


# ---------------------------------------------------------------------------
# Instruction records and the multi-task mixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstructionRecord:
    """A "User: {Prompt} Assistant: {Output}" training example."""

    prompt: str
    output: str
    source: str
    metric: Metric | None = None
    score: int | None = None

    def __post_init__(self):
        if self.score is not None:
            object.__setattr__(self, "score", QualityScore(int(self.score)))

    def to_json(self) -> dict:
        obj = {"prompt": self.prompt, "output": self.output}
        if self.metric is not None:
            obj["metric"] = self.metric.value
        if self.score is not None:
            obj["score"] = int(self.score)
        obj["source"] = self.source
        return obj

    @classmethod
    def from_json(cls, obj) -> "InstructionRecord":
        metric = obj.get("metric")
        return cls(
            prompt=obj["prompt"],
            output=obj["output"],
            source=obj.get("source", ""),
            metric=parse_metric(metric) if metric else None,
            score=obj.get("score"),
        )


def write_instruction_records(records: Iterable[InstructionRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec.to_json(), ensure_ascii=True) + "\n")
            n += 1
    return n


def read_instruction_records(path) -> Iterator[InstructionRecord]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield InstructionRecord.from_json(json.loads(line))


@dataclass(frozen=True)
class MixtureComponent:
    source: str
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("component count must be positive")


@dataclass(frozen=True)
class MixtureSpec:
    pools: tuple
    total: int = 50000

    def __post_init__(self):
        object.__setattr__(self, "pools", tuple(self.pools))
        if sum(p.count for p in self.pools) != self.total:
            raise ValueError("per-source targets must sum to the total")


# The stock 50k mixture: conversation/reasoning/captioning instruction pools,
# language-only chat, VQA-style tasks, and 1k scoring instructions per metric.
DEFAULT_MIXTURE = MixtureSpec(
    pools=(
        MixtureComponent("visual_conversation", 5000),
        MixtureComponent("complex_reasoning", 16000),
        MixtureComponent("detail_description", 5000),
        MixtureComponent("sharegpt", 10000),
        MixtureComponent("vqav2", 2000),
        MixtureComponent("gqa", 3000),
        MixtureComponent("okvqa", 2000),
        MixtureComponent("ocrvqa", 1000),
        MixtureComponent("textcaption", 2000),
        MixtureComponent("itm_scoring", 1000),
        MixtureComponent("odf_scoring", 1000),
        MixtureComponent("ctq_scoring", 1000),
        MixtureComponent("su_scoring", 1000),
    ),
    total=50000,
)


def assemble_mixture(spec: MixtureSpec, pools: dict, seed: int = 0) -> list:
    """Sample each pool to its target count without replacement and shuffle.

    Every pool must hold at least its target; short pools raise
    InsufficientPool before anything is sampled.
    """
    for comp in spec.pools:
        have = len(pools.get(comp.source, ()))
        if have < comp.count:
            raise InsufficientPool(comp.source, have, comp.count)

    rng = random.Random(seed)
    mixed: list = []
    for comp in spec.pools:
        mixed.extend(rng.sample(pools[comp.source], comp.count))
    rng.shuffle(mixed)
    return mixed

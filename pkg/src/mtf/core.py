"""Shared domain types, identifiers, and validation used across the pipeline."""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum


class MtfError(Exception):
    """Base class for every error raised by this package."""


class UnknownMetric(MtfError):
    pass


class EmptyId(MtfError):
    pass


class EmptyCaption(MtfError):
    pass


class Metric(str, Enum):
    """The four quality axes a pair can be scored on."""

    ITM = "itm"  # image-text matching
    ODF = "odf"  # object detail fulfillment
    CTQ = "ctq"  # caption text quality
    SU = "su"    # semantic understanding

    def __str__(self) -> str:
        return self.value


# Canonical serialization order for score maps.
METRIC_ORDER = (Metric.ITM, Metric.ODF, Metric.CTQ, Metric.SU)


def parse_metric(name: str) -> Metric:
    """Parse a metric token case-insensitively; raises UnknownMetric."""
    try:
        return Metric(name.strip().lower())
    except ValueError:
        raise UnknownMetric(f"unknown metric {name!r}") from None


def parse_metrics(names) -> tuple[Metric, ...]:
    """Parse a comma-separated string or an iterable of tokens."""
    if isinstance(names, str):
        names = [t for t in names.split(",") if t.strip()]
    return tuple(parse_metric(n) for n in names)


class QualityScore(int):
    """An integer quality score on the 0-100 scale; validates on construction."""

    def __new__(cls, value) -> "QualityScore":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"score must be an int, got {type(value).__name__}")
        if not 0 <= value <= 100:
            raise ValueError(f"score {value} outside [0, 100]")
        return super().__new__(cls, value)


IMAGE_KINDS = ("none", "path", "url", "b64")


@dataclass(frozen=True)
class ImageRef:
    """Opaque reference to a pair's image; `none` lets text-only flows run."""

    kind: str = "none"
    value: str | None = None

    def __post_init__(self):
        if self.kind not in IMAGE_KINDS:
            raise ValueError(f"image kind must be one of {IMAGE_KINDS}, got {self.kind!r}")
        if self.kind == "none":
            if self.value is not None:
                raise ValueError("image kind 'none' takes no value")
        elif not self.value:
            raise ValueError(f"image kind {self.kind!r} requires a value")

    def to_json(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_json(cls, obj) -> "ImageRef":
        if obj is None:
            return cls()
        return cls(kind=obj.get("kind", "none"), value=obj.get("value"))


NO_IMAGE = ImageRef()


@dataclass(frozen=True)
class ImageTextPair:
    """One record of a web-crawled pool."""

    id: str
    caption: str
    image: ImageRef = NO_IMAGE
    dense_caption: str | None = None

    def to_json(self) -> dict:
        obj = {"id": self.id, "image": self.image.to_json(), "caption": self.caption}
        if self.dense_caption is not None:
            obj["dense_caption"] = self.dense_caption
        return obj

    @classmethod
    def from_json(cls, obj) -> "ImageTextPair":
        return cls(
            id=obj["id"],
            caption=obj["caption"],
            image=ImageRef.from_json(obj.get("image")),
            dense_caption=obj.get("dense_caption"),
        )


@dataclass(frozen=True)
class IngestConfig:
    """Validation policy applied while reading raw pools."""

    allow_empty_caption: bool = False
    malformed: str = "fail"  # "fail" | "skip"

    def __post_init__(self):
        if self.malformed not in ("fail", "skip"):
            raise ValueError(f"malformed policy must be 'fail' or 'skip', got {self.malformed!r}")


def validate_pair(pair: ImageTextPair, cfg: IngestConfig = IngestConfig()) -> ImageTextPair:
    """Return the pair unchanged if it satisfies the ingest policy."""
    if not pair.id:
        raise EmptyId("pair id must be nonempty")
    if not pair.caption and not cfg.allow_empty_caption:
        raise EmptyCaption(f"pair {pair.id!r} has an empty caption")
    return pair


@dataclass(frozen=True)
class ScoreRecord:
    """Per-pair integer quality scores, one slot per metric."""

    pair_id: str
    scores: dict = field(default_factory=dict)  # Metric -> QualityScore
    provenance: str = ""

    def __post_init__(self):
        for m, s in self.scores.items():
            if not isinstance(m, Metric):
                raise TypeError(f"score key must be a Metric, got {m!r}")
            QualityScore(int(s))

    def to_json(self) -> dict:
        scores = {m.value: int(self.scores[m]) for m in METRIC_ORDER if m in self.scores}
        return {"id": self.pair_id, "scores": scores, "provenance": self.provenance}

    @classmethod
    def from_json(cls, obj) -> "ScoreRecord":
        scores = {
            parse_metric(k): QualityScore(v)
            for k, v in obj.get("scores", {}).items()
            if v is not None
        }
        return cls(pair_id=obj["id"], scores=scores, provenance=obj.get("provenance", ""))


class Combiner(str, Enum):
    SINGLE = "SINGLE"
    AND = "AND"
    OR = "OR"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FilterSpec:
    """Which metrics to filter on, at what retention fraction, and how to combine them."""

    metrics: tuple[Metric, ...]
    fraction: float = 0.3
    combiner: Combiner = Combiner.SINGLE
    thresholds: dict | None = None  # Metric -> int in [0, 101], once resolved

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if self.combiner is Combiner.SINGLE and len(self.metrics) != 1:
            raise ValueError("SINGLE requires exactly one metric")
        if self.combiner in (Combiner.AND, Combiner.OR) and len(self.metrics) != 2:
            raise ValueError(f"{self.combiner} requires exactly two metrics")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.thresholds is not None:
            for m, t in self.thresholds.items():
                if not isinstance(m, Metric):
                    raise TypeError(f"threshold key must be a Metric, got {m!r}")
                if not 0 <= int(t) <= 101:
                    raise ValueError(f"threshold {t} outside [0, 101]")

    @property
    def resolved(self) -> bool:
        return self.thresholds is not None and all(m in self.thresholds for m in self.metrics)

    def to_json(self) -> dict:
        obj = {
            "metrics": [m.value for m in self.metrics],
            "fraction": self.fraction,
            "combiner": self.combiner.value,
        }
        if self.thresholds is not None:
            obj["thresholds"] = {m.value: int(t) for m, t in self.thresholds.items()}
        return obj

    @classmethod
    def from_json(cls, obj) -> "FilterSpec":
        combiner = Combiner(obj.get("combiner", "SINGLE").upper())
        thresholds = obj.get("thresholds")
        if thresholds is not None:
            thresholds = {parse_metric(k): int(v) for k, v in thresholds.items()}
        return cls(
            metrics=parse_metrics(obj["metrics"]),
            fraction=obj.get("fraction", 0.3),
            combiner=combiner,
            thresholds=thresholds,
        )


@dataclass(frozen=True)
class ShardInfo:
    path: str
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("shard count must be nonnegative")


@dataclass(frozen=True)
class RunManifest:
    """What a run read or wrote, plus the digest of the config that produced it."""

    run_id: str
    shards: tuple[ShardInfo, ...]
    config_digest: str
    progress_log: str | None = None

    @property
    def total(self) -> int:
        return sum(s.count for s in self.shards)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "shards": [{"path": s.path, "count": s.count} for s in self.shards],
            "total": self.total,
            "config_digest": self.config_digest,
            "progress_log": self.progress_log,
        }

    @classmethod
    def from_json(cls, obj) -> "RunManifest":
        return cls(
            run_id=obj["run_id"],
            shards=tuple(ShardInfo(s["path"], s["count"]) for s in obj["shards"]),
            config_digest=obj["config_digest"],
            progress_log=obj.get("progress_log"),
        )


def canonical_json(obj) -> str:
    """Key-order-canonical compact JSON; the basis of config digests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(config) -> str:
    """SHA-256 of the canonical JSON form, lowercase hex."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()

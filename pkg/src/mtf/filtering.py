"""Streaming score histograms, retention thresholds, and filter application.

A filter keeps every pair whose score is greater than or equal to an integer
threshold. Thresholds are chosen so the retained share of the pool lands as
close as possible to a target fraction (the usual operating point is 0.3).
"""

from dataclasses import dataclass, field, replace
from typing import Iterable

from .core import Combiner, FilterSpec, Metric, MtfError, QualityScore, ScoreRecord


class EmptyHistogram(MtfError):
    pass


class MissingHistogram(MtfError):
    pass


class MissingScore(MtfError):
    def __init__(self, pair_id: str, metric: Metric):
        super().__init__(f"record {pair_id!r} has no {metric.value} score")
        self.pair_id = pair_id
        self.metric = metric


@dataclass
class Histogram101:
    """Counts of integer scores in 101 exact bins (bin i = score i)."""

    counts: list = field(default_factory=lambda: [0] * 101)
    total: int = 0

    def __post_init__(self):
        self.counts = list(self.counts)
        if len(self.counts) != 101:
            raise ValueError(f"need exactly 101 bins, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise ValueError("bin counts must be nonnegative")
        if sum(self.counts) != self.total:
            raise ValueError("total must equal the sum of the bin counts")

    @classmethod
    def from_scores(cls, scores: Iterable[int]) -> "Histogram101":
        h = cls()
        for s in scores:
            h.add(s)
        return h

    def add(self, score: int) -> None:
        self.counts[QualityScore(int(score))] += 1
        self.total += 1

    def merge(self, other: "Histogram101") -> "Histogram101":
        merged = [a + b for a, b in zip(self.counts, other.counts)]
        return Histogram101(counts=merged, total=self.total + other.total)

    def retained_count(self, threshold: int) -> int:
        """Number of scores >= threshold; threshold 101 retains nothing."""
        if not 0 <= threshold <= 101:
            raise ValueError(f"threshold {threshold} outside [0, 101]")
        return sum(self.counts[threshold:])

    def retention(self, threshold: int) -> float:
        if self.total == 0:
            raise EmptyHistogram("histogram is empty")
        return self.retained_count(threshold) / self.total

    def to_json(self) -> dict:
        return {"counts": list(self.counts), "total": self.total}

    @classmethod
    def from_json(cls, obj) -> "Histogram101":
        return cls(counts=obj["counts"], total=obj["total"])


def build_histogram(scores: Iterable[int]) -> Histogram101:
    return Histogram101.from_scores(scores)


def compute_threshold(hist: Histogram101, fraction: float = 0.3) -> int:
    """Integer threshold t in [0, 101] whose retention is closest to `fraction`.

    retention(t) is nonincreasing in t, so the best candidates sit where it
    crosses the target: the largest t still retaining at least `fraction`,
    and the next one. Whichever is closer wins; an exact distance tie keeps
    the smaller t, which retains more data. When several thresholds retain
    identically (empty bins), the crossing candidates are the ones compared,
    so an exact hit resolves to the largest threshold of its plateau.
    """
    if hist.total < 1:
        raise EmptyHistogram("cannot compute a threshold for an empty histogram")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")

    suffix = [0] * 102
    for i in range(100, -1, -1):
        suffix[i] = suffix[i + 1] + hist.counts[i]

    # Largest t with retention >= fraction; t=0 qualifies since retention(0)=1.
    t_hi = 100
    while suffix[t_hi] / hist.total < fraction:
        t_hi -= 1

    d_hi = abs(suffix[t_hi] / hist.total - fraction)
    d_lo = abs(suffix[t_hi + 1] / hist.total - fraction)
    return t_hi if d_hi <= d_lo else t_hi + 1


def resolve_spec(spec: FilterSpec, hists: dict) -> FilterSpec:
    """Fill in spec.thresholds from per-metric histograms at spec.fraction."""
    thresholds = {}
    for m in spec.metrics:
        if m not in hists:
            raise MissingHistogram(f"no histogram for metric {m.value!r}")
        thresholds[m] = compute_threshold(hists[m], spec.fraction)
    return replace(spec, thresholds=thresholds)


@dataclass
class FilterOutcome:
    """Result of applying a resolved spec to a score stream."""

    retained_ids: list
    retained_count: int
    total_count: int
    thresholds: dict                        # Metric -> int
    per_metric_retained: dict               # Metric -> int, each metric alone
    combiner: Combiner = Combiner.SINGLE

    def summary_json(self) -> dict:
        return {
            "retained": self.retained_count,
            "total": self.total_count,
            "thresholds": {m.value: int(t) for m, t in self.thresholds.items()},
            "per_metric_retained": {m.value: n for m, n in self.per_metric_retained.items()},
            "combiner": self.combiner.value,
        }


def apply_filter(records: Iterable[ScoreRecord], spec: FilterSpec) -> FilterOutcome:
    """Retain pairs whose scores meet the spec's resolved thresholds.

    SINGLE keeps score >= threshold; AND needs both metrics to pass, OR at
    least one. Every record must carry a score for each spec metric.
    """
    if not spec.resolved:
        raise ValueError("spec thresholds must be resolved before filtering")

    retained = []
    total = 0
    per_metric = {m: 0 for m in spec.metrics}
    for rec in records:
        total += 1
        passes = []
        for m in spec.metrics:
            if m not in rec.scores:
                raise MissingScore(rec.pair_id, m)
            ok = int(rec.scores[m]) >= spec.thresholds[m]
            per_metric[m] += ok
            passes.append(ok)
        if spec.combiner is Combiner.AND:
            keep = all(passes)
        elif spec.combiner is Combiner.OR:
            keep = any(passes)
        else:
            keep = passes[0]
        if keep:
            retained.append(rec.pair_id)

    return FilterOutcome(
        retained_ids=retained,
        retained_count=len(retained),
        total_count=total,
        thresholds=dict(spec.thresholds),
        per_metric_retained=per_metric,
        combiner=spec.combiner,
    )

"""Correlate model scores with human scores and report score distributions."""

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import t as t_dist

from .core import Metric, MtfError, ScoreRecord
from .curation import bucket_index
from .filtering import Histogram101, compute_threshold

PAPER_FRACTIONS = (0.2, 0.25, 0.3, 0.35, 0.4)


class ZeroVariance(MtfError):
    pass


class TooFewSamples(MtfError):
    pass


@dataclass(frozen=True)
class PairedSample:
    """Human and model scores joined by pair id."""

    ids: tuple
    human: np.ndarray
    model: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "human", np.asarray(self.human, dtype=np.float64))
        object.__setattr__(self, "model", np.asarray(self.model, dtype=np.float64))
        n = len(self.ids)
        if self.human.shape != (n,) or self.model.shape != (n,):
            raise ValueError("ids, human, and model must have one entry per pair")
        if n < 3:
            raise TooFewSamples(f"need at least 3 paired scores, got {n}")
        if len(set(self.ids)) != n:
            raise ValueError("pair ids must be unique")
        if not (np.isfinite(self.human).all() and np.isfinite(self.model).all()):
            raise ValueError("scores must be finite")

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    p_value: float
    n: int

    def __post_init__(self):
        if not -1.0 <= self.coefficient <= 1.0:
            raise ValueError(f"coefficient {self.coefficient} outside [-1, 1]")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")

    def to_json(self) -> dict:
        return {"coefficient": self.coefficient, "p_value": self.p_value, "n": self.n}


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("correlation undefined for a constant variable")
    r = float(np.dot(dx, dy) / np.sqrt(sxx * syy))
    return max(-1.0, min(1.0, r))


def _t_p_value(r: float, n: int) -> float:
    # Two-tailed significance of r under the t approximation, n-2 df.
    if 1.0 - r * r <= 0.0:
        return 0.0
    t = abs(r) * np.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * t_dist.sf(t, n - 2))


def _permutation_p_value(x, y, coeff, n_permutations: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    observed = abs(coeff(x, y))
    hits = 0
    for _ in range(n_permutations):
        if abs(coeff(x, rng.permutation(y))) >= observed:
            hits += 1
    return (1 + hits) / (n_permutations + 1)


def pearson(
    sample: PairedSample,
    p_method: str = "t",
    n_permutations: int = 10000,
    seed: int = 0,
) -> CorrelationResult:
    """Pearson correlation with a two-tailed p-value.

    The default significance test is the t approximation with n-2 degrees of
    freedom; `p_method="permutation"` runs a seeded permutation test instead,
    which is preferable at small n.
    """
    r = _pearson_r(sample.human, sample.model)
    if p_method == "permutation":
        p = _permutation_p_value(sample.human, sample.model, _pearson_r, n_permutations, seed)
    else:
        p = _t_p_value(r, sample.n)
    return CorrelationResult(coefficient=r, p_value=p, n=sample.n)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; ties receive the mean of the ranks they span."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(
    sample: PairedSample,
    p_method: str = "t",
    n_permutations: int = 10000,
    seed: int = 0,
) -> CorrelationResult:
    """Spearman correlation: Pearson over average ranks, same p-value machinery."""
    # Constant inputs have zero rank variance too; report the cause directly.
    if np.all(sample.human == sample.human[0]) or np.all(sample.model == sample.model[0]):
        raise ZeroVariance("correlation undefined for a constant variable")
    rx = average_ranks(sample.human)
    ry = average_ranks(sample.model)
    rho = _pearson_r(rx, ry)
    if p_method == "permutation":
        p = _permutation_p_value(rx, ry, _pearson_r, n_permutations, seed)
    else:
        p = _t_p_value(rho, sample.n)
    return CorrelationResult(coefficient=rho, p_value=p, n=sample.n)


@dataclass(frozen=True)
class SweepRow:
    fraction: float
    threshold: int
    retained_count: int

    def to_json(self) -> dict:
        return {
            "fraction": self.fraction,
            "threshold": self.threshold,
            "retained_count": self.retained_count,
        }


def fraction_sweep(hist: Histogram101, fractions: Iterable[float] | None = None) -> list:
    """Threshold and exact retained count for each target fraction."""
    rows = []
    for fraction in PAPER_FRACTIONS if fractions is None else fractions:
        threshold = compute_threshold(hist, fraction)
        rows.append(SweepRow(fraction, threshold, hist.retained_count(threshold)))
    return rows


def distribution_report(scores_by_metric: dict) -> dict:
    """Per metric: 101-bin counts, 10-bucket rollup, mean, median, retention curve."""
    report = {}
    for metric, scores in scores_by_metric.items():
        name = metric.value if isinstance(metric, Metric) else str(metric)
        hist = Histogram101.from_scores(scores)
        buckets = [0] * 10
        for score, count in enumerate(hist.counts):
            buckets[bucket_index(score)] += count
        if hist.total:
            values = np.repeat(np.arange(101), hist.counts)
            mean = float(values.mean())
            median = float(np.median(values))
            retention = [hist.retention(t) for t in range(102)]
        else:
            mean = 0.0
            median = 0.0
            retention = [0.0] * 102
        report[name] = {
            "counts": list(hist.counts),
            "total": hist.total,
            "buckets": buckets,
            "mean": mean,
            "median": median,
            "retention": retention,
        }
    return report


def write_distribution_report(report: dict, json_path, csv_path) -> None:
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "score", "count"])
        for name, entry in report.items():
            for score, count in enumerate(entry["counts"]):
                writer.writerow([name, score, count])


def load_human_scores(path) -> dict:
    """Read the id,human CSV into a mapping."""
    scores = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "id" not in reader.fieldnames or "human" not in reader.fieldnames:
            raise ValueError(f"{path}: expected header with 'id' and 'human' columns")
        for row in reader:
            scores[row["id"]] = float(row["human"])
    return scores


def paired_sample(records: Iterable[ScoreRecord], human: dict, metric: Metric) -> PairedSample:
    """Join score records against human labels by id; unlabeled records drop out."""
    ids, hs, ms = [], [], []
    for rec in records:
        if rec.pair_id in human and metric in rec.scores:
            ids.append(rec.pair_id)
            hs.append(human[rec.pair_id])
            ms.append(float(rec.scores[metric]))
    return PairedSample(ids=tuple(ids), human=np.array(hs), model=np.array(ms))

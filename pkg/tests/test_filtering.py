import numpy as np
import pytest

from mtf.core import Combiner, FilterSpec, Metric, QualityScore, ScoreRecord
from mtf.filtering import (
    EmptyHistogram,
    Histogram101,
    MissingHistogram,
    MissingScore,
    apply_filter,
    build_histogram,
    compute_threshold,
    resolve_spec,
)


def brute_force_threshold(counts, fraction):
    """Independent exhaustive search over all 102 candidate thresholds.

    Ties on distance prefer the candidate side that retains at least the
    target fraction (the crossing's upper plateau resolves to its largest
    threshold); pure sub-fraction ties keep the smallest threshold.
    """
    total = sum(counts)
    retention = []
    running = 0
    suffix = [0] * 102
    for t in range(100, -1, -1):
        running += counts[t]
        suffix[t] = running
    retention = [suffix[t] / total for t in range(102)]
    dists = [abs(r - fraction) for r in retention]
    best = min(dists)
    candidates = [t for t in range(102) if dists[t] == best]
    above = [t for t in candidates if retention[t] >= fraction]
    return max(above) if above else min(candidates)


class TestHistogram:
    def test_counts_and_total(self):
        h = build_histogram([50, 50, 80])
        assert h.counts[50] == 2 and h.counts[80] == 1 and h.total == 3

    def test_empty(self):
        h = build_histogram([])
        assert h.total == 0 and sum(h.counts) == 0

    def test_merge_is_concat(self):
        rng = np.random.default_rng(7)
        a = rng.integers(0, 101, size=200).tolist()
        b = rng.integers(0, 101, size=300).tolist()
        merged = build_histogram(a).merge(build_histogram(b))
        assert merged.to_json() == build_histogram(a + b).to_json()

    def test_invariant_total_matches(self):
        with pytest.raises(ValueError):
            Histogram101(counts=[1] + [0] * 100, total=2)

    def test_json_round_trip(self):
        h = build_histogram([1, 2, 3, 100])
        assert Histogram101.from_json(h.to_json()).to_json() == h.to_json()

    def test_retained_count(self):
        h = build_histogram([50, 50, 80])
        assert h.retained_count(0) == 3
        assert h.retained_count(51) == 1
        assert h.retained_count(101) == 0


class TestComputeThreshold:
    def test_exact_retention_case(self):
        h = Histogram101(counts=[0] * 101, total=0)
        for score, n in ((50, 700), (80, 200), (90, 100)):
            for _ in range(n):
                h.add(score)
        t = compute_threshold(h, 0.3)
        assert t == 80
        assert h.retention(t) == pytest.approx(0.300, abs=0)

    def test_uniform_101(self):
        h = Histogram101(counts=[1] * 101, total=101)
        # 30/101 ~ 0.297 beats 31/101 ~ 0.307
        assert compute_threshold(h, 0.3) == 71

    def test_degenerate_single_bin(self):
        h = build_histogram([60] * 1000)
        assert compute_threshold(h, 0.3) == 61

    def test_empty_histogram(self):
        with pytest.raises(EmptyHistogram):
            compute_threshold(Histogram101(), 0.3)

    def test_fraction_domain(self):
        h = build_histogram([50])
        for bad in (0.0, -0.1, 1.01):
            with pytest.raises(ValueError):
                compute_threshold(h, bad)
        assert compute_threshold(h, 1.0) == 50

    def test_matches_exhaustive_search_on_random_histograms(self):
        rng = np.random.default_rng(42)
        for case in range(1000):
            if case % 3 == 0:
                counts = rng.integers(0, 50, size=101)  # sparse, with plateaus
            elif case % 3 == 1:
                counts = rng.integers(1, 200, size=101)  # dense
            else:
                counts = np.zeros(101, dtype=int)
                spots = rng.choice(101, size=rng.integers(1, 6), replace=False)
                counts[spots] = rng.integers(1, 1000, size=len(spots))  # spiky
            h = Histogram101(counts=counts.tolist(), total=int(counts.sum()))
            f = float(rng.uniform(0.01, 1.0))
            assert compute_threshold(h, f) == brute_force_threshold(counts.tolist(), f)

    def test_retention_properties(self):
        rng = np.random.default_rng(3)
        counts = rng.integers(0, 20, size=101)
        counts[5] += 1  # nonempty
        h = Histogram101(counts=counts.tolist(), total=int(counts.sum()))
        rets = [h.retention(t) for t in range(102)]
        assert rets[0] == 1.0
        assert rets[101] == 0.0
        assert all(a >= b for a, b in zip(rets, rets[1:]))

    def test_monotone_in_fraction(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            counts = rng.integers(0, 30, size=101)
            if counts.sum() == 0:
                counts[50] = 1
            h = Histogram101(counts=counts.tolist(), total=int(counts.sum()))
            f1, f2 = sorted(rng.uniform(0.01, 1.0, size=2))
            assert compute_threshold(h, f1) >= compute_threshold(h, f2)


class TestResolveSpec:
    def test_single_uniform(self):
        h = Histogram101(counts=[1] * 101, total=101)
        spec = resolve_spec(FilterSpec(metrics=(Metric.ODF,)), {Metric.ODF: h})
        assert spec.thresholds == {Metric.ODF: 71}

    def test_identical_hists_equal_thresholds(self):
        h = build_histogram([10, 40, 40, 90, 95])
        spec = FilterSpec(metrics=(Metric.ITM, Metric.ODF), combiner=Combiner.AND)
        resolved = resolve_spec(spec, {Metric.ITM: h, Metric.ODF: h})
        assert resolved.thresholds[Metric.ITM] == resolved.thresholds[Metric.ODF]

    def test_missing_histogram(self):
        spec = FilterSpec(metrics=(Metric.ITM, Metric.ODF), combiner=Combiner.AND)
        with pytest.raises(MissingHistogram):
            resolve_spec(spec, {Metric.ITM: build_histogram([50])})


def _records(rng, n):
    recs = []
    for i in range(n):
        recs.append(
            ScoreRecord(
                f"p{i}",
                {
                    Metric.ITM: QualityScore(int(rng.integers(0, 101))),
                    Metric.ODF: QualityScore(int(rng.integers(0, 101))),
                },
                "test",
            )
        )
    return recs


class TestApplyFilter:
    def _spec(self, combiner, t_itm=85, t_odf=75):
        metrics = (Metric.ITM, Metric.ODF) if combiner is not Combiner.SINGLE else (Metric.ITM,)
        thresholds = {Metric.ITM: t_itm, Metric.ODF: t_odf}
        if combiner is Combiner.SINGLE:
            thresholds = {Metric.ITM: t_itm}
        return FilterSpec(metrics=metrics, combiner=combiner, thresholds=thresholds)

    def test_and_or_on_boundary_case(self):
        rec = ScoreRecord("p", {Metric.ITM: QualityScore(90), Metric.ODF: QualityScore(70)}, "t")
        assert apply_filter([rec], self._spec(Combiner.AND)).retained_count == 0
        assert apply_filter([rec], self._spec(Combiner.OR)).retained_count == 1

    def test_threshold_is_inclusive(self):
        rec = ScoreRecord("p", {Metric.ITM: QualityScore(85)}, "t")
        assert apply_filter([rec], self._spec(Combiner.SINGLE)).retained_count == 1

    def test_set_algebra_on_random_records(self):
        rng = np.random.default_rng(5)
        recs = _records(rng, 1000)
        single_itm = FilterSpec(metrics=(Metric.ITM,), thresholds={Metric.ITM: 60})
        single_odf = FilterSpec(metrics=(Metric.ODF,), thresholds={Metric.ODF: 40})
        thresholds = {Metric.ITM: 60, Metric.ODF: 40}
        s1 = set(apply_filter(recs, single_itm).retained_ids)
        s2 = set(apply_filter(recs, single_odf).retained_ids)
        both = FilterSpec(metrics=(Metric.ITM, Metric.ODF), combiner=Combiner.AND, thresholds=thresholds)
        either = FilterSpec(metrics=(Metric.ITM, Metric.ODF), combiner=Combiner.OR, thresholds=thresholds)
        a = set(apply_filter(recs, both).retained_ids)
        o = set(apply_filter(recs, either).retained_ids)
        assert a == s1 & s2
        assert o == s1 | s2
        assert len(a) + len(o) == len(s1) + len(s2)

    def test_missing_score(self):
        rec = ScoreRecord("p", {Metric.ITM: QualityScore(90)}, "t")
        with pytest.raises(MissingScore):
            apply_filter([rec], self._spec(Combiner.AND))

    def test_unresolved_spec_rejected(self):
        with pytest.raises(ValueError):
            apply_filter([], FilterSpec(metrics=(Metric.ITM,)))

    def test_idempotent(self):
        rng = np.random.default_rng(9)
        recs = _records(rng, 500)
        spec = FilterSpec(
            metrics=(Metric.ITM, Metric.ODF),
            combiner=Combiner.AND,
            thresholds={Metric.ITM: 50, Metric.ODF: 50},
        )
        first = apply_filter(recs, spec)
        keep = set(first.retained_ids)
        again = apply_filter([r for r in recs if r.pair_id in keep], spec)
        assert again.retained_count == first.retained_count

    def test_summary_reports_per_metric_retention(self):
        rng = np.random.default_rng(13)
        recs = _records(rng, 200)
        spec = FilterSpec(
            metrics=(Metric.ITM, Metric.ODF),
            combiner=Combiner.AND,
            thresholds={Metric.ITM: 70, Metric.ODF: 70},
        )
        summary = apply_filter(recs, spec).summary_json()
        assert set(summary["per_metric_retained"]) == {"itm", "odf"}
        assert summary["retained"] <= min(summary["per_metric_retained"].values())

import pytest

from mtf.core import (
    Combiner,
    EmptyCaption,
    EmptyId,
    FilterSpec,
    ImageRef,
    ImageTextPair,
    IngestConfig,
    Metric,
    QualityScore,
    ScoreRecord,
    UnknownMetric,
    canonical_json,
    config_digest,
    parse_metric,
    parse_metrics,
    validate_pair,
)


class TestMetric:
    def test_canonical_form(self):
        assert parse_metric("ITM") is Metric.ITM

    def test_case_insensitive(self):
        assert parse_metric("odf") is Metric.ODF
        assert parse_metric("Ctq") is Metric.CTQ

    def test_rejects_unknown(self):
        with pytest.raises(UnknownMetric):
            parse_metric("alignment")

    def test_round_trip_all_metrics(self):
        for m in Metric:
            assert parse_metric(str(m)) is m
            assert parse_metric(m.value.upper()) is m

    def test_parse_metrics_csv(self):
        assert parse_metrics("itm,odf") == (Metric.ITM, Metric.ODF)


class TestQualityScore:
    def test_bounds_property(self):
        for v in range(-10, 111):
            if 0 <= v <= 100:
                assert QualityScore(v) == v
            else:
                with pytest.raises(ValueError):
                    QualityScore(v)

    def test_rejects_non_int(self):
        with pytest.raises(TypeError):
            QualityScore(50.0)
        with pytest.raises(TypeError):
            QualityScore(True)

    def test_behaves_as_int(self):
        assert QualityScore(85) + 1 == 86


class TestValidatePair:
    def test_ok(self):
        p = ImageTextPair(id="a", caption="a dog")
        assert validate_pair(p) is p

    def test_empty_id(self):
        with pytest.raises(EmptyId):
            validate_pair(ImageTextPair(id="", caption="x"))

    def test_empty_caption_forbidden_by_default(self):
        with pytest.raises(EmptyCaption):
            validate_pair(ImageTextPair(id="a", caption=""))

    def test_empty_caption_allowed_by_config(self):
        cfg = IngestConfig(allow_empty_caption=True)
        p = ImageTextPair(id="a", caption="")
        assert validate_pair(p, cfg) is p


class TestImageRef:
    def test_kinds(self):
        assert ImageRef().kind == "none"
        assert ImageRef("url", "http://x/y.jpg").to_json() == {"kind": "url", "value": "http://x/y.jpg"}

    def test_none_takes_no_value(self):
        with pytest.raises(ValueError):
            ImageRef("none", "x")
        with pytest.raises(ValueError):
            ImageRef("path", None)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ImageRef("tensor", "x")

    def test_json_round_trip(self):
        for ref in (ImageRef(), ImageRef("path", "/a.png"), ImageRef("b64", "aGk=")):
            assert ImageRef.from_json(ref.to_json()) == ref


class TestPairJson:
    def test_round_trip(self):
        p = ImageTextPair(id="x1", caption="a cat", image=ImageRef("url", "u"), dense_caption="desc")
        assert ImageTextPair.from_json(p.to_json()) == p

    def test_dense_caption_omitted_when_absent(self):
        assert "dense_caption" not in ImageTextPair(id="x", caption="c").to_json()


class TestScoreRecord:
    def test_json_round_trip(self):
        rec = ScoreRecord("p1", {Metric.ITM: QualityScore(85), Metric.ODF: QualityScore(10)}, "mock")
        assert ScoreRecord.from_json(rec.to_json()) == rec

    def test_canonical_metric_order(self):
        rec = ScoreRecord("p1", {Metric.SU: QualityScore(1), Metric.ITM: QualityScore(2)}, "m")
        assert list(rec.to_json()["scores"]) == ["itm", "su"]

    def test_rejects_bad_scores(self):
        with pytest.raises(ValueError):
            ScoreRecord("p1", {Metric.ITM: 101})
        with pytest.raises(TypeError):
            ScoreRecord("p1", {"itm": 50})


class TestFilterSpec:
    def test_single_requires_one_metric(self):
        FilterSpec(metrics=(Metric.ITM,))
        with pytest.raises(ValueError):
            FilterSpec(metrics=(Metric.ITM, Metric.ODF), combiner=Combiner.SINGLE)

    def test_and_or_require_two(self):
        FilterSpec(metrics=(Metric.ITM, Metric.ODF), combiner=Combiner.AND)
        with pytest.raises(ValueError):
            FilterSpec(metrics=(Metric.ITM,), combiner=Combiner.OR)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            FilterSpec(metrics=(Metric.ITM,), fraction=0.0)
        with pytest.raises(ValueError):
            FilterSpec(metrics=(Metric.ITM,), fraction=1.5)
        FilterSpec(metrics=(Metric.ITM,), fraction=1.0)

    def test_from_json_matches_cli_shape(self):
        spec = FilterSpec.from_json({"metrics": ["itm", "odf"], "combiner": "AND", "fraction": 0.3})
        assert spec.combiner is Combiner.AND
        assert spec.metrics == (Metric.ITM, Metric.ODF)
        assert not spec.resolved

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            FilterSpec(metrics=(Metric.ITM,), thresholds={Metric.ITM: 102})


class TestConfigDigest:
    def test_stable_under_key_order(self):
        a = {"b": 1, "a": [1, 2], "c": {"y": 2, "x": 1}}
        b = {"c": {"x": 1, "y": 2}, "a": [1, 2], "b": 1}
        assert config_digest(a) == config_digest(b)

    def test_different_configs_differ(self):
        assert config_digest({"a": 1}) != config_digest({"a": 2})

    def test_canonical_json_compact_sorted(self):
        assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'

    def test_digest_is_lowercase_hex(self):
        d = config_digest({"a": 1})
        assert len(d) == 64 and d == d.lower()
        int(d, 16)

import json

import pytest

from mtf.core import ImageTextPair, IngestConfig
from mtf.ingest import (
    FieldMap,
    IngestStats,
    MalformedRow,
    PairSource,
    ProgressLog,
    completed_ids_in_score_file,
    open_pair_stream,
    read_pairs,
    resume_filter,
    write_pairs,
)


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _pair_row(i, caption="a dog"):
    return {"id": f"p{i}", "image": {"kind": "none"}, "caption": caption}


class TestOpenPairStream:
    def test_shard_then_row_order(self, tmp_path):
        s0 = tmp_path / "a.jsonl"
        s1 = tmp_path / "b.jsonl"
        _write_jsonl(s0, [_pair_row(i) for i in range(3)])
        _write_jsonl(s1, [_pair_row(i + 3) for i in range(3)])
        pairs = list(open_pair_stream(PairSource("jsonl", (s0, s1))))
        assert [p.id for p in pairs] == [f"p{i}" for i in range(6)]

    def test_deterministic_reread(self, tmp_path):
        s = tmp_path / "a.jsonl"
        _write_jsonl(s, [_pair_row(i) for i in range(5)])
        src = PairSource("jsonl", (s,))
        assert [p.id for p in open_pair_stream(src)] == [p.id for p in open_pair_stream(src)]

    def test_missing_caption_fails(self, tmp_path):
        s = tmp_path / "a.jsonl"
        _write_jsonl(s, [{"id": "p0", "image": {"kind": "none"}}])
        with pytest.raises(MalformedRow):
            list(open_pair_stream(PairSource("jsonl", (s,))))

    def test_skip_policy_counts(self, tmp_path):
        s = tmp_path / "a.jsonl"
        with open(s, "w", encoding="utf-8") as f:
            f.write(json.dumps(_pair_row(0)) + "\n")
            f.write("not json\n")
            f.write(json.dumps({"id": "p1"}) + "\n")
            f.write(json.dumps(_pair_row(2)) + "\n")
        stats = IngestStats()
        cfg = IngestConfig(malformed="skip")
        pairs = list(open_pair_stream(PairSource("jsonl", (s,)), cfg, stats))
        assert [p.id for p in pairs] == ["p0", "p2"]
        assert stats.malformed_skipped == 2

    def test_synthesized_ids(self, tmp_path):
        s = tmp_path / "a.jsonl"
        _write_jsonl(s, [{"caption": "one"}, {"caption": "two"}])
        pairs = list(open_pair_stream(PairSource("jsonl", (s,))))
        assert [p.id for p in pairs] == ["shard0:0", "shard0:1"]

    def test_tsv_with_header(self, tmp_path):
        s = tmp_path / "crawl.tsv"
        s.write_text("id\tcaption\timage\nr1\ta red car\thttp://x/1.jpg\nr2\ta bird\t\n")
        pairs = list(open_pair_stream(PairSource("tsv", (s,))))
        assert pairs[0].id == "r1" and pairs[0].image.kind == "url"
        assert pairs[1].image.kind == "none"

    def test_tsv_missing_column_is_malformed(self, tmp_path):
        s = tmp_path / "crawl.tsv"
        s.write_text("id\tcaption\nr1\n")
        with pytest.raises(MalformedRow):
            list(open_pair_stream(PairSource("tsv", (s,))))

    def test_source_invariants(self):
        with pytest.raises(ValueError):
            PairSource("jsonl", ())
        with pytest.raises(ValueError):
            PairSource("csv", ("x",))
        with pytest.raises(ValueError):
            FieldMap(id="caption")


class TestWritePairs:
    def test_shard_sizes(self, tmp_path):
        pairs = [ImageTextPair(id=f"p{i}", caption="c") for i in range(10)]
        manifest = write_pairs(pairs, tmp_path / "out", shard_size=4)
        assert [s.count for s in manifest.shards] == [4, 4, 2]
        assert manifest.total == 10

    def test_empty_stream(self, tmp_path):
        manifest = write_pairs([], tmp_path / "out", shard_size=4)
        assert manifest.shards == ()
        assert manifest.total == 0

    def test_round_trip_canonical_json(self, tmp_path):
        pairs = [
            ImageTextPair(id=f"p{i}", caption=f"caption {i}", dense_caption="d" if i % 2 else None)
            for i in range(7)
        ]
        manifest = write_pairs(pairs, tmp_path / "out", shard_size=3)
        back = list(open_pair_stream(PairSource("jsonl", tuple(s.path for s in manifest.shards))))
        assert [p.to_json() for p in back] == [p.to_json() for p in pairs]

    def test_manifest_written(self, tmp_path):
        write_pairs([ImageTextPair(id="p", caption="c")], tmp_path / "out", shard_size=1)
        meta = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert meta["total"] == 1
        assert len(meta["config_digest"]) == 64


class TestProgressLog:
    def test_replay_yields_set(self, tmp_path):
        path = tmp_path / "log"
        with ProgressLog(path, flush_every=2) as log:
            for pid in ("a", "b", "b", "c"):
                log.append(pid)
        with ProgressLog(path) as log:
            assert log.completed() == {"a", "b", "c"}
        assert path.read_text().splitlines().count("b") == 1

    def test_resume_filter(self, tmp_path):
        pairs = [ImageTextPair(id=x, caption="c") for x in "abc"]
        path = tmp_path / "log"
        with ProgressLog(path) as log:
            log.append("b")
        with ProgressLog(path) as log:
            assert [p.id for p in resume_filter(pairs, log)] == ["a", "c"]

    def test_empty_log_is_identity(self, tmp_path):
        pairs = [ImageTextPair(id=x, caption="c") for x in "abc"]
        with ProgressLog(tmp_path / "log") as log:
            assert [p.id for p in resume_filter(pairs, log)] == ["a", "b", "c"]

    def test_superset_log_empties_stream(self, tmp_path):
        pairs = [ImageTextPair(id=x, caption="c") for x in "ab"]
        with ProgressLog(tmp_path / "log") as log:
            for x in "abcd":
                log.append(x)
        with ProgressLog(tmp_path / "log") as log:
            assert list(resume_filter(pairs, log)) == []

    def test_plain_set_also_accepted(self):
        pairs = [ImageTextPair(id=x, caption="c") for x in "abc"]
        assert [p.id for p in resume_filter(pairs, {"a"})] == ["b", "c"]


class TestScoreFileRecovery:
    def test_torn_final_line_truncated(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        good = json.dumps({"id": "p0", "scores": {"itm": 5}, "provenance": "m"})
        path.write_text(good + "\n" + '{"id": "p1", "scor')
        assert completed_ids_in_score_file(path) == {"p0"}
        assert path.read_text() == good + "\n"

    def test_missing_file_is_empty(self, tmp_path):
        assert completed_ids_in_score_file(tmp_path / "nope") == set()


class TestReadPairs:
    def test_single_file_helper(self, tmp_path):
        s = tmp_path / "p.jsonl"
        _write_jsonl(s, [_pair_row(0), _pair_row(1)])
        assert [p.id for p in read_pairs(s)] == ["p0", "p1"]

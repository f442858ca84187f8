"""Stream image-text pairs from sharded files and support crash-resumable runs.

JSONL is the canonical interchange format; TSV (with a header row) is read-only
for raw crawls. Pair lines look like
{"id": ..., "image": {"kind": ..., "value": ...}, "caption": ..., "dense_caption": ...}
and score lines like {"id": ..., "scores": {"itm": ...}, "provenance": ...}.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .core import (
    ImageRef,
    ImageTextPair,
    IngestConfig,
    MtfError,
    RunManifest,
    ScoreRecord,
    ShardInfo,
    config_digest,
    validate_pair,
)


class MalformedRow(MtfError):
    def __init__(self, shard: str, row: int, cause: str):
        super().__init__(f"malformed row {row} in {shard}: {cause}")
        self.shard = shard
        self.row = row
        self.cause = cause


@dataclass(frozen=True)
class FieldMap:
    """Which keys/columns hold each pair field; id=None synthesizes ids."""

    id: str | None = "id"
    image: str | None = "image"
    caption: str = "caption"
    dense_caption: str | None = "dense_caption"

    def __post_init__(self):
        names = [n for n in (self.id, self.image, self.caption, self.dense_caption) if n]
        if len(names) != len(set(names)):
            raise ValueError("field mapping names must be distinct")


@dataclass(frozen=True)
class PairSource:
    format: str  # "jsonl" | "tsv"
    locators: tuple
    mapping: FieldMap = FieldMap()

    def __post_init__(self):
        object.__setattr__(self, "locators", tuple(str(p) for p in self.locators))
        if self.format not in ("jsonl", "tsv"):
            raise ValueError(f"format must be 'jsonl' or 'tsv', got {self.format!r}")
        if not self.locators:
            raise ValueError("need at least one shard")


@dataclass
class IngestStats:
    rows_read: int = 0
    malformed_skipped: int = 0


def _pair_from_obj(obj: dict, mapping: FieldMap, shard_idx: int, row_idx: int) -> ImageTextPair:
    if mapping.id and mapping.id in obj:
        pair_id = obj[mapping.id]
    else:
        pair_id = f"shard{shard_idx}:{row_idx}"
    if mapping.caption not in obj:
        raise KeyError(f"missing caption field {mapping.caption!r}")
    image = ImageRef.from_json(obj.get(mapping.image)) if mapping.image else ImageRef()
    dense = obj.get(mapping.dense_caption) if mapping.dense_caption else None
    return ImageTextPair(id=str(pair_id), caption=obj[mapping.caption], image=image, dense_caption=dense)


def _pair_from_tsv(columns: dict, cells: list, mapping: FieldMap, shard_idx: int, row_idx: int) -> ImageTextPair:
    def cell(name):
        i = columns[name]
        if i >= len(cells):
            raise KeyError(f"missing column {name!r}")
        return cells[i]

    if mapping.caption not in columns:
        raise KeyError(f"missing caption column {mapping.caption!r}")
    if mapping.id and mapping.id in columns:
        pair_id = cell(mapping.id)
    else:
        pair_id = f"shard{shard_idx}:{row_idx}"
    image = ImageRef()
    if mapping.image and mapping.image in columns:
        url = cell(mapping.image).strip()
        if url:
            image = ImageRef("url", url)
    dense = None
    if mapping.dense_caption and mapping.dense_caption in columns:
        dense = cell(mapping.dense_caption) or None
    return ImageTextPair(id=str(pair_id), caption=cell(mapping.caption), image=image, dense_caption=dense)


def open_pair_stream(
    src: PairSource,
    cfg: IngestConfig = IngestConfig(),
    stats: IngestStats | None = None,
) -> Iterator[ImageTextPair]:
    """Yield pairs in shard order then row order.

    Malformed rows raise MalformedRow under the "fail" policy and are counted
    on `stats` under "skip"; they are never silently dropped.
    """
    stats = stats if stats is not None else IngestStats()
    for shard_idx, path in enumerate(src.locators):
        with open(path, encoding="utf-8") as f:
            columns = None
            if src.format == "tsv":
                header = f.readline().rstrip("\n").rstrip("\r")
                columns = {name: i for i, name in enumerate(header.split("\t"))}
            for row_idx, line in enumerate(f):
                line = line.rstrip("\n").rstrip("\r")
                if not line:
                    continue
                stats.rows_read += 1
                try:
                    if src.format == "jsonl":
                        obj = json.loads(line)
                        pair = _pair_from_obj(obj, src.mapping, shard_idx, row_idx)
                    else:
                        pair = _pair_from_tsv(columns, line.split("\t"), src.mapping, shard_idx, row_idx)
                    yield validate_pair(pair, cfg)
                except (MtfError, KeyError, ValueError, TypeError) as e:
                    if cfg.malformed == "fail":
                        raise MalformedRow(path, row_idx, str(e)) from e
                    stats.malformed_skipped += 1


def write_pairs(
    pairs: Iterable[ImageTextPair],
    out_dir,
    shard_size: int,
    run_id: str | None = None,
) -> RunManifest:
    """Write pairs as JSONL shards of `shard_size` records; returns the manifest.

    ceil(N / shard_size) shards are produced; all but the last hold exactly
    shard_size records. The manifest is also saved to out_dir/manifest.json.
    """
    if shard_size < 1:
        raise ValueError("shard_size must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    shards = []
    handle = None
    count_in_shard = 0
    try:
        for pair in pairs:
            if handle is None or count_in_shard >= shard_size:
                if handle is not None:
                    handle.close()
                    shards.append(ShardInfo(str(shard_path), count_in_shard))
                shard_path = out_dir / f"pairs-{len(shards):05d}.jsonl"
                handle = open(shard_path, "w", encoding="utf-8")
                count_in_shard = 0
            handle.write(json.dumps(pair.to_json(), ensure_ascii=True) + "\n")
            count_in_shard += 1
    finally:
        if handle is not None:
            handle.close()
    if count_in_shard:
        shards.append(ShardInfo(str(shard_path), count_in_shard))

    digest = config_digest({"shard_size": shard_size, "format": "jsonl"})
    manifest = RunManifest(
        run_id=run_id or f"run-{digest[:12]}",
        shards=tuple(shards),
        config_digest=digest,
    )
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest.to_json(), f, indent=2)
        f.write("\n")
    return manifest


class ProgressLog:
    """Append-only log of completed pair ids, one per line, flushed in batches.

    Replaying the file yields a set; duplicate appends are dropped in memory
    so the on-disk log stays unique. Single-writer discipline is assumed.
    """

    def __init__(self, path, flush_every: int = 64):
        self.path = str(path)
        self.flush_every = flush_every
        self._seen: set = set()
        self._pending = 0
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    line = line.rstrip("\n")
                    if line:
                        self._seen.add(line)
        self._handle = open(self.path, "a", encoding="utf-8")

    def completed(self) -> set:
        return set(self._seen)

    def __contains__(self, pair_id: str) -> bool:
        return pair_id in self._seen

    def append(self, pair_id: str) -> None:
        if pair_id in self._seen:
            return
        self._seen.add(pair_id)
        self._handle.write(pair_id + "\n")
        self._pending += 1
        if self._pending >= self.flush_every:
            self.flush()

    def flush(self) -> None:
        self._handle.flush()
        self._pending = 0

    def close(self) -> None:
        self.flush()
        self._handle.close()

    def __enter__(self) -> "ProgressLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def resume_filter(pairs: Iterable[ImageTextPair], log) -> Iterator[ImageTextPair]:
    """Yield only pairs whose ids are absent from the log, preserving order."""
    completed = log.completed() if isinstance(log, ProgressLog) else set(log)
    for pair in pairs:
        if pair.id not in completed:
            yield pair


def read_pairs(path, cfg: IngestConfig = IngestConfig()) -> Iterator[ImageTextPair]:
    """Stream pairs from a single canonical JSONL file."""
    return open_pair_stream(PairSource("jsonl", (str(path),)), cfg)


def write_score_records(records: Iterable[ScoreRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(score_record_line(rec) + "\n")
            n += 1
    return n


def read_score_records(path) -> Iterator[ScoreRecord]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield ScoreRecord.from_json(json.loads(line))


def score_record_line(rec: ScoreRecord) -> str:
    """Canonical one-line encoding; byte-stable for identical records."""
    return json.dumps(rec.to_json(), ensure_ascii=True, separators=(", ", ": "))


def completed_ids_in_score_file(path) -> set:
    """Ids already present in a score file, tolerating a torn final line.

    If the file does not end with a newline the trailing partial record is
    truncated away so a resumed run can append cleanly.
    """
    ids = set()
    if not os.path.exists(path):
        return ids
    with open(path, "rb") as f:
        data = f.read()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n")
        data = data[: cut + 1] if cut >= 0 else b""
        with open(path, "wb") as f:
            f.write(data)
    for line in data.decode("utf-8").splitlines():
        line = line.strip()
        if line:
            ids.add(json.loads(line)["id"])
    return ids

"""Command-line entry point: one subcommand per pipeline stage.

Every subcommand is a thin adapter over the library; errors surface as a
machine-readable JSON object on stderr (exit 1 for pipeline errors, exit 2
for usage errors). A JSON config file supplies defaults that individual
flags override; unknown config keys are rejected.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import core, curation, filtering, ingest, scorer, stats
from .core import (
    FilterSpec,
    MtfError,
    RunManifest,
    ShardInfo,
    config_digest,
    parse_metrics,
)
from .prompts import Mode, TeacherPath

CONFIG_KEYS = {
    "pairs", "scores", "metrics", "endpoint", "auth_token", "fraction",
    "combiner", "out", "seed", "concurrency", "resume", "max_new_tokens",
    "timeout", "spec", "human", "method", "fractions", "embeddings", "k",
    "max_iters", "epsilon", "minibatch", "path", "mode", "instructions",
    "bucket_count", "target_size", "downsample_threshold", "mixture",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        json.dump({"error": "UsageError", "message": message}, sys.stderr)
        sys.stderr.write("\n")
        raise SystemExit(2)


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise SystemExit(_usage_error(f"unknown config keys: {sorted(unknown)}"))
    return cfg


def _usage_error(message: str) -> int:
    json.dump({"error": "UsageError", "message": message}, sys.stderr)
    sys.stderr.write("\n")
    return 2


def _opt(args, cfg, key, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.get(key, default)


def _require(args, cfg, key):
    value = _opt(args, cfg, key)
    if value is None:
        raise SystemExit(_usage_error(f"--{key.replace('_', '-')} is required"))
    return value


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _read_spec_arg(raw: str) -> FilterSpec:
    if raw.startswith("@"):
        with open(raw[1:], encoding="utf-8") as f:
            return FilterSpec.from_json(json.load(f))
    return FilterSpec.from_json(json.loads(raw))


def _histograms(records, metrics) -> dict:
    hists = {m: filtering.Histogram101() for m in metrics}
    for rec in records:
        for m in metrics:
            if m in rec.scores:
                hists[m].add(rec.scores[m])
    # A metric with no scores at all reads as "no histogram", not an empty one.
    return {m: h for m, h in hists.items() if h.total}


def _backend(args, cfg):
    endpoint = scorer.ScorerEndpoint(
        base_url=_require(args, cfg, "endpoint"),
        concurrency=int(_opt(args, cfg, "concurrency", 4)),
        auth_token=_opt(args, cfg, "auth_token", os.environ.get("MTF_AUTH_TOKEN")),
        timeout=float(_opt(args, cfg, "timeout", 30.0)),
    )
    return scorer.backend_for(endpoint)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_score(args, cfg) -> int:
    pairs = list(ingest.read_pairs(_require(args, cfg, "pairs")))
    metrics = parse_metrics(_require(args, cfg, "metrics"))
    out = _require(args, cfg, "out")
    resume = bool(_opt(args, cfg, "resume", False))
    concurrency = int(_opt(args, cfg, "concurrency", 4))
    backend = _backend(args, cfg)
    try:
        summary = scorer.score_to_file(
            pairs,
            metrics,
            backend,
            out,
            resume=resume,
            log_path=f"{out}.progress",
            concurrency=concurrency,
            max_new_tokens=int(_opt(args, cfg, "max_new_tokens", 4)),
            timeout=float(_opt(args, cfg, "timeout", 30.0)),
        )
    finally:
        backend.close()

    run_cfg = {
        "pairs": str(_require(args, cfg, "pairs")),
        "metrics": [m.value for m in metrics],
        "endpoint": _require(args, cfg, "endpoint"),
        "concurrency": concurrency,
    }
    digest = config_digest(run_cfg)
    manifest = RunManifest(
        run_id=f"score-{digest[:12]}",
        shards=(ShardInfo(str(out), summary.written + summary.skipped),),
        config_digest=digest,
        progress_log=f"{out}.progress",
    )
    with open(f"{out}.manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest.to_json(), f, indent=2)
        f.write("\n")
    _emit({"written": summary.written, "skipped": summary.skipped, "out": str(out)})
    return 0


def _cmd_threshold(args, cfg) -> int:
    metrics = parse_metrics(_require(args, cfg, "metrics"))
    fraction = float(_opt(args, cfg, "fraction", 0.3))
    records = ingest.read_score_records(_require(args, cfg, "scores"))
    hists = _histograms(records, metrics)
    for m in metrics:
        if m not in hists:
            raise filtering.MissingHistogram(f"no scores for metric {m.value!r}")
    result = {
        "fraction": fraction,
        "thresholds": {m.value: filtering.compute_threshold(hists[m], fraction) for m in metrics},
        "totals": {m.value: hists[m].total for m in metrics},
    }
    out = _opt(args, cfg, "out")
    if out:
        with open(out, "w", encoding="utf-8") as f:
            json.dump(result, f, indent=2)
            f.write("\n")
    _emit(result)
    return 0


def _cmd_filter(args, cfg) -> int:
    raw_spec = _opt(args, cfg, "spec")
    if raw_spec is not None:
        spec = _read_spec_arg(raw_spec)
    else:
        # spec assembled from flags: --metrics [--fraction] [--combiner]
        spec = FilterSpec.from_json(
            {
                "metrics": _require(args, cfg, "metrics"),
                "fraction": float(_opt(args, cfg, "fraction", 0.3)),
                "combiner": str(_opt(args, cfg, "combiner", "SINGLE")),
            }
        )
    scores_path = _require(args, cfg, "scores")
    out_dir = Path(_require(args, cfg, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    if not spec.resolved:
        hists = _histograms(ingest.read_score_records(scores_path), spec.metrics)
        spec = filtering.resolve_spec(spec, hists)
    outcome = filtering.apply_filter(ingest.read_score_records(scores_path), spec)

    with open(out_dir / "retained_ids.jsonl", "w", encoding="utf-8") as f:
        for pair_id in outcome.retained_ids:
            f.write(json.dumps({"id": pair_id}) + "\n")
    pairs_path = _opt(args, cfg, "pairs")
    if pairs_path:
        retained = set(outcome.retained_ids)
        with open(out_dir / "retained_pairs.jsonl", "w", encoding="utf-8") as f:
            for pair in ingest.read_pairs(pairs_path):
                if pair.id in retained:
                    f.write(json.dumps(pair.to_json(), ensure_ascii=True) + "\n")
    summary = outcome.summary_json()
    with open(out_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    _emit(summary)
    return 0


def _cmd_correlate(args, cfg) -> int:
    records = list(ingest.read_score_records(_require(args, cfg, "scores")))
    human = stats.load_human_scores(_require(args, cfg, "human"))
    metric = parse_metrics(_require(args, cfg, "metrics"))[0]
    sample = stats.paired_sample(records, human, metric)
    method = _opt(args, cfg, "method", "both")
    result = {"metric": metric.value, "n": sample.n}
    if method in ("pearson", "both"):
        result["pearson"] = stats.pearson(sample).to_json()
    if method in ("spearman", "both"):
        result["spearman"] = stats.spearman(sample).to_json()
    _emit(result)
    return 0


def _cmd_report(args, cfg) -> int:
    records = list(ingest.read_score_records(_require(args, cfg, "scores")))
    scores_by_metric = {m: [] for m in core.METRIC_ORDER}
    for rec in records:
        for m, s in rec.scores.items():
            scores_by_metric[m].append(s)
    report = stats.distribution_report({m: v for m, v in scores_by_metric.items() if v})
    out_dir = Path(_require(args, cfg, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    stats.write_distribution_report(report, out_dir / "report.json", out_dir / "report.csv")
    _emit({"metrics": sorted(report), "out": str(out_dir)})
    return 0


def _cmd_sweep(args, cfg) -> int:
    metric = parse_metrics(_require(args, cfg, "metrics"))[0]
    raw_fracs = _opt(args, cfg, "fractions")
    fractions = None
    if raw_fracs:
        if isinstance(raw_fracs, str):
            fractions = [float(x) for x in raw_fracs.split(",") if x.strip()]
        else:
            fractions = [float(x) for x in raw_fracs]
    records = ingest.read_score_records(_require(args, cfg, "scores"))
    hist = _histograms(records, (metric,))[metric]
    rows = stats.fraction_sweep(hist, fractions)
    _emit({"metric": metric.value, "rows": [r.to_json() for r in rows]})
    return 0


def _cmd_curate_cluster(args, cfg) -> int:
    table = scorer.EmbeddingTable.load(_require(args, cfg, "embeddings"))
    cluster_cfg = curation.ClusterConfig(
        k=int(_require(args, cfg, "k")),
        seed=int(_opt(args, cfg, "seed", 0)),
        max_iters=int(_opt(args, cfg, "max_iters", 100)),
        epsilon=float(_opt(args, cfg, "epsilon", 1e-6)),
        minibatch=_opt(args, cfg, "minibatch"),
    )
    fit = curation.kmeans_fit(table.text, cluster_cfg)
    reps = curation.representatives_from_fit(table.text, fit)
    report = {
        "k": cluster_cfg.k,
        "iterations": fit.iterations,
        "objective": fit.objective,
        "representatives": [table.ids[i] for i in reps],
    }
    out = _opt(args, cfg, "out")
    if out:
        with open(out, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
    _emit({"k": report["k"], "iterations": report["iterations"], "objective": report["objective"]})
    return 0


def _cmd_curate_jobs(args, cfg) -> int:
    pairs = ingest.read_pairs(_require(args, cfg, "pairs"))
    metrics = parse_metrics(_require(args, cfg, "metrics"))
    path = TeacherPath(_opt(args, cfg, "path", "vision"))
    mode = Mode(_opt(args, cfg, "mode", "rationalization"))
    out = _require(args, cfg, "out")
    n = 0
    with open(out, "w", encoding="utf-8") as f:
        for job in curation.emit_teacher_jobs(pairs, metrics, path, mode):
            f.write(json.dumps(job.to_json(), ensure_ascii=True) + "\n")
            n += 1
    _emit({"jobs": n, "out": str(out)})
    return 0


def _cmd_curate_sample(args, cfg) -> int:
    records = list(curation.read_instruction_records(_require(args, cfg, "instructions")))
    for rec in records:
        if rec.score is None:
            raise MtfError("instruction records must carry a score for balanced sampling")
    sampler = curation.SamplerConfig(
        bucket_count=int(_opt(args, cfg, "bucket_count", 10)),
        target_size=int(_opt(args, cfg, "target_size", 1000)),
        downsample_threshold=int(_opt(args, cfg, "downsample_threshold", 130)),
        seed=int(_opt(args, cfg, "seed", 0)),
    )
    selected = curation.balanced_sample([(r, int(r.score)) for r in records], sampler)
    out = _require(args, cfg, "out")
    curation.write_instruction_records((r for r, _ in selected), out)
    _emit({"selected": len(selected), "out": str(out)})
    return 0


def _cmd_curate_mixture(args, cfg) -> int:
    with open(_require(args, cfg, "mixture"), encoding="utf-8") as f:
        mix = json.load(f)
    components = [curation.MixtureComponent(p["source"], int(p["count"])) for p in mix["pools"]]
    spec = curation.MixtureSpec(
        pools=tuple(components),
        total=int(mix.get("total", sum(c.count for c in components))),
    )
    pools = {
        p["source"]: list(curation.read_instruction_records(p["path"]))
        for p in mix["pools"]
    }
    mixed = curation.assemble_mixture(spec, pools, seed=int(_opt(args, cfg, "seed", 0)))
    out = _require(args, cfg, "out")
    n = curation.write_instruction_records(mixed, out)
    _emit({"records": n, "out": str(out)})
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtf", description="Score, threshold, filter, and curate image-text pools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score pairs against an endpoint")
    p.add_argument("--pairs")
    p.add_argument("--metrics")
    p.add_argument("--endpoint", help="scorer base URL, or 'mock:' for the built-in stub")
    p.add_argument("--out")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--resume", action="store_true", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("threshold", help="resolve integer thresholds from a score file")
    p.add_argument("--scores")
    p.add_argument("--metrics")
    p.add_argument("--fraction", type=float)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("filter", help="apply a filter spec to scored pairs")
    p.add_argument("--scores")
    p.add_argument("--pairs")
    p.add_argument("--spec", help="inline JSON or @file; alternative to the flags below")
    p.add_argument("--metrics")
    p.add_argument("--fraction", type=float)
    p.add_argument("--combiner", choices=["SINGLE", "AND", "OR", "single", "and", "or"])
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("correlate", help="correlate model scores with human labels")
    p.add_argument("--scores")
    p.add_argument("--human")
    p.add_argument("--metrics")
    p.add_argument("--method", choices=["pearson", "spearman", "both"])
    _add_common(p)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("report", help="score distribution report (JSON + CSV)")
    p.add_argument("--scores")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("sweep", help="threshold sweep over retention fractions")
    p.add_argument("--scores")
    p.add_argument("--metrics")
    p.add_argument("--fractions")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("curate", help="instruction-dataset construction stages")
    csub = p.add_subparsers(dest="stage", required=True)

    c = csub.add_parser("cluster", help="centroid-nearest diversity selection")
    c.add_argument("--embeddings")
    c.add_argument("--k", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--max-iters", dest="max_iters", type=int)
    c.add_argument("--epsilon", type=float)
    c.add_argument("--minibatch", type=int)
    c.add_argument("--out")
    _add_common(c)
    c.set_defaults(func=_cmd_curate_cluster)

    c = csub.add_parser("jobs", help="emit teacher jobs for scoring tasks")
    c.add_argument("--pairs")
    c.add_argument("--metrics")
    c.add_argument("--path", choices=["vision", "text_only"])
    c.add_argument("--mode", choices=["rationalization", "cot"])
    c.add_argument("--out")
    _add_common(c)
    c.set_defaults(func=_cmd_curate_jobs)

    c = csub.add_parser("sample", help="score-balanced sampling of instructions")
    c.add_argument("--instructions")
    c.add_argument("--bucket-count", dest="bucket_count", type=int)
    c.add_argument("--target-size", dest="target_size", type=int)
    c.add_argument("--downsample-threshold", dest="downsample_threshold", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    _add_common(c)
    c.set_defaults(func=_cmd_curate_sample)

    c = csub.add_parser("mixture", help="assemble the multi-task instruction mixture")
    c.add_argument("--mixture", help="JSON spec: {pools: [{source, path, count}], total}")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    _add_common(c)
    c.set_defaults(func=_cmd_curate_mixture)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _load_config(getattr(args, "config", None))
    return args.func(args, cfg)


def main(argv=None) -> int:
    try:
        return dispatch(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except (MtfError, ValueError, OSError, json.JSONDecodeError) as e:
        json.dump({"error": type(e).__name__, "message": str(e)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

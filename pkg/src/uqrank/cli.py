"""Command-line front end.

Exit codes: 0 success, 2 validation errors, 3 config errors, 4 numeric
failure. The ``run`` subcommand drives the full pipeline from a TOML/JSON
config (or a previous run manifest); the other subcommands expose the
individual stages.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import MethodKind, PerformanceTable, TaskKind
from .errors import ConfigError, UqrankError, ValidationFailure
from .ingest import CorrectnessRule, parse_log_file, record_correct
from .pipeline import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_VALIDATION,
    RunConfig,
    _Pipeline,
    effective_threads,
    fmt4,
    load_scores_json,
    render_aol_fit_json,
    render_eval_csv,
    render_fd_pairs_csv,
    render_perf_corr,
    render_rankings_csv,
    render_scores_json,
    run_pipeline,
)
from .rankeval import rank_models
from .synth import EnsembleConfig, write_ensemble
from .transfer import aol_scores, atc_estimate, calibrate_atc_threshold, subset_baseline
from .uncertainty import record_score
from .core import EmbeddingSet


def _parse_rules(pairs: list[str]) -> dict[str, CorrectnessRule]:
    rules = {}
    for pair in pairs or []:
        dataset_id, sep, rule_text = pair.partition("=")
        if not sep:
            raise ConfigError(f"--rule expects dataset=rule, got {pair!r}")
        try:
            rules[dataset_id] = CorrectnessRule.parse(rule_text)
        except ValueError as exc:
            raise ConfigError(f"bad rule {pair!r}: {exc}") from exc
    return rules


def _parse_prefix_map(pairs: list[str], flag: str) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        dataset_id, sep, prefix = pair.partition("=")
        if not sep:
            raise ConfigError(f"{flag} expects dataset=path, got {pair!r}")
        out[dataset_id] = prefix
    return out


def _parse_methods(text: str) -> tuple[MethodKind, ...]:
    if text == "all":
        return tuple(MethodKind)
    try:
        return tuple(MethodKind(m.strip()) for m in text.split(",") if m.strip())
    except ValueError as exc:
        raise ConfigError(f"unknown method in {text!r}: {exc}") from exc


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _load_logs(paths: list[str]):
    records = []
    seen: set = set()
    for path in paths:
        if not Path(path).exists():
            raise ConfigError(f"log file not found: {path}")
        file_records, report = parse_log_file(path, seen_keys=seen)
        if report.errors:
            first = report.errors[0]
            raise ValidationFailure(
                f"{path}: {len(report.errors)} invalid lines "
                f"(first: line {first.line_number} {first.code}: {first.message})"
            )
        records.extend(file_records)
    return records


# --- subcommands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    status = EXIT_OK
    for path in args.logs:
        if not Path(path).exists():
            print(f"{path}: NOT FOUND")
            return EXIT_CONFIG
        _, report = parse_log_file(path)
        verdict = "ok" if report.ok else "INVALID"
        print(
            f"{path}: {verdict} accepted={report.records_accepted} "
            f"errors={len(report.errors)} warnings={len(report.warnings)}"
        )
        limit = None if args.verbose else 10
        for entry in report.errors[:limit]:
            print(f"  line {entry.line_number}: {entry.code}: {entry.message}")
        if not args.quiet:
            for entry in report.warnings[:limit]:
                print(f"  line {entry.line_number}: warning {entry.code}: {entry.message}")
        if report.errors:
            status = EXIT_VALIDATION
    return status


def cmd_simulate(args) -> int:
    cfg = EnsembleConfig(
        n_models=args.n_models,
        n_samples=args.n_samples,
        task_kind=TaskKind(args.task_kind),
        accuracy_range=(args.accuracy_lo, args.accuracy_hi),
        calibration_noise=args.calibration_noise,
        vocab_sizes=tuple(int(v) for v in args.vocab_sizes.split(",")),
        resamples_per_record=args.resamples,
        temperature=args.temperature,
        seed=args.seed,
        dataset_id=args.dataset_id,
    )
    result = write_ensemble(cfg, args.out, args.truth_out)
    print(f"wrote {len(result.records)} records to {args.out}")
    if args.truth_out:
        print(f"wrote realized-accuracy table to {args.truth_out}")
    return EXIT_OK


def _pipeline_from_args(args, methods: tuple[MethodKind, ...]) -> _Pipeline:
    cfg = RunConfig(
        logs=tuple(args.logs),
        methods=methods,
        out_dir=".",
        rules=_parse_rules(getattr(args, "rule", None)),
        proxy_dataset_id=getattr(args, "proxy_dataset", None),
        consistency_embeddings=_parse_prefix_map(
            getattr(args, "embeddings", None), "--embeddings"
        ),
        expanded_embeddings=_parse_prefix_map(
            getattr(args, "expanded_embeddings", None), "--expanded-embeddings"
        ),
        option_maps=_parse_prefix_map(getattr(args, "options", None), "--options"),
        subset_n=getattr(args, "subset_n", 50),
        subset_seed=getattr(args, "subset_seed", 0),
        subset_draws=getattr(args, "subset_draws", 1),
        threads=getattr(args, "threads", None),
    )
    pipeline = _Pipeline(cfg)
    errors = pipeline.parse_logs()
    if errors:
        first = errors[0]
        raise ValidationFailure(
            f"{len(errors)} invalid log lines "
            f"(first: {first['file']} line {first['line']} {first['code']})"
        )
    return pipeline


def cmd_score(args) -> int:
    methods = _parse_methods(args.methods)
    pipeline = _pipeline_from_args(args, methods)
    needs_truth = MethodKind.AOL in methods
    if needs_truth:
        pipeline.build_truth()
    pipeline.compute_tables(effective_threads(args.threads))
    _write_or_print(render_scores_json(pipeline.tables), args.out)
    for warning in pipeline.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


def cmd_rank(args) -> int:
    tables = load_scores_json(args.scores)
    method = MethodKind(args.method)
    if method not in tables:
        raise ConfigError(f"scores file has no table for method {method.value}")
    table = tables[method]
    datasets = [args.dataset] if args.dataset else table.datasets()
    lines = ["method,dataset_id,model_id,score,rank"]
    for dataset_id in datasets:
        for ranked in rank_models(table, dataset_id):
            lines.append(
                f"{method.value},{dataset_id},{ranked.model_id},{fmt4(ranked.score)},{ranked.rank}"
            )
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    tables = load_scores_json(args.scores)
    truth = PerformanceTable.load_csv(args.perf)
    datasets = sorted({d for t in tables.values() for d in t.datasets()})
    text = render_eval_csv(tables, truth, datasets, lambda m: print(f"warning: {m}", file=sys.stderr))
    _write_or_print(text, args.out)
    return EXIT_OK


def cmd_atc(args) -> int:
    rules = _parse_rules(args.rule)
    proxy_records = _load_logs(args.proxy_logs)
    target_records = _load_logs(args.target_logs)
    proxy_ids = {r.dataset_id for r in proxy_records}
    if len(proxy_ids) != 1:
        raise ConfigError(f"proxy logs must hold exactly one dataset, got {sorted(proxy_ids)}")
    proxy_dataset = proxy_ids.pop()
    by_model_proxy: dict[str, list] = {}
    for record in proxy_records:
        by_model_proxy.setdefault(record.model_id, []).append(record)
    by_cell: dict[tuple[str, str], list] = {}
    for record in target_records:
        by_cell.setdefault(record.key[:2], []).append(record)
    lines = ["model_id,dataset_id,delta,atc"]
    for model_id in sorted(by_model_proxy):
        pairs = [
            (record_score(r, MethodKind.NLL_MIN), record_correct(r, rules))
            for r in by_model_proxy[model_id]
        ]
        threshold = calibrate_atc_threshold(pairs, MethodKind.NLL_MIN, proxy_dataset)
        for (cell_model, dataset_id), cell in sorted(by_cell.items()):
            if cell_model != model_id:
                continue
            us = [record_score(r, MethodKind.NLL_MIN) for r in cell]
            estimate = atc_estimate(us, threshold)
            lines.append(f"{model_id},{dataset_id},{fmt4(threshold.delta)},{fmt4(estimate)}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_aol(args) -> int:
    truth = PerformanceTable.load_csv(args.perf)
    targets = args.targets.split(",") if args.targets else [
        d for d in truth.datasets() if d != args.source_dataset
    ]
    models = sorted(truth.column(args.source_dataset))
    if not models:
        raise ConfigError(f"no models with performance on {args.source_dataset!r}")
    table = aol_scores(truth, args.source_dataset, models, target_datasets=targets)
    lines = ["model_id,dataset_id,score"]
    for (model_id, dataset_id), score in sorted(table.entries.items()):
        lines.append(f"{model_id},{dataset_id},{fmt4(score)}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_subset(args) -> int:
    rules = _parse_rules(args.rule)
    records = _load_logs(args.logs)
    by_dataset: dict[str, list] = {}
    for record in records:
        by_dataset.setdefault(record.dataset_id, []).append(record)
    lines = ["model_id,dataset_id,score"]
    entries: dict[tuple[str, str], float] = {}
    for dataset_id in sorted(by_dataset):
        draws = []
        for draw in range(args.draws):
            table = subset_baseline(by_dataset[dataset_id], args.n, args.seed + draw, rules)
            draws.append(table.entries)
        for key in draws[0]:
            entries[key] = sum(e[key] for e in draws) / len(draws)
    for (model_id, dataset_id), score in sorted(entries.items()):
        lines.append(f"{model_id},{dataset_id},{fmt4(score)}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_fd(args) -> int:
    prefix_map = _parse_prefix_map(args.embeddings, "--embeddings")
    if len(prefix_map) < 2:
        raise ConfigError("fd requires --embeddings for at least two datasets")
    sets = {}
    for dataset_id, prefix in sorted(prefix_map.items()):
        if not Path(prefix).with_suffix(".json").exists():
            raise ConfigError(f"embedding file not found: {Path(prefix).with_suffix('.json')}")
        sets[dataset_id] = EmbeddingSet.load(prefix)
    truth = (
        PerformanceTable.load_csv(args.perf) if args.perf else PerformanceTable("accuracy", {})
    )
    _write_or_print(render_fd_pairs_csv(sets, truth), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    tables = load_scores_json(args.scores)
    truth = PerformanceTable.load_csv(args.perf)
    datasets = sorted({d for t in tables.values() for d in t.datasets()})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    warn = lambda m: print(f"warning: {m}", file=sys.stderr)
    (out_dir / "rankings.csv").write_text(render_rankings_csv(tables), encoding="utf-8")
    (out_dir / "eval.csv").write_text(
        render_eval_csv(tables, truth, datasets, warn), encoding="utf-8"
    )
    corr_datasets = sorted(set(datasets) | set(truth.datasets()))
    corr_csv, corr_json = render_perf_corr(truth, corr_datasets)
    (out_dir / "perf_corr.csv").write_text(corr_csv, encoding="utf-8")
    (out_dir / "perf_corr.json").write_text(corr_json, encoding="utf-8")
    (out_dir / "aol_fit.json").write_text(render_aol_fit_json(truth, warn), encoding="utf-8")
    print(f"wrote reports to {out_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = RunConfig.from_file(args.config, out_dir_override=args.out_dir)
    if args.threads is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, threads=args.threads)
    result = run_pipeline(cfg)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if result.exit_code == EXIT_OK:
        print(f"run complete: {len(result.artifacts)} artifacts in {result.out_dir}")
    else:
        print(
            json.dumps({"exit_code": result.exit_code, "errors": result.errors}, indent=2),
            file=sys.stderr,
        )
        print(f"run failed; partial outputs in {result.out_dir / 'quarantine'}", file=sys.stderr)
    return result.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqrank",
        description="Rank generative models on unlabeled data from inference-log uncertainty.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate JSONL inference logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--quiet", action="store_true", help="suppress warnings")
    p.add_argument("--verbose", action="store_true", help="print every error")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="generate a synthetic ensemble log")
    p.add_argument("--n-models", type=int, required=True)
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--task-kind", choices=["mcvq", "vqa"], default="vqa")
    p.add_argument("--accuracy-lo", type=float, default=0.2)
    p.add_argument("--accuracy-hi", type=float, default=0.9)
    p.add_argument("--calibration-noise", type=float, default=0.0)
    p.add_argument("--vocab-sizes", default="32000", help="comma-separated vocabulary sizes")
    p.add_argument("--resamples", type=int, default=0)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset-id", default="synth")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="compute proxy score tables from logs")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--methods", default="all", help="comma-separated methods or 'all'")
    p.add_argument("--rule", action="append", help="dataset=rule correctness rule")
    p.add_argument("--proxy-dataset", default=None)
    p.add_argument("--embeddings", action="append", help="dataset=prefix consistency embeddings")
    p.add_argument(
        "--expanded-embeddings", action="append", help="dataset=prefix expanded-answer embeddings"
    )
    p.add_argument("--options", action="append", help="dataset=path option-map JSON")
    p.add_argument("--subset-n", type=int, default=50)
    p.add_argument("--subset-seed", type=int, default=0)
    p.add_argument("--subset-draws", type=int, default=1)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rank", help="rank models from a saved scores.json")
    p.add_argument("--scores", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="correlate saved scores against ground truth")
    p.add_argument("--scores", required=True)
    p.add_argument("--perf", required=True, help="performance CSV (model_id,dataset_id,score)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("atc", help="calibrate ATC on proxy logs and estimate target accuracy")
    p.add_argument("--proxy-logs", nargs="+", required=True)
    p.add_argument("--target-logs", nargs="+", required=True)
    p.add_argument("--rule", action="append")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_atc)

    p = sub.add_parser("aol", help="probit-scaled source accuracy as transfer scores")
    p.add_argument("--perf", required=True)
    p.add_argument("--source-dataset", required=True)
    p.add_argument("--targets", default=None, help="comma-separated target datasets")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_aol)

    p = sub.add_parser("subset", help="labeled-subset baseline scores")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--rule", action="append")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("fd", help="Frechet distances between dataset embedding sets")
    p.add_argument("--embeddings", action="append", required=True, help="dataset=prefix")
    p.add_argument("--perf", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fd)

    p = sub.add_parser("report", help="regenerate report artifacts from saved scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--perf", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline from a TOML/JSON config or run manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None, help="override the configured output directory")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UqrankError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

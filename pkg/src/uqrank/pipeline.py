"""Batch pipeline: logs in, score tables and report artifacts out.

A run is described by a RunConfig (TOML or JSON). Outputs are
byte-deterministic given the same inputs and config: all merges happen in
sorted key order and every mean is an exactly-rounded fsum, so the thread
count never shows up in the artifacts. On failure, whatever was computed
lands in ``<out_dir>/quarantine`` next to a machine-readable error list.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import platform
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .consistency import ExpansionRule, SimilarityKind, consistency_dataset_score
from .core import (
    EmbeddingSet,
    GenerationRecord,
    MethodKind,
    PerformanceTable,
    ScoreTable,
)
from .errors import ConfigError, RuleError, UqrankError
from .geometry import fd_vs_correlation
from .ingest import CorrectnessRule, parse_log_file, record_correct
from .rankeval import evaluate_method, performance_correlation_matrix, rank_models
from .transfer import (
    ATC_SIGN_NOTE,
    aol_scores,
    atc_estimate,
    calibrate_atc_threshold,
    fit_huber,
    probit,
    subset_baseline,
)
from .uncertainty import ScoreDiagnostics, dataset_score, record_score

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

DEFAULT_THREADS = 4
ENTROPY_FALLBACK_WARN_RATE = 0.10

METHOD_NOTES = {
    MethodKind.SAMPLE_BERT.value: "sample_bert (sentence-embedding variant)",
    MethodKind.SAMPLE_BERT_EXPANDED.value: "sample_bert (sentence-embedding variant, expanded answers)",
    MethodKind.ATC.value: ATC_SIGN_NOTE,
}

SAMPLE_METHODS = (
    MethodKind.SAMPLE_BLEU,
    MethodKind.SAMPLE_BERT,
    MethodKind.SAMPLE_BERT_EXPANDED,
)


@dataclass(frozen=True)
class RunConfig:
    logs: tuple[str, ...]
    methods: tuple[MethodKind, ...]
    out_dir: str
    rules: Mapping[str, CorrectnessRule] = field(default_factory=dict)
    perf_csv: str | None = None
    metric_name: str = "accuracy"
    proxy_dataset_id: str | None = None
    consistency_embeddings: Mapping[str, str] = field(default_factory=dict)
    expanded_embeddings: Mapping[str, str] = field(default_factory=dict)
    fd_embeddings: Mapping[str, str] = field(default_factory=dict)
    option_maps: Mapping[str, str] = field(default_factory=dict)
    subset_n: int = 50
    subset_seed: int = 0
    subset_draws: int = 1
    threads: int | None = None

    def __post_init__(self) -> None:
        if not self.logs:
            raise ConfigError("config must list at least one log file")
        if not self.methods:
            raise ConfigError("config must request at least one method")
        if self.subset_n < 1 or self.subset_draws < 1:
            raise ConfigError("subset_n and subset_draws must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def to_json_obj(self) -> dict:
        return {
            "logs": list(self.logs),
            "methods": [m.value for m in self.methods],
            "out_dir": self.out_dir,
            "rules": {
                d: (r.kind.value if r.tolerance is None else f"{r.kind.value}:{r.tolerance}")
                for d, r in sorted(self.rules.items())
            },
            "perf_csv": self.perf_csv,
            "metric_name": self.metric_name,
            "proxy_dataset_id": self.proxy_dataset_id,
            "consistency_embeddings": dict(sorted(self.consistency_embeddings.items())),
            "expanded_embeddings": dict(sorted(self.expanded_embeddings.items())),
            "fd_embeddings": dict(sorted(self.fd_embeddings.items())),
            "option_maps": dict(sorted(self.option_maps.items())),
            "subset_n": self.subset_n,
            "subset_seed": self.subset_seed,
            "subset_draws": self.subset_draws,
            "threads": self.threads,
        }

    @classmethod
    def from_obj(cls, obj: Mapping, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError("run config must be a table/object")
        if "config" in obj and isinstance(obj["config"], Mapping):
            obj = obj["config"]  # replay from a run manifest

        def resolve(path_text: str) -> str:
            # Absolute from the config's own directory, so a saved manifest
            # replays correctly from any working directory.
            path = Path(path_text)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return os.path.abspath(path)

        known = {
            "logs", "methods", "out_dir", "rules", "perf_csv", "metric_name",
            "proxy_dataset_id", "consistency_embeddings", "expanded_embeddings",
            "fd_embeddings", "option_maps", "subset_n", "subset_seed",
            "subset_draws", "threads",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            methods_raw = obj.get("methods", "all")
            if methods_raw == "all":
                methods = tuple(MethodKind)
            else:
                methods = tuple(MethodKind(m) for m in methods_raw)
            rules = {
                str(d): CorrectnessRule.parse(str(r))
                for d, r in dict(obj.get("rules", {})).items()
            }
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        return cls(
            logs=tuple(resolve(p) for p in obj.get("logs", ())),
            methods=methods,
            out_dir=resolve(obj["out_dir"]) if "out_dir" in obj else "out",
            rules=rules,
            perf_csv=resolve(obj["perf_csv"]) if obj.get("perf_csv") else None,
            metric_name=str(obj.get("metric_name", "accuracy")),
            proxy_dataset_id=obj.get("proxy_dataset_id"),
            consistency_embeddings={
                str(d): resolve(p) for d, p in dict(obj.get("consistency_embeddings", {})).items()
            },
            expanded_embeddings={
                str(d): resolve(p) for d, p in dict(obj.get("expanded_embeddings", {})).items()
            },
            fd_embeddings={
                str(d): resolve(p) for d, p in dict(obj.get("fd_embeddings", {})).items()
            },
            option_maps={
                str(d): resolve(p) for d, p in dict(obj.get("option_maps", {})).items()
            },
            subset_n=int(obj.get("subset_n", 50)),
            subset_seed=int(obj.get("subset_seed", 0)),
            subset_draws=int(obj.get("subset_draws", 1)),
            threads=int(obj["threads"]) if obj.get("threads") is not None else None,
        )

    @classmethod
    def from_file(cls, path: str | Path, out_dir_override: str | None = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            try:
                obj = tomllib.loads(text)
            except Exception as exc:
                raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        else:
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        cfg = cls.from_obj(obj, base_dir=path.parent)
        if out_dir_override is not None:
            cfg = dataclasses.replace(cfg, out_dir=out_dir_override)
        return cfg


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    artifacts: list[str] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def effective_threads(requested: int | None) -> int:
    """Requested worker count, capped by the UQRANK_THREADS environment knob."""
    threads = requested if requested is not None else DEFAULT_THREADS
    cap_text = os.environ.get("UQRANK_THREADS")
    if cap_text:
        try:
            cap = int(cap_text)
        except ValueError:
            raise ConfigError(f"UQRANK_THREADS must be an integer, got {cap_text!r}")
        if cap < 1:
            raise ConfigError("UQRANK_THREADS must be >= 1")
        threads = min(threads, cap)
    return max(1, threads)


def fmt4(value: float | None) -> str:
    """4-decimal fixed formatting; NaN/None serialize as empty."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.4f}"


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _null_warn(message: str) -> None:
    pass


# --- renderers (CLI reuses these on previously saved artifacts) -----------------

def render_scores_json(tables: Mapping[MethodKind, ScoreTable]) -> str:
    obj = {
        "method_notes": METHOD_NOTES,
        "tables": [tables[m].to_json_obj() for m in MethodKind if m in tables],
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_scores_json(path: str | Path) -> dict[MethodKind, ScoreTable]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    tables = [ScoreTable.from_json_obj(t) for t in obj["tables"]]
    return {t.method: t for t in tables}


def render_rankings_csv(tables: Mapping[MethodKind, ScoreTable]) -> str:
    rows = [["method", "dataset_id", "model_id", "score", "rank"]]
    for method in MethodKind:
        if method not in tables:
            continue
        table = tables[method]
        for dataset_id in table.datasets():
            for ranked in rank_models(table, dataset_id):
                rows.append(
                    [method.value, dataset_id, ranked.model_id, fmt4(ranked.score), str(ranked.rank)]
                )
    return _csv_text(rows)


def render_eval_csv(
    tables: Mapping[MethodKind, ScoreTable],
    truth: PerformanceTable,
    datasets: Sequence[str],
    warn: Callable[[str], None] = _null_warn,
) -> str:
    header = ["method"]
    for dataset_id in datasets:
        header += [f"{dataset_id}_rho", f"{dataset_id}_tau_w"]
    header += ["avg_rho", "avg_tau_w"]
    rows = [header]
    for method in MethodKind:
        if method not in tables:
            continue
        table = tables[method]
        row = [method.value]
        rhos, taus = [], []
        for dataset_id in datasets:
            try:
                result = evaluate_method(table, truth, dataset_id)
            except UqrankError as exc:
                warn(f"eval: {method.value} on {dataset_id}: {exc}")
                row += ["", ""]
                continue
            if result.unstable:
                warn(f"eval: {method.value} on {dataset_id}: UNSTABLE (n=2)")
            row += [fmt4(result.rho), fmt4(result.tau_w)]
            rhos.append(result.rho)
            taus.append(result.tau_w)
        row.append(fmt4(math.fsum(rhos) / len(rhos)) if rhos else "")
        row.append(fmt4(math.fsum(taus) / len(taus)) if taus else "")
        rows.append(row)
    return _csv_text(rows)


def render_perf_corr(truth: PerformanceTable, datasets: Sequence[str]) -> tuple[str, str]:
    matrix = performance_correlation_matrix(truth, datasets)
    rows = [[""] + list(datasets)]
    for i, dataset_id in enumerate(datasets):
        rows.append([dataset_id] + [fmt4(matrix[i, j]) for j in range(len(datasets))])
    json_obj = {
        "datasets": list(datasets),
        "matrix": [
            [None if math.isnan(matrix[i, j]) else matrix[i, j] for j in range(len(datasets))]
            for i in range(len(datasets))
        ],
    }
    return _csv_text(rows), json.dumps(json_obj, indent=2, sort_keys=True) + "\n"


def render_aol_fit_json(
    truth: PerformanceTable, warn: Callable[[str], None] = _null_warn
) -> str:
    """Huber fits of probit(source accuracy) against target accuracy for
    every ordered dataset pair with at least three shared models."""
    fits = []
    datasets = truth.datasets()
    for source in datasets:
        for target in datasets:
            if source == target:
                continue
            source_col = truth.column(source)
            target_col = truth.column(target)
            models = sorted(set(source_col) & set(target_col))
            if len(models) < 3:
                continue
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                xs = [probit(source_col[m]) for m in models]
            for w in caught:
                warn(f"aol_fit {source}->{target}: {w.message}")
            ys = [target_col[m] for m in models]
            if all(x == xs[0] for x in xs):
                warn(f"aol_fit {source}->{target}: degenerate probit inputs; skipped")
                continue
            fit = fit_huber(xs, ys)
            fits.append(
                {
                    "source": source,
                    "target": target,
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "scale": fit.scale,
                    "iterations": fit.iterations,
                    "n": len(models),
                }
            )
    return json.dumps({"fits": fits}, indent=2, sort_keys=True) + "\n"


def render_fd_pairs_csv(
    embedding_sets: Mapping[str, EmbeddingSet], truth: PerformanceTable
) -> str:
    pairs = fd_vs_correlation(embedding_sets, truth)
    rows = [["dataset_a", "dataset_b", "fd", "rho", "is_min_fd_partner"]]
    for pair in pairs:
        rows.append(
            [
                pair.dataset_a,
                pair.dataset_b,
                fmt4(pair.fd),
                fmt4(pair.rho),
                "true" if pair.is_min_fd_partner else "false",
            ]
        )
    return _csv_text(rows)


def _load_embedding_map(
    paths: Mapping[str, str], method: MethodKind
) -> dict[str, EmbeddingSet]:
    out = {}
    for dataset_id, prefix in sorted(paths.items()):
        header = Path(prefix).with_suffix(".json")
        if not header.exists():
            raise ConfigError(
                f"method {method.value} requires embedding file {header}, which is missing"
            )
        out[dataset_id] = EmbeddingSet.load(prefix)
    return out


def _load_option_maps(paths: Mapping[str, str]) -> dict[str, dict[str, dict[str, str]]]:
    out = {}
    for dataset_id, path in sorted(paths.items()):
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"option map file not found: {p}")
        out[dataset_id] = json.loads(p.read_text(encoding="utf-8"))
    return out


class _Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.warnings: list[str] = []
        self.records: list[GenerationRecord] = []
        self.cells: dict[tuple[str, str], list[GenerationRecord]] = {}
        self.datasets: list[str] = []
        self.truth: PerformanceTable | None = None
        self.tables: dict[MethodKind, ScoreTable] = {}
        self.artifacts: dict[str, str] = {}

    def parse_logs(self) -> list[dict]:
        seen: set[tuple[str, str, str]] = set()
        errors = []
        for log_path in self.cfg.logs:
            if not Path(log_path).exists():
                raise ConfigError(f"log file not found: {log_path}")
            records, report = parse_log_file(log_path, seen_keys=seen)
            self.records.extend(records)
            for entry in report.errors:
                errors.append(
                    {
                        "file": log_path,
                        "line": entry.line_number,
                        "code": entry.code,
                        "message": entry.message,
                    }
                )
            for entry in report.warnings:
                self.warnings.append(
                    f"{log_path}:{entry.line_number}: {entry.code}: {entry.message}"
                )
        for record in self.records:
            self.cells.setdefault(record.key[:2], []).append(record)
        self.datasets = sorted({d for _, d in self.cells})
        return errors

    def build_truth(self) -> None:
        if self.cfg.perf_csv is not None:
            path = Path(self.cfg.perf_csv)
            if not path.exists():
                raise ConfigError(f"performance CSV not found: {path}")
            self.truth = PerformanceTable.load_csv(path, self.cfg.metric_name)
            return
        try:
            entries = {}
            for (model_id, dataset_id), cell_records in sorted(self.cells.items()):
                values = [
                    1.0 if record_correct(r, self.cfg.rules) else 0.0 for r in cell_records
                ]
                entries[(model_id, dataset_id)] = math.fsum(values) / len(values)
            self.truth = PerformanceTable(self.cfg.metric_name, entries)
        except RuleError as exc:
            self.truth = None
            self.warnings.append(f"no ground truth available: {exc}")

    def _score_cells(self, method: MethodKind, threads: int) -> ScoreTable:
        keys = sorted(self.cells)
        diags = {key: ScoreDiagnostics() for key in keys}
        if method in SAMPLE_METHODS:
            embeddings: Mapping[str, EmbeddingSet] = {}
            options: Mapping[str, dict] = {}
            if method is MethodKind.SAMPLE_BERT:
                embeddings = _load_embedding_map(self.cfg.consistency_embeddings, method)
            elif method is MethodKind.SAMPLE_BERT_EXPANDED:
                embeddings = _load_embedding_map(self.cfg.expanded_embeddings, method)
                options = _load_option_maps(self.cfg.option_maps)
            if method is not MethodKind.SAMPLE_BLEU:
                missing = [d for d in self.datasets if d not in embeddings]
                if missing:
                    raise ConfigError(
                        f"method {method.value} requires embeddings for datasets: "
                        f"{', '.join(missing)}"
                    )
            sim = (
                SimilarityKind.BLEU1
                if method is MethodKind.SAMPLE_BLEU
                else SimilarityKind.EMBED_COSINE
            )
            expansion = (
                ExpansionRule.EXPANDED_ANSWER
                if method is MethodKind.SAMPLE_BERT_EXPANDED
                else ExpansionRule.RAW
            )

            def score_cell(key):
                return consistency_dataset_score(
                    self.cells[key],
                    sim,
                    expansion=expansion,
                    embeddings=embeddings.get(key[1]),
                    options=options.get(key[1]),
                )

        else:

            def score_cell(key):
                return dataset_score(self.cells[key], method, diags[key])

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                values = list(pool.map(score_cell, keys))
        else:
            values = [score_cell(key) for key in keys]
        for key, diag in sorted(diags.items()):
            if diag.j1_fallbacks and method in (MethodKind.NLL_P, MethodKind.ENT_P):
                self.warnings.append(
                    f"{method.value}: cell {key}: penultimate token fell back to the only token "
                    f"on {diag.j1_fallbacks}/{len(self.cells[key])} records"
                )
            if diag.entropy_tokens and diag.entropy_fallback_rate > ENTROPY_FALLBACK_WARN_RATE:
                self.warnings.append(
                    f"{method.value}: cell {key}: entropy fallback used for "
                    f"{diag.entropy_fallback_rate:.1%} of tokens"
                )
        return ScoreTable.for_method(method, dict(zip(keys, values)))

    def _score_atc(self) -> ScoreTable:
        proxy = self.cfg.proxy_dataset_id
        if proxy is None:
            raise ConfigError("method atc requires proxy_dataset_id in the config")
        if proxy not in self.datasets:
            raise ConfigError(f"proxy dataset {proxy!r} has no records in the logs")
        entries = {}
        models = sorted({m for m, _ in self.cells})
        for model_id in models:
            proxy_records = self.cells.get((model_id, proxy))
            if not proxy_records:
                self.warnings.append(f"atc: model {model_id} has no proxy records; skipped")
                continue
            pairs = [
                (record_score(r, MethodKind.NLL_MIN), record_correct(r, self.cfg.rules))
                for r in proxy_records
            ]
            threshold = calibrate_atc_threshold(pairs, MethodKind.NLL_MIN, proxy)
            for dataset_id in self.datasets:
                if dataset_id == proxy:
                    continue
                cell = self.cells.get((model_id, dataset_id))
                if not cell:
                    continue
                us = [record_score(r, MethodKind.NLL_MIN) for r in cell]
                entries[(model_id, dataset_id)] = atc_estimate(us, threshold)
        return ScoreTable.for_method(MethodKind.ATC, entries)

    def _score_aol(self) -> ScoreTable:
        proxy = self.cfg.proxy_dataset_id
        if proxy is None:
            raise ConfigError("method aol requires proxy_dataset_id in the config")
        if self.truth is None:
            raise ConfigError("method aol requires ground truth (perf_csv or decidable logs)")
        source_column = self.truth.column(proxy)
        if not source_column:
            raise ConfigError(f"no ground truth for source dataset {proxy!r}")
        models = sorted(source_column)
        targets = [d for d in self.datasets if d != proxy]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table = aol_scores(self.truth, proxy, models, target_datasets=targets)
        for w in caught:
            self.warnings.append(f"aol: {w.message}")
        return table

    def _score_subset(self) -> ScoreTable:
        entries: dict[tuple[str, str], float] = {}
        for dataset_id in self.datasets:
            records = [r for r in self.records if r.dataset_id == dataset_id]
            per_seed = []
            for draw in range(self.cfg.subset_draws):
                table = subset_baseline(
                    records, self.cfg.subset_n, self.cfg.subset_seed + draw, self.cfg.rules
                )
                per_seed.append(table.entries)
            for key in per_seed[0]:
                entries[key] = math.fsum(e[key] for e in per_seed) / len(per_seed)
        return ScoreTable.for_method(MethodKind.SUBSET_LABELED, entries)

    def compute_tables(self, threads: int) -> None:
        for method in MethodKind:
            if method not in self.cfg.methods:
                continue
            if method is MethodKind.ATC:
                self.tables[method] = self._score_atc()
            elif method is MethodKind.AOL:
                self.tables[method] = self._score_aol()
            elif method is MethodKind.SUBSET_LABELED:
                self.tables[method] = self._score_subset()
            else:
                self.tables[method] = self._score_cells(method, threads)

    def render_manifest(self, threads: int) -> str:
        obj = {
            "config": self.cfg.to_json_obj(),
            "versions": {
                "uqrank": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            "threads": threads,
            "seeds": {"subset_seed": self.cfg.subset_seed, "subset_draws": self.cfg.subset_draws},
            "notes": METHOD_NOTES,
            "warnings": sorted(self.warnings),
            "artifacts": sorted(self.artifacts),
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Execute a full scoring run; expected failure modes return a nonzero
    RunResult instead of raising."""
    out_dir = Path(cfg.out_dir)
    pipeline = _Pipeline(cfg)

    def quarantine(exit_code: int, errors: list[dict]) -> RunResult:
        qdir = out_dir / "quarantine"
        qdir.mkdir(parents=True, exist_ok=True)
        for name, text in pipeline.artifacts.items():
            (qdir / name).write_text(text, encoding="utf-8")
        (qdir / "errors.json").write_text(
            json.dumps({"errors": errors}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return RunResult(
            exit_code=exit_code,
            out_dir=out_dir,
            artifacts=sorted(pipeline.artifacts) + ["errors.json"],
            errors=errors,
            warnings=pipeline.warnings,
        )

    try:
        threads = effective_threads(cfg.threads)
        parse_errors = pipeline.parse_logs()
        if parse_errors:
            return quarantine(EXIT_VALIDATION, parse_errors)
        if not pipeline.records:
            return quarantine(
                EXIT_VALIDATION, [{"code": "NO_RECORDS", "message": "logs hold no records"}]
            )
        pipeline.build_truth()
        pipeline.compute_tables(threads)

        pipeline.artifacts["scores.json"] = render_scores_json(pipeline.tables)
        pipeline.artifacts["rankings.csv"] = render_rankings_csv(pipeline.tables)
        if pipeline.truth is not None:
            pipeline.artifacts["eval.csv"] = render_eval_csv(
                pipeline.tables, pipeline.truth, pipeline.datasets, pipeline.warnings.append
            )
            corr_datasets = sorted(set(pipeline.datasets) | set(pipeline.truth.datasets()))
            csv_text, json_text = render_perf_corr(pipeline.truth, corr_datasets)
            pipeline.artifacts["perf_corr.csv"] = csv_text
            pipeline.artifacts["perf_corr.json"] = json_text
            pipeline.artifacts["aol_fit.json"] = render_aol_fit_json(
                pipeline.truth, pipeline.warnings.append
            )
        if pipeline.cfg.fd_embeddings:
            sets = {
                d: EmbeddingSet.load(prefix)
                for d, prefix in sorted(pipeline.cfg.fd_embeddings.items())
            }
            truth = pipeline.truth if pipeline.truth is not None else PerformanceTable("accuracy", {})
            pipeline.artifacts["fd_pairs.csv"] = render_fd_pairs_csv(sets, truth)
        pipeline.artifacts["run_manifest.json"] = pipeline.render_manifest(threads)
    except ConfigError as exc:
        return quarantine(EXIT_CONFIG, [{"code": "CONFIG", "message": str(exc)}])
    except UqrankError as exc:
        return quarantine(EXIT_NUMERIC, [{"code": type(exc).__name__, "message": str(exc)}])

    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(pipeline.artifacts.items()):
        (out_dir / name).write_text(text, encoding="utf-8")
    return RunResult(
        exit_code=EXIT_OK,
        out_dir=out_dir,
        artifacts=sorted(pipeline.artifacts),
        warnings=pipeline.warnings,
    )

"""Experiment orchestration: generate, evaluate, write artifacts, render the report."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ghlgen import reporter
from ghlgen.cache import ResponseCache
from ghlgen.config import RunConfig
from ghlgen.corpus import (
    DatasetManifest,
    FunctionEntry,
    TruthTestCase,
    ingest_requirements,
    ingest_strategy,
    ingest_truth_cases,
    load_manifest,
)
from ghlgen.evaluator import (
    Histogram,
    MatchRule,
    MatchSet,
    MetricsSummary,
    SimilarityMatrix,
    aggregate_functions,
    aggregate_runs,
    build_similarity_matrix,
    compute_metrics,
    empty_matchset,
    match_threshold,
    similarity_histogram,
)
from ghlgen.gateway import LIVE_RECORD, CacheMissError, Gateway, HttpProvider, ProviderError
from ghlgen.genpipeline import RUNNERS, STRATEGIES, GenerationRun, GenerationSettings, load_templates

logger = logging.getLogger(__name__)

STRATEGY_DIRS = {"ZeroShot": "zero-shot", "GHL": "ghl", "GHLF": "ghl-f"}
SELECTORS = {
    "zero-shot": ("ZeroShot",),
    "ghl": ("GHL",),
    "ghl-f": ("GHLF",),
    "all": STRATEGIES,
}

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_CACHE_MISS = 3
EXIT_PROVIDER = 4


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def build_gateway(cfg: RunConfig, provider=None) -> Gateway:
    cache = ResponseCache(cfg.cache_path)
    mode = cfg.execution.mode
    if mode == LIVE_RECORD and provider is None:
        provider = HttpProvider.from_env(cfg.provider.endpoint, cfg.provider.credential_env)
    return Gateway(
        cache=cache,
        provider=provider,
        mode=mode,
        max_attempts=cfg.execution.max_attempts,
        backoff_s=cfg.execution.backoff_s,
        concurrency=cfg.execution.concurrency,
    )


def generation_settings(cfg: RunConfig) -> GenerationSettings:
    gen = cfg.generation
    prompt_dir = cfg.resolve(gen.prompt_dir)
    return GenerationSettings(
        model_id=cfg.provider.model_id,
        temperature=gen.temperature,
        seed=gen.seed,
        max_output_tokens=gen.max_output_tokens,
        max_words=gen.chunk_max_words,
        overlap_words=gen.chunk_overlap_words,
        attach_strategy=gen.attach_strategy,
        output_format_suffix=gen.output_format_suffix,
        technique_format_suffix=gen.technique_format_suffix,
        templates=load_templates(prompt_dir) if prompt_dir else None,
    )


@dataclass
class Evaluation:
    function_key: str
    strategy: str
    run_index: int
    rule: MatchRule
    matrix: SimilarityMatrix | None
    matchset: MatchSet
    metrics: MetricsSummary
    histogram: Histogram

    def to_dict(self, size_cap: int) -> dict:
        include = self.matrix is not None and self.matrix.scores.size <= size_cap
        return {
            "function_key": self.function_key,
            "strategy": self.strategy,
            "run_index": self.run_index,
            "rule": {"mode": self.rule.mode, "threshold": self.rule.threshold},
            "metrics": self.metrics.to_dict(),
            "pairs": [list(p) for p in self.matchset.sorted_pairs()],
            "histogram": {
                "bin_width": self.histogram.bin_width,
                "threshold_marker": self.histogram.threshold_marker,
                "total": self.histogram.total,
                "bins": [list(b) for b in self.histogram.bins],
            },
            "matrix": self.matrix.to_dict(include_scores=True) if include else None,
            "matrix_omitted": self.matrix is not None and not include,
        }


def evaluate_cases(truth: list[TruthTestCase], run: GenerationRun, gateway: Gateway, cfg: RunConfig) -> Evaluation:
    ev = cfg.evaluation
    rule = MatchRule(ev.mode, ev.threshold)
    A, B = len(truth), len(run.cases)
    if B == 0:
        matrix, matchset = None, empty_matchset(rule)
        hist = Histogram(ev.bin_width, (), 0, ev.threshold)
    else:
        matrix = build_similarity_matrix(truth, run.cases, gateway, cfg.provider.embedding_model_id)
        matchset = match_threshold(matrix, rule)
        hist = similarity_histogram(matrix, ev.bin_width, ev.threshold)
    metrics = compute_metrics(A, B, matchset, run.duration_s)
    return Evaluation(run.function_key, run.strategy, run.run_index, rule, matrix, matchset, metrics, hist)


@dataclass
class FunctionResult:
    dataset: str
    function_key: str
    strategy: str
    runs: list[GenerationRun] = field(default_factory=list)
    evaluations: list[Evaluation] = field(default_factory=list)

    @property
    def summary(self) -> MetricsSummary:
        return aggregate_runs([e.metrics for e in self.evaluations])


@dataclass
class ExperimentOutcome:
    results: list[FunctionResult]
    failures: list[str]
    exit_code: int
    report_dir: Path | None
    dataset_summaries: dict


def _write(path: Path, text: str) -> None:
    reporter.write_text(path, text)


def _selected_functions(manifest: DatasetManifest, keys) -> list[FunctionEntry]:
    if not keys:
        return list(manifest.functions)
    chosen = [f for f in manifest.functions if f.function_key in keys]
    missing = set(keys) - {f.function_key for f in chosen}
    if missing and not chosen:
        raise KeyError(f"unknown function key(s) {sorted(missing)} in dataset {manifest.dataset_name}")
    return chosen


def run_experiment(cfg: RunConfig, dataset_names=None, function_keys=None, strategies=STRATEGIES,
                   gateway: Gateway | None = None) -> ExperimentOutcome:
    """Generate, evaluate and report for every dataset x function x strategy x repeat."""
    gateway = gateway or build_gateway(cfg)
    settings = generation_settings(cfg)
    names = list(dataset_names or sorted(cfg.datasets))
    out = cfg.output_dir
    results: list[FunctionResult] = []
    failures: list[str] = []
    codes = set()

    for name in names:
        if name not in cfg.datasets:
            raise KeyError(f"dataset {name!r} not in config")
        manifest = load_manifest(cfg.resolve(cfg.datasets[name]))
        for entry in _selected_functions(manifest, function_keys):
            doc = ingest_requirements(entry.requirement_paths, entry.function_key)
            strategy_doc = ingest_strategy(entry.strategy_path) if entry.strategy_path else None
            truth = ingest_truth_cases(entry.truth_path, entry.id_scheme, entry.function_key)
            if not truth:
                failures.append(f"{name}/{entry.function_key}: no truth cases")
                codes.add(EXIT_PARTIAL)
                continue
            for strategy in strategies:
                fr = FunctionResult(name, entry.function_key, strategy)
                for rep in range(cfg.execution.repeats):
                    item = f"{name}/{entry.function_key}/{STRATEGY_DIRS[strategy]}/run-{rep}"
                    try:
                        run = RUNNERS[strategy](doc, strategy_doc, gateway, rep, settings)
                        evaluation = evaluate_cases(truth, run, gateway, cfg)
                    except CacheMissError as exc:
                        failures.append(f"{item}: {exc}")
                        codes.add(EXIT_CACHE_MISS)
                        continue
                    except ProviderError as exc:
                        failures.append(f"{item}: provider failure: {exc}")
                        codes.add(EXIT_PROVIDER)
                        continue
                    for msg in run.failures:
                        failures.append(f"{item}: skipped {msg}")
                        codes.add(EXIT_PROVIDER)
                    fr.runs.append(run)
                    fr.evaluations.append(evaluation)
                    _write_run_artifacts(out / name / entry.function_key / STRATEGY_DIRS[strategy] / f"run-{rep}",
                                         run, evaluation, cfg)
                if fr.evaluations:
                    results.append(fr)

    dataset_summaries = summarize(results)
    report_dir = write_report(out / "report", results, dataset_summaries, cfg) if results else None
    if EXIT_CACHE_MISS in codes:
        code = EXIT_CACHE_MISS
    elif EXIT_PROVIDER in codes:
        code = EXIT_PROVIDER
    elif codes:
        code = EXIT_PARTIAL
    else:
        code = EXIT_OK
    return ExperimentOutcome(results, failures, code, report_dir, dataset_summaries)


def _write_run_artifacts(run_dir: Path, run: GenerationRun, evaluation: Evaluation, cfg: RunConfig) -> None:
    gen = run.to_dict()
    gen["config"] = cfg.snapshot()
    _write(run_dir / "generation.json", dump_json(gen))
    _write(run_dir / "evaluation.json", dump_json(evaluation.to_dict(cfg.evaluation.matrix_size_cap)))
    _write(run_dir / "transcripts.json", dump_json([asdict(t) for t in run.transcripts]))


def summarize(results: list[FunctionResult]) -> dict:
    """{(dataset, strategy): {"functions": {key: summary}, "macro": summary, "pooled": summary}}"""
    grouped: dict = {}
    for fr in results:
        grouped.setdefault((fr.dataset, fr.strategy), {})[fr.function_key] = fr.summary
    out = {}
    for key, per_fn in grouped.items():
        values = list(per_fn.values())
        out[key] = {
            "functions": per_fn,
            "macro": aggregate_functions(values),
            "pooled": aggregate_functions(values, pooled=True),
        }
    return out


def write_report(report_dir: Path, results: list[FunctionResult], dataset_summaries: dict, cfg: RunConfig) -> Path:
    ev = cfg.evaluation
    macro = {k: v["macro"] for k, v in dataset_summaries.items()}
    parts = ["# Test case generation summary\n", reporter.render_summary(macro)]

    for (ds, st) in sorted(dataset_summaries, key=lambda k: (k[0], STRATEGIES.index(k[1]))):
        entry = dataset_summaries[(ds, st)]
        label = reporter.STRATEGY_LABELS[st]
        parts.append(reporter.render_function_table(entry["functions"], entry["macro"],
                                                    title=f"{ds}: {label} per function"))
        _write(report_dir / "tables" / f"{ds}__{STRATEGY_DIRS[st]}__functions.csv",
               reporter.function_table_csv(entry["functions"], entry["macro"]))

    for ds in sorted({fr.dataset for fr in results}):
        for st in ("GHL", "GHLF"):
            techs = {fr.function_key: fr.runs[0].techniques_used
                     for fr in results if fr.dataset == ds and fr.strategy == st and fr.runs}
            if techs:
                parts.append(f"### {ds}: extracted test design techniques ({reporter.STRATEGY_LABELS[st]})\n\n"
                             + reporter.render_technique_tally(techs))
                _write(report_dir / "tables" / f"{ds}__{STRATEGY_DIRS[st]}__techniques.csv",
                       reporter.technique_tally_csv(techs))

    _write(report_dir / "summary.md", "\n".join(parts))
    _write(report_dir / "tables" / "summary.csv", reporter.summary_csv(macro))

    multi = len({fr.dataset for fr in results}) > 1
    by_function: dict = {}
    for fr in results:
        by_function.setdefault((fr.dataset, fr.function_key), []).append(fr)
    for (ds, fkey), frs in sorted(by_function.items()):
        frs.sort(key=lambda f: STRATEGIES.index(f.strategy))
        lines = [f"# {ds} / {fkey}\n",
                 reporter.render_function_table(
                     {reporter.STRATEGY_LABELS[f.strategy]: f.summary for f in frs})]
        for fr in frs:
            for e in fr.evaluations:
                reporter.emit_histogram_data(
                    e.histogram,
                    report_dir / "histograms" / f"{ds}__{fkey}__{STRATEGY_DIRS[fr.strategy]}__run-{e.run_index}.csv")
            evaluation = fr.evaluations[0]
            label = reporter.STRATEGY_LABELS[fr.strategy]
            if evaluation.matrix is None:
                lines.append(f"## {label}, run 0\n\nNo generated test cases.\n")
                continue
            lines.append(f"## {label}, run 0: highest-similarity matches\n\n"
                         + reporter.render_match_examples(evaluation.matchset, evaluation.matrix, ev.report_top_k))
            first = evaluation.matrix.truth_keys[0]
            lines.append(f"## {label}, run 0: nearest generated cases\n\n"
                         + reporter.render_nearest_neighbors(first, evaluation.matrix, ev.neighbors_k))
        name = f"{ds}__{fkey}.md" if multi else f"{fkey}.md"
        _write(report_dir / "per_function" / name, "\n".join(lines))
    return report_dir


def evaluate_artifact(cfg: RunConfig, truth_path: Path, id_scheme: str, generated_path: Path,
                      gateway: Gateway | None = None) -> Evaluation:
    data = json.loads(Path(generated_path).read_text(encoding="utf-8"))
    run = GenerationRun.from_dict(data)
    truth = ingest_truth_cases(truth_path, id_scheme, run.function_key)
    if not truth:
        raise ValueError("no truth cases")
    if not run.cases:
        raise ValueError("no generated cases")
    gateway = gateway or build_gateway(cfg)
    return evaluate_cases(truth, run, gateway, cfg)

"""Command-line entry point: ``ghlgen run | evaluate | cache``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ghlgen.cache import verify_file
from ghlgen.config import ConfigError, apply_overrides, load_config
from ghlgen.corpus import ID_SCHEMES, CorpusError
from ghlgen.evaluator import EvaluationError
from ghlgen.experiment import (
    EXIT_CACHE_MISS,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PARTIAL,
    EXIT_PROVIDER,
    SELECTORS,
    dump_json,
    evaluate_artifact,
    run_experiment,
)
from ghlgen.gateway import AuthenticationError, CacheMissError, ProviderError

logger = logging.getLogger("ghlgen")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--offline", action="store_true", help="replay from the cache only; never call the provider")
    p.add_argument("--threshold", type=float)
    p.add_argument("--rounding", choices=("one-decimal", "raw"))
    p.add_argument("--bin-width", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghlgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="generate, evaluate and report")
    _add_common(run)
    run.add_argument("--dataset", action="append", help="dataset name from the config (repeatable; default all)")
    run.add_argument("--function", action="append", dest="functions", help="function key (repeatable)")
    run.add_argument("--strategy", choices=sorted(SELECTORS), default="all")
    run.add_argument("--repeats", type=int)
    run.add_argument("--out", type=Path, help="output directory")

    ev = sub.add_parser("evaluate", help="score an existing generation artifact")
    _add_common(ev)
    ev.add_argument("--truth", type=Path, required=True)
    ev.add_argument("--id-scheme", choices=ID_SCHEMES, default="freetext")
    ev.add_argument("--generated", type=Path, required=True, help="generation.json from a run")
    ev.add_argument("--out", type=Path, help="where to write evaluation.json (default: next to --generated)")

    cache = sub.add_parser("cache", help="inspect the response cache")
    cache.add_argument("action", choices=("stats", "verify"))
    cache.add_argument("--config", type=Path)
    cache.add_argument("--cache", type=Path, help="cache file (overrides the config)")
    cache.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _config(args, **extra):
    cfg = load_config(args.config)
    cfg = apply_overrides(
        cfg,
        offline=args.offline,
        threshold=args.threshold,
        rounding=args.rounding,
        bin_width=args.bin_width,
        seed=args.seed,
        **extra,
    )
    try:
        return cfg.validate()
    except TypeError as exc:
        raise ConfigError(f"bad value type in config: {exc}") from exc


def cmd_run(args) -> int:
    try:
        cfg = _config(args, repeats=args.repeats, out=args.out)
        if not cfg.datasets:
            raise ConfigError("config lists no datasets")
        outcome = run_experiment(cfg, args.dataset, args.functions, SELECTORS[args.strategy])
    except (ConfigError, CorpusError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AuthenticationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    for msg in outcome.failures:
        print(f"FAILED {msg}", file=sys.stderr)
    if outcome.report_dir is not None:
        print(f"report: {outcome.report_dir}")
    for (ds, st), entry in sorted(outcome.dataset_summaries.items()):
        m = entry["macro"]
        print(f"{ds} {st}: A={m.A:g} B={m.B:g} C={m.C:g} D={m.D:g} "
              f"precision={m.macro_precision:.2f} recall={m.macro_recall:.2f} f1={m.f1:.2f}")
    return outcome.exit_code


def cmd_evaluate(args) -> int:
    try:
        cfg = _config(args)
        if not args.truth.is_file() or not args.generated.is_file():
            raise ConfigError("missing input: --truth and --generated must exist")
        evaluation = evaluate_artifact(cfg, args.truth, args.id_scheme, args.generated)
    except (ConfigError, CorpusError, EvaluationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CacheMissError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE_MISS
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    out = args.out or args.generated.with_name("evaluation.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(evaluation.to_dict(cfg.evaluation.matrix_size_cap)))
    m = evaluation.metrics
    print(f"A={m.A} B={m.B} C={m.C} D={m.D} ratio_num={m.ratio_num:.2f} "
          f"precision={m.macro_precision:.2f} recall={m.macro_recall:.2f} f1={m.f1:.2f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_cache(args) -> int:
    try:
        path = args.cache or load_config(args.config).cache_path
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not path.exists() and args.action == "stats":
        print("0 completion, 0 embedding")
        return EXIT_OK
    try:
        report = verify_file(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    counts = report.counts()
    print(f"{counts['completion']} completion, {counts['embedding']} embedding")
    if args.action == "stats":
        return EXIT_OK
    for msg in report.warnings:
        print(f"warning: {msg}")
    for msg in report.corrupt:
        print(f"corrupt: {msg}")
    return EXIT_PARTIAL if report.corrupt else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return {"run": cmd_run, "evaluate": cmd_evaluate, "cache": cmd_cache}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

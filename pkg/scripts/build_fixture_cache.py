"""Record the bundled mini fixture cache from scripted transcripts.

The scripted provider answers every prompt from fixtures/mini/script.json and
embeds text as bag-of-words counts over the fixture vocabulary, so the cache
(and every replayed metric) is reproducible byte for byte.

    python scripts/build_fixture_cache.py [--fixture-dir fixtures/mini]
"""

from __future__ import annotations

import argparse
import json
import tempfile
from dataclasses import replace
from pathlib import Path

from ghlgen.cache import ResponseCache
from ghlgen.config import load_config
from ghlgen.experiment import run_experiment
from ghlgen.gateway import LIVE_RECORD, Gateway
from ghlgen.genpipeline import parse_case_list
from ghlgen.testing import ScriptedProvider, bag_of_words_embedder, simple_tokens

FIXED_CLOCK = "2026-01-01T00:00:00+00:00"
ROOT = Path(__file__).resolve().parent.parent


def fixture_vocabulary(fixture_dir: Path, script: dict) -> list[str]:
    texts = []
    for truth in sorted(fixture_dir.glob("*.truth")):
        texts.append(truth.read_text(encoding="utf-8"))
    for stages in script.values():
        for answer in stages.values():
            answers = answer.values() if isinstance(answer, dict) else [answer]
            for text in answers:
                texts.extend(parse_case_list(text))
    return sorted({tok for t in texts for tok in simple_tokens(t)})


def build(fixture_dir: Path) -> Path:
    script = json.loads((fixture_dir / "script.json").read_text(encoding="utf-8"))
    cfg = load_config(fixture_dir / "config.json")
    cache_path = cfg.cache_path
    if cache_path.exists():
        cache_path.unlink()
    provider = ScriptedProvider(script, bag_of_words_embedder(fixture_vocabulary(fixture_dir, script)))
    gateway = Gateway(ResponseCache(cache_path, clock=lambda: FIXED_CLOCK), provider, mode=LIVE_RECORD,
                      concurrency=1, timer=lambda: 0.0)
    with tempfile.TemporaryDirectory() as tmp:
        cfg = replace(cfg, execution=replace(cfg.execution, mode=LIVE_RECORD, repeats=1),
                      paths=replace(cfg.paths, output=tmp))
        outcome = run_experiment(cfg, gateway=gateway)
    if outcome.exit_code != 0:
        raise SystemExit(f"recording failed: {outcome.failures}")
    counts = gateway.cache.counts()
    print(f"wrote {cache_path}: {counts['completion']} completion, {counts['embedding']} embedding")
    return cache_path


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--fixture-dir", type=Path, default=ROOT / "fixtures" / "mini")
    args = parser.parse_args()
    build(args.fixture_dir)


if __name__ == "__main__":
    main()

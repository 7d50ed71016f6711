"""Run configuration: JSON file -> dataclasses, with CLI overrides applied on top."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ghlgen.corpus import DEFAULT_MAX_WORDS, DEFAULT_OVERLAP_WORDS
from ghlgen.evaluator import DEFAULT_BIN_WIDTH, DEFAULT_THRESHOLD, MATCH_MODES, ROUNDED_ONE_DECIMAL
from ghlgen.gateway import DEFAULT_CREDENTIAL_ENV, MODES, REPLAY_ONLY
from ghlgen.genpipeline import DEFAULT_CASE_FORMAT, DEFAULT_TECHNIQUE_FORMAT


class ConfigError(ValueError):
    pass


@dataclass
class ProviderConfig:
    endpoint: str = "https://api.openai.com/v1"
    model_id: str = "gpt-4o-mini"
    embedding_model_id: str = "text-embedding-3-small"
    credential_env: str = DEFAULT_CREDENTIAL_ENV


@dataclass
class GenerationConfig:
    temperature: float = 0.0
    seed: int = 42
    max_output_tokens: int = 4096
    chunk_max_words: int = DEFAULT_MAX_WORDS
    chunk_overlap_words: int = DEFAULT_OVERLAP_WORDS
    attach_strategy: bool = True
    output_format_suffix: str = DEFAULT_CASE_FORMAT
    technique_format_suffix: str = DEFAULT_TECHNIQUE_FORMAT
    prompt_dir: str | None = None


@dataclass
class EvaluationConfig:
    mode: str = ROUNDED_ONE_DECIMAL
    threshold: float = DEFAULT_THRESHOLD
    bin_width: float = DEFAULT_BIN_WIDTH
    matrix_size_cap: int = 20000
    report_top_k: int = 10
    neighbors_k: int = 7


@dataclass
class ExecutionConfig:
    repeats: int = 3
    concurrency: int = 4
    mode: str = REPLAY_ONLY
    max_attempts: int = 3
    backoff_s: float = 1.0


@dataclass
class PathsConfig:
    cache: str = "cache.ghlc"
    output: str = "out"


@dataclass
class RunConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    # dataset name -> manifest path
    datasets: dict[str, str] = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def cache_path(self) -> Path:
        return self.resolve(self.paths.cache)

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.paths.output)

    def validate(self) -> "RunConfig":
        ex, ev, gen = self.execution, self.evaluation, self.generation
        if ex.repeats < 1:
            raise ConfigError("execution.repeats must be >= 1")
        if ex.concurrency < 1:
            raise ConfigError("execution.concurrency must be >= 1")
        if ex.max_attempts < 1:
            raise ConfigError("execution.max_attempts must be >= 1")
        if ex.mode not in MODES:
            raise ConfigError(f"execution.mode must be one of {MODES}")
        if ex.mode == REPLAY_ONLY and not self.cache_path.is_file():
            raise ConfigError(f"replay_only mode needs an existing cache file, {self.cache_path} not found")
        if ev.mode not in MATCH_MODES:
            raise ConfigError(f"evaluation.mode must be one of {MATCH_MODES}")
        if not 0 < ev.threshold <= 1:
            raise ConfigError("evaluation.threshold must be in (0, 1]")
        if not 0 < ev.bin_width <= 1:
            raise ConfigError("evaluation.bin_width must be in (0, 1]")
        if gen.temperature < 0:
            raise ConfigError("generation.temperature must be >= 0")
        if gen.chunk_max_words <= 0 or not 0 <= gen.chunk_overlap_words < gen.chunk_max_words:
            raise ConfigError("generation chunk sizes: need 0 <= overlap < max_words")
        return self

    def snapshot(self) -> dict:
        """Semantic parameters only; paths and credentials stay out of artifacts."""
        return {
            "provider": {k: v for k, v in asdict(self.provider).items() if k != "credential_env"},
            "generation": asdict(self.generation),
            "evaluation": asdict(self.evaluation),
        }


_SECTIONS = {
    "provider": ProviderConfig,
    "generation": GenerationConfig,
    "evaluation": EvaluationConfig,
    "execution": ExecutionConfig,
    "paths": PathsConfig,
}


def _build_section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"datasets"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    provider = raw.get("provider") or {}
    for secret in ("api_key", "credential", "token"):
        if isinstance(provider, dict) and secret in provider:
            raise ConfigError("credentials come from the environment only; remove provider." + secret)
    sections = {name: _build_section(cls, raw.get(name), name) for name, cls in _SECTIONS.items()}
    datasets = raw.get("datasets", {})
    if not isinstance(datasets, dict):
        raise ConfigError("datasets must map names to manifest paths")
    return RunConfig(**sections, datasets=dict(datasets), base_dir=Path(base_dir))


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent)


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply CLI-style overrides; ``None`` values are ignored."""
    ex, ev, gen, paths = cfg.execution, cfg.evaluation, cfg.generation, cfg.paths
    if overrides.get("repeats") is not None:
        ex = replace(ex, repeats=overrides["repeats"])
    if overrides.get("offline"):
        ex = replace(ex, mode=REPLAY_ONLY)
    if overrides.get("threshold") is not None:
        ev = replace(ev, threshold=overrides["threshold"])
    if overrides.get("rounding") is not None:
        ev = replace(ev, mode={"one-decimal": ROUNDED_ONE_DECIMAL, "raw": "raw"}[overrides["rounding"]])
    if overrides.get("bin_width") is not None:
        ev = replace(ev, bin_width=overrides["bin_width"])
    if overrides.get("seed") is not None:
        gen = replace(gen, seed=overrides["seed"])
    if overrides.get("out") is not None:
        paths = replace(paths, output=str(Path(overrides["out"]).resolve()))
    return replace(cfg, execution=ex, evaluation=ev, generation=gen, paths=paths)

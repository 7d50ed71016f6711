"""Zero-shot, GHL and GHL-F test case generation.

GHL asks the model for applicable test design techniques first, then asks
for test cases once per technique. GHL-F adds one more prompt per chunk that
asks for combinations of the document's functions.
"""

from __future__ import annotations

import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from ghlgen.btid import is_bluetooth_id
from ghlgen.corpus import (
    DEFAULT_MAX_WORDS,
    DEFAULT_OVERLAP_WORDS,
    RequirementDocument,
    TestStrategyDocument,
    chunk_document,
)
from ghlgen.gateway import CompletionRequest, CompletionResult, Gateway, ProviderError
from ghlgen.techniques import DEFAULT_CATALOG, TechniqueCatalog, TestDesignTechnique, normalize_technique

logger = logging.getLogger(__name__)

ZERO_SHOT = "ZeroShot"
GHL_EXTRACT = "GhlExtractTechniques"
GHL_PER_TECHNIQUE = "GhlPerTechnique"
GHLF_COMBOS = "GhlfFunctionCombos"

TEMPLATE_FILES = {
    ZERO_SHOT: "zero_shot.txt",
    GHL_EXTRACT: "ghl_extract_techniques.txt",
    GHL_PER_TECHNIQUE: "ghl_per_technique.txt",
    GHLF_COMBOS: "ghlf_function_combos.txt",
}

STRATEGY_ZERO_SHOT = "ZeroShot"
STRATEGY_GHL = "GHL"
STRATEGY_GHLF = "GHLF"
STRATEGIES = (STRATEGY_ZERO_SHOT, STRATEGY_GHL, STRATEGY_GHLF)

DEFAULT_CASE_FORMAT = "List each test case on its own line, numbered."
DEFAULT_TECHNIQUE_FORMAT = "List each test design technique name on its own line, numbered."
NO_STRATEGY_TEXT = "(no test strategy document provided)"

_PLACEHOLDER = re.compile(r"\{(requirements|strategy|technique)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER.findall(self.body)))


def load_templates(override_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Bundled templates, replaced file-by-file by any same-named file in ``override_dir``."""
    out = {}
    pkg = resources.files("ghlgen") / "prompts"
    for tid, fname in TEMPLATE_FILES.items():
        body = None
        if override_dir is not None and (Path(override_dir) / fname).is_file():
            body = (Path(override_dir) / fname).read_text(encoding="utf-8")
        if body is None:
            body = (pkg / fname).read_text(encoding="utf-8")
        out[tid] = PromptTemplate(tid, body)
    return out


_DEFAULT_TEMPLATES: dict[str, PromptTemplate] | None = None


def default_templates() -> dict[str, PromptTemplate]:
    global _DEFAULT_TEMPLATES
    if _DEFAULT_TEMPLATES is None:
        _DEFAULT_TEMPLATES = load_templates()
    return _DEFAULT_TEMPLATES


def render_prompt(template_id: str, bindings: dict[str, str], templates=None) -> str:
    templates = templates or default_templates()
    if template_id not in templates:
        raise TemplateError(f"unknown template {template_id!r}")
    tmpl = templates[template_id]
    missing = [p for p in tmpl.placeholders if bindings.get(p) is None]
    if missing:
        raise TemplateError(f"unbound placeholder(s) {missing} for template {template_id}")
    # single pass so substituted text is never re-scanned
    return _PLACEHOLDER.sub(lambda m: bindings[m.group(1)], tmpl.body)


# -- output parsing ------------------------------------------------------------

_LIST_MARKER = re.compile(r"^\s*(?:\d+[.)]|\(\d+\)|[-*•+]|[a-zA-Z][.)])\s+")
_CASE_LEAD = re.compile(r"^(?:verify|test|check|ensure|validate)\b", re.IGNORECASE)
_TEST_ID_LEAD = re.compile(r"^(?:TC|Test\s*Case)[\s_-]*\d+\s*[:.)-]\s*", re.IGNORECASE)
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_FENCE = re.compile(r"^\s*```")
_TECHNIQUE_WORD = re.compile(
    r"\b(?:testing|test|analysis|partitioning|guessing|graphing|method|technique|table|tables|transition|coverage)\b",
    re.IGNORECASE,
)


def _clean(line: str) -> str:
    line = line.replace("**", "").replace("__", "")
    line = line.strip().strip("`").strip()
    return " ".join(line.split())


def _is_heading(line: str) -> bool:
    return line.lstrip().startswith("#")


def parse_case_list(completion_text: str) -> list[str]:
    """Pull test case descriptions out of free-form model output.

    List items, "Verify that ..."-style lines, and lines that are Bluetooth
    test case IDs are taken in order. Items under three words are dropped
    (unless they are Bluetooth IDs), as are label lines ending in a colon.
    Output with no such structure falls back to sentences that start with
    Verify/Test/Check.
    """
    lines = [ln for ln in completion_text.splitlines() if not _FENCE.match(ln)]
    out = []
    structured = False
    for raw in lines:
        if not raw.strip() or _is_heading(raw):
            continue
        marker = _LIST_MARKER.match(raw)
        text = _clean(raw[marker.end():] if marker else raw)
        text = _TEST_ID_LEAD.sub("", text).strip()
        if not text:
            continue
        if is_bluetooth_id(text):
            structured = True
            out.append(text)
            continue
        if marker is None:
            if not (_CASE_LEAD.match(text) or _TEST_ID_LEAD.match(_clean(raw))):
                continue
            if len(_SENTENCE_SPLIT.split(text)) > 1:
                # prose paragraph; handled by the sentence fallback
                continue
        structured = True
        if text.endswith(":") or len(text.split()) < 3:
            continue
        out.append(text)
    if structured:
        return out

    sentences = _SENTENCE_SPLIT.split(" ".join(completion_text.split()))
    return [s for s in (_clean(s) for s in sentences) if re.match(r"^(?:verify|test|check)\b", s, re.I)
            and len(s.split()) >= 3]


def parse_technique_list(completion_text: str) -> list[str]:
    """Technique names from numbered, bulleted, or comma-separated output."""
    names = []
    list_lines = []
    other_lines = []
    for raw in completion_text.splitlines():
        if not raw.strip() or _is_heading(raw) or _FENCE.match(raw):
            continue
        marker = _LIST_MARKER.match(raw)
        (list_lines if marker else other_lines).append(_clean(raw[marker.end():] if marker else raw))

    if list_lines:
        candidates = list_lines
    else:
        candidates = [part for line in other_lines for part in re.split(r"[,;]", line)]
    for item in candidates:
        name = re.split(r":|\s[-–—]\s", item, maxsplit=1)[0].strip().rstrip(".")
        if not name or len(name.split()) > 6:
            continue
        # unstructured prose: keep only things that look like technique names
        if not list_lines and not _TECHNIQUE_WORD.search(name):
            continue
        if re.search(r"\btechniques\s*$", name, re.I) and len(name.split()) > 1:
            continue
        names.append(name)
    return names


# -- domain types ------------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    strategy: str
    technique: str | None
    run_index: int
    chunk_index: int | None
    completion_digest: str
    line_index: int


@dataclass(frozen=True)
class GeneratedTestCase:
    description: str
    normalized: str
    provenance: Provenance

    __test__ = False


def normalize_case_text(text: str) -> str:
    return " ".join(text.lower().split())


def make_case(description: str, provenance: Provenance) -> GeneratedTestCase:
    if not description.strip():
        raise ValueError("generated test case description is empty")
    return GeneratedTestCase(description, normalize_case_text(description), provenance)


@dataclass(frozen=True)
class Transcript:
    stage: str
    chunk_index: int
    technique: str | None
    request_digest: str
    response_digest: str
    from_cache: bool


@dataclass
class GenerationRun:
    function_key: str
    strategy: str
    run_index: int
    techniques_used: list[str]
    cases: list[GeneratedTestCase]
    transcripts: list[Transcript]
    duration_s: float
    params: dict
    failures: list[str] = field(default_factory=list)
    technique_fallback: bool = False

    @property
    def num_gen_ts(self) -> int:
        return len(self.cases)

    def to_dict(self) -> dict:
        return {
            "function_key": self.function_key,
            "strategy": self.strategy,
            "run_index": self.run_index,
            "params": self.params,
            "techniques_used": list(self.techniques_used),
            "technique_fallback": self.technique_fallback,
            "num_gen_ts": self.num_gen_ts,
            "cases": [
                {"description": c.description, "normalized": c.normalized, "provenance": asdict(c.provenance)}
                for c in self.cases
            ],
            "transcripts": [asdict(t) for t in self.transcripts],
            "failures": list(self.failures),
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationRun":
        return cls(
            function_key=data["function_key"],
            strategy=data["strategy"],
            run_index=data["run_index"],
            techniques_used=list(data["techniques_used"]),
            cases=[
                GeneratedTestCase(c["description"], c["normalized"], Provenance(**c["provenance"]))
                for c in data["cases"]
            ],
            transcripts=[Transcript(**t) for t in data["transcripts"]],
            duration_s=data.get("duration_s", 0.0),
            params=data.get("params", {}),
            failures=list(data.get("failures", [])),
            technique_fallback=data.get("technique_fallback", False),
        )


@dataclass
class GenerationSettings:
    model_id: str = "gpt-4o-mini"
    temperature: float = 0.0
    seed: int = 42
    max_output_tokens: int = 4096
    max_words: int = DEFAULT_MAX_WORDS
    overlap_words: int = DEFAULT_OVERLAP_WORDS
    attach_strategy: bool = True
    output_format_suffix: str = DEFAULT_CASE_FORMAT
    technique_format_suffix: str = DEFAULT_TECHNIQUE_FORMAT
    templates: dict | None = None
    catalog: TechniqueCatalog = DEFAULT_CATALOG

    def snapshot(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "seed": self.seed,
            "max_output_tokens": self.max_output_tokens,
            "max_words": self.max_words,
            "overlap_words": self.overlap_words,
            "attach_strategy": self.attach_strategy,
            "output_format_suffix": self.output_format_suffix,
            "technique_format_suffix": self.technique_format_suffix,
        }

    def request(self, user_text: str, system_text: str, attachments=()) -> CompletionRequest:
        return CompletionRequest(
            model_id=self.model_id,
            user_text=user_text,
            system_text=system_text or None,
            attachments=tuple(attachments),
            temperature=self.temperature,
            seed=self.seed,
            max_output_tokens=self.max_output_tokens,
        )


# -- steps ---------------------------------------------------------------------------


def _transcript(stage: str, chunk_index: int, technique, res: CompletionResult) -> Transcript:
    return Transcript(stage, chunk_index, technique, res.digest, res.response_digest, res.from_cache)


def _extract(doc: RequirementDocument, gateway: Gateway, settings: GenerationSettings):
    chunks = chunk_document(doc, settings.max_words, settings.overlap_words)
    techniques: list[TestDesignTechnique] = []
    seen = set()
    transcripts = []
    for chunk in chunks:
        prompt = render_prompt(GHL_EXTRACT, {"requirements": chunk.body}, settings.templates)
        res = gateway.complete(settings.request(prompt, settings.technique_format_suffix))
        transcripts.append(_transcript("extract_techniques", chunk.index, None, res))
        for raw in parse_technique_list(res.text):
            tech = normalize_technique(raw, settings.catalog)
            if tech.canonical_name not in seen:
                seen.add(tech.canonical_name)
                techniques.append(tech)
    fallback = not techniques
    if fallback:
        logger.warning("no techniques extracted for %s; using catalog defaults", doc.function_key)
        techniques = settings.catalog.defaults()
    return techniques, transcripts, chunks, fallback


def extract_techniques(doc: RequirementDocument, gateway: Gateway, settings: GenerationSettings | None = None):
    """Ask for applicable techniques (once per chunk); canonicalized, first occurrence kept."""
    return _extract(doc, gateway, settings or GenerationSettings())[0]


def _dedup(cases: list[GeneratedTestCase]) -> list[GeneratedTestCase]:
    seen = set()
    out = []
    for c in cases:
        if c.normalized not in seen:
            seen.add(c.normalized)
            out.append(c)
    return out


def _cases_from(res: CompletionResult, strategy, technique, run_index, chunk_index) -> list[GeneratedTestCase]:
    return [
        make_case(text, Provenance(strategy, technique, run_index, chunk_index, res.digest, i))
        for i, text in enumerate(parse_case_list(res.text))
    ]


def run_zero_shot(doc, strategy_doc: TestStrategyDocument | None, gateway: Gateway, run_index: int = 0,
                  settings: GenerationSettings | None = None) -> GenerationRun:
    settings = settings or GenerationSettings()
    t0 = time.perf_counter()
    strategy_text = strategy_doc.body if strategy_doc else NO_STRATEGY_TEXT
    cases, transcripts = [], []
    for chunk in chunk_document(doc, settings.max_words, settings.overlap_words):
        prompt = render_prompt(ZERO_SHOT, {"requirements": chunk.body, "strategy": strategy_text}, settings.templates)
        try:
            res = gateway.complete(settings.request(prompt, settings.output_format_suffix))
        except Exception as exc:
            exc.chunk_index = chunk.index
            logger.error("zero-shot generation failed for %s chunk %d: %s", doc.function_key, chunk.index, exc)
            raise
        transcripts.append(_transcript("zero_shot", chunk.index, None, res))
        cases.extend(_cases_from(res, STRATEGY_ZERO_SHOT, None, run_index, chunk.index))
    return GenerationRun(
        function_key=doc.function_key,
        strategy=STRATEGY_ZERO_SHOT,
        run_index=run_index,
        techniques_used=[],
        cases=cases,
        transcripts=transcripts,
        duration_s=time.perf_counter() - t0,
        params=settings.snapshot(),
    )


def _ghl_raw(doc, strategy_doc, gateway: Gateway, run_index: int, settings: GenerationSettings, strategy: str):
    techniques, transcripts, chunks, fallback = _extract(doc, gateway, settings)
    attachments = ()
    if settings.attach_strategy and strategy_doc is not None:
        attachments = (("strategy", strategy_doc.body),)

    jobs = [(ti, tech, chunk) for ti, tech in enumerate(techniques) for chunk in chunks]

    def work(job):
        ti, tech, chunk = job
        prompt = render_prompt(
            GHL_PER_TECHNIQUE, {"requirements": chunk.body, "technique": tech.canonical_name}, settings.templates
        )
        try:
            return gateway.complete(settings.request(prompt, settings.output_format_suffix, attachments))
        except ProviderError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, gateway.concurrency)) as pool:
        results = list(pool.map(work, jobs))

    cases, failures = [], []
    for (ti, tech, chunk), res in zip(jobs, results):
        if isinstance(res, Exception):
            msg = f"{tech.canonical_name} (chunk {chunk.index}): {res}"
            logger.warning("technique generation skipped: %s", msg)
            failures.append(msg)
            continue
        transcripts.append(_transcript("per_technique", chunk.index, tech.canonical_name, res))
        cases.extend(_cases_from(res, strategy, tech.canonical_name, run_index, chunk.index))
    return techniques, cases, transcripts, chunks, failures, fallback


def run_ghl(doc, strategy_doc, gateway: Gateway, run_index: int = 0,
            settings: GenerationSettings | None = None) -> GenerationRun:
    settings = settings or GenerationSettings()
    t0 = time.perf_counter()
    techniques, cases, transcripts, _, failures, fallback = _ghl_raw(
        doc, strategy_doc, gateway, run_index, settings, STRATEGY_GHL
    )
    return GenerationRun(
        function_key=doc.function_key,
        strategy=STRATEGY_GHL,
        run_index=run_index,
        techniques_used=[t.canonical_name for t in techniques],
        cases=_dedup(cases),
        transcripts=transcripts,
        duration_s=time.perf_counter() - t0,
        params=settings.snapshot(),
        failures=failures,
        technique_fallback=fallback,
    )


def run_ghl_f(doc, strategy_doc, gateway: Gateway, run_index: int = 0,
              settings: GenerationSettings | None = None) -> GenerationRun:
    settings = settings or GenerationSettings()
    t0 = time.perf_counter()
    techniques, cases, transcripts, chunks, failures, fallback = _ghl_raw(
        doc, strategy_doc, gateway, run_index, settings, STRATEGY_GHLF
    )
    for chunk in chunks:
        prompt = render_prompt(GHLF_COMBOS, {"requirements": chunk.body}, settings.templates)
        try:
            res = gateway.complete(settings.request(prompt, settings.output_format_suffix))
        except ProviderError as exc:
            failures.append(f"function combinations (chunk {chunk.index}): {exc}")
            continue
        transcripts.append(_transcript("function_combos", chunk.index, None, res))
        cases.extend(_cases_from(res, STRATEGY_GHLF, None, run_index, chunk.index))
    return GenerationRun(
        function_key=doc.function_key,
        strategy=STRATEGY_GHLF,
        run_index=run_index,
        techniques_used=[t.canonical_name for t in techniques],
        cases=_dedup(cases),
        transcripts=transcripts,
        duration_s=time.perf_counter() - t0,
        params=settings.snapshot(),
        failures=failures,
        technique_fallback=fallback,
    )


RUNNERS = {
    STRATEGY_ZERO_SHOT: run_zero_shot,
    STRATEGY_GHL: run_ghl,
    STRATEGY_GHLF: run_ghl_f,
}

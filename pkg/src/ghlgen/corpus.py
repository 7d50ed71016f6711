"""Dataset ingestion: manifests, requirement documents, truth cases, chunking."""

from __future__ import annotations

import bisect
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from ghlgen.btid import BluetoothIdError, BluetoothTestCaseId, format_bluetooth_id, parse_bluetooth_id

logger = logging.getLogger(__name__)

ID_SCHEMES = ("bluetooth", "freetext")

DEFAULT_MAX_WORDS = 4000
DEFAULT_OVERLAP_WORDS = 200

_MD_HEADING = re.compile(r"^#{1,6}[ \t]+\S")
# "3. Overview", "2.1 Scope", "4.2.1. Rules"; long lines are list items, not headings
_NUM_HEADING = re.compile(r"^\d+(?:\.\d+)*\.?[ \t]+\S")
_NUM_HEADING_MAX_WORDS = 10
_WORD = re.compile(r"\S+")
_BLANK_LINE = re.compile(r"\n[ \t]*\n")


class CorpusError(Exception):
    pass


class ManifestError(CorpusError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class FunctionEntry:
    function_key: str
    requirement_paths: tuple[Path, ...]
    truth_path: Path
    id_scheme: str = "freetext"
    strategy_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    dataset_name: str
    functions: tuple[FunctionEntry, ...]
    source: Path | None = None

    def function(self, key: str) -> FunctionEntry:
        for entry in self.functions:
            if entry.function_key == key:
                return entry
        raise KeyError(key)


@dataclass(frozen=True)
class Section:
    heading: str
    start: int
    end: int


@dataclass(frozen=True)
class RequirementDocument:
    function_key: str
    body: str
    word_count: int
    sections: tuple[Section, ...]


@dataclass(frozen=True)
class TestStrategyDocument:
    body: str
    source: Path | None = None

    __test__ = False


@dataclass(frozen=True)
class TruthTestCase:
    case_key: str
    description: str
    function_key: str
    structured_id: BluetoothTestCaseId | None = None


@dataclass(frozen=True)
class DocumentChunk:
    """A word-budgeted slice of a requirement document.

    ``body`` starts with ``overlap_words`` words repeated from the previous
    chunk; ``body[new_offset:]`` is the part no earlier chunk contains.
    """

    function_key: str
    index: int
    body: str
    word_span: tuple[int, int]
    overlap_words: int = 0
    new_offset: int = 0

    @property
    def word_count(self) -> int:
        return self.word_span[1] - self.word_span[0]

    @property
    def fresh_text(self) -> str:
        return self.body[self.new_offset:]


# -- manifest ---------------------------------------------------------------


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a JSON dataset manifest; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(str(path), "manifest file not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(str(path), f"malformed manifest: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("$", "manifest must be a JSON object")

    name = raw.get("dataset_name")
    if not isinstance(name, str) or not name.strip():
        raise ManifestError("dataset_name", "must be a nonempty string")
    functions = raw.get("functions")
    if not isinstance(functions, list):
        raise ManifestError("functions", "must be a list")
    if not functions:
        raise ManifestError("functions", "manifest has no functions")

    base = path.parent
    entries = []
    seen = set()
    for i, item in enumerate(functions):
        loc = f"functions[{i}]"
        if not isinstance(item, dict):
            raise ManifestError(loc, "malformed record: expected an object")
        key = item.get("function_key")
        if not isinstance(key, str) or not key.strip():
            raise ManifestError(f"{loc}.function_key", "must be a nonempty string")
        if key in seen:
            raise ManifestError(f"{loc}.function_key", f"duplicate function_key {key!r}")
        seen.add(key)

        req = item.get("requirement_paths")
        if not isinstance(req, list) or not req or not all(isinstance(p, str) for p in req):
            raise ManifestError(f"{loc}.requirement_paths", "must be a nonempty list of paths")
        req_paths = tuple(_resolve(base, p, f"{loc}.requirement_paths[{j}]") for j, p in enumerate(req))

        truth = item.get("truth_path")
        if not isinstance(truth, str):
            raise ManifestError(f"{loc}.truth_path", "must be a path string")
        truth_path = _resolve(base, truth, f"{loc}.truth_path")

        scheme = item.get("id_scheme", "freetext")
        if scheme not in ID_SCHEMES:
            raise ManifestError(f"{loc}.id_scheme", f"must be one of {ID_SCHEMES}, got {scheme!r}")

        strategy = item.get("strategy_path")
        strategy_path = None
        if strategy is not None:
            if not isinstance(strategy, str):
                raise ManifestError(f"{loc}.strategy_path", "must be a path string")
            strategy_path = _resolve(base, strategy, f"{loc}.strategy_path")

        entries.append(FunctionEntry(key, req_paths, truth_path, scheme, strategy_path))
    return DatasetManifest(name, tuple(entries), source=path)


def _resolve(base: Path, rel: str, location: str) -> Path:
    p = Path(rel)
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise ManifestError(location, f"dangling path {rel!r} (resolved to {p})")
    return p


# -- requirement documents -------------------------------------------------------


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc


def detect_sections(body: str) -> tuple[Section, ...]:
    """Split ``body`` at heading lines.

    Text before the first heading becomes an untitled section. Without any
    heading the whole document is one untitled section.
    """
    starts = []
    offset = 0
    for line in body.splitlines(keepends=True):
        stripped = line.strip()
        if _MD_HEADING.match(stripped) or (
            _NUM_HEADING.match(stripped) and len(stripped.split()) <= _NUM_HEADING_MAX_WORDS
        ):
            starts.append((offset, stripped.lstrip("#").strip()))
        offset += len(line)

    if not starts:
        return (Section("", 0, len(body)),)
    sections = []
    if body[: starts[0][0]].strip():
        sections.append(Section("", 0, starts[0][0]))
    for i, (start, heading) in enumerate(starts):
        end = starts[i + 1][0] if i + 1 < len(starts) else len(body)
        sections.append(Section(heading, start, end))
    return tuple(sections)


def make_requirement(function_key: str, body: str) -> RequirementDocument:
    if not body.strip():
        raise CorpusError(f"requirement document for {function_key!r} is empty")
    return RequirementDocument(
        function_key=function_key,
        body=body,
        word_count=len(body.split()),
        sections=detect_sections(body),
    )


def ingest_requirement(path: str | Path, function_key: str) -> RequirementDocument:
    return make_requirement(function_key, _read_text(Path(path)))


def ingest_requirements(paths, function_key: str) -> RequirementDocument:
    """Join several requirement files (blank-line separated) into one document."""
    bodies = [_read_text(Path(p)) for p in paths]
    if len(bodies) == 1:
        return make_requirement(function_key, bodies[0])
    return make_requirement(function_key, "\n\n".join(b.rstrip("\n") for b in bodies) + "\n")


def ingest_strategy(path: str | Path) -> TestStrategyDocument:
    body = _read_text(Path(path))
    if not body.strip():
        raise CorpusError(f"test strategy {path} is empty")
    return TestStrategyDocument(body, Path(path))


# -- truth cases --------------------------------------------------------------


def parse_truth_cases(text: str, id_scheme: str, function_key: str, source: str = "<string>") -> list[TruthTestCase]:
    if id_scheme not in ID_SCHEMES:
        raise CorpusError(f"unknown id scheme {id_scheme!r}")
    cases = []
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if id_scheme == "bluetooth":
            try:
                tcid = parse_bluetooth_id(line)
            except BluetoothIdError as exc:
                raise CorpusError(f"{source}:{lineno}: {exc}") from exc
            key = description = format_bluetooth_id(tcid)
        else:
            tcid = None
            if "\t" in line:
                key, description = (s.strip() for s in line.split("\t", 1))
            else:
                key = description = line.strip()
            if not description:
                raise CorpusError(f"{source}:{lineno}: empty description for key {key!r}")
        if key in seen:
            raise CorpusError(f"{source}:{lineno}: duplicate case key {key!r} (first on line {seen[key]})")
        seen[key] = lineno
        cases.append(TruthTestCase(key, description, function_key, tcid))
    return cases


def ingest_truth_cases(path: str | Path, id_scheme: str, function_key: str = "") -> list[TruthTestCase]:
    return parse_truth_cases(_read_text(Path(path)), id_scheme, function_key, source=str(path))


# -- chunking --------------------------------------------------------------------


@dataclass
class _Packer:
    tokens: list
    body: str
    function_key: str
    max_words: int
    overlap_words: int
    chunks: list = field(default_factory=list)

    def char_at(self, word_index: int) -> int:
        if word_index >= len(self.tokens):
            return len(self.body)
        return self.tokens[word_index].start()

    def emit(self, start: int, end: int) -> None:
        overlap = min(self.overlap_words, start)
        char_start = 0 if not self.chunks else self.char_at(start - overlap)
        new_char = 0 if not self.chunks else self.char_at(start)
        char_end = len(self.body) if end >= len(self.tokens) else self.char_at(end)
        self.chunks.append(
            DocumentChunk(
                function_key=self.function_key,
                index=len(self.chunks),
                body=self.body[char_start:char_end],
                word_span=(start - overlap, end),
                overlap_words=overlap,
                new_offset=new_char - char_start,
            )
        )


def _split_units(doc: RequirementDocument, tokens, unit_max: int) -> list[tuple[int, int]]:
    """Word-index ranges, each at most ``unit_max`` words: sections, else paragraphs, else windows."""
    starts = [t.start() for t in tokens]

    def words_in(a: int, b: int) -> tuple[int, int]:
        return bisect.bisect_left(starts, a), bisect.bisect_left(starts, b)

    units = []
    for sec in doc.sections:
        lo, hi = words_in(sec.start, sec.end)
        if hi <= lo:
            continue
        if hi - lo <= unit_max:
            units.append((lo, hi))
            continue
        cuts = [sec.start] + [m.end() for m in _BLANK_LINE.finditer(doc.body, sec.start, sec.end)] + [sec.end]
        for a, b in zip(cuts, cuts[1:]):
            plo, phi = words_in(a, b)
            for w in range(plo, phi, unit_max):
                units.append((w, min(w + unit_max, phi)))
    return units


def chunk_document(
    doc: RequirementDocument,
    max_words: int = DEFAULT_MAX_WORDS,
    overlap_words: int = DEFAULT_OVERLAP_WORDS,
) -> list[DocumentChunk]:
    """Split ``doc`` into chunks of at most ``max_words`` words.

    Whole sections are packed greedily; a section larger than the budget is
    split on blank-line paragraphs, and an oversized paragraph on word
    windows. Every chunk after the first repeats the last ``overlap_words``
    words of the text before it.
    """
    if max_words <= 0:
        raise ValueError(f"max_words must be positive, got {max_words}")
    if overlap_words < 0 or overlap_words >= max_words:
        raise ValueError(f"overlap_words must be in [0, max_words), got {overlap_words}")

    tokens = list(_WORD.finditer(doc.body))
    if len(tokens) <= max_words:
        return [DocumentChunk(doc.function_key, 0, doc.body, (0, len(tokens)))]

    packer = _Packer(tokens, doc.body, doc.function_key, max_words, overlap_words)
    units = _split_units(doc, tokens, max_words - overlap_words)
    start, end = 0, 0
    for lo, hi in units:
        budget = max_words - min(overlap_words, start)
        if end > start and hi - start > budget:
            packer.emit(start, end)
            start = end
        end = hi
    packer.emit(start, len(tokens))
    logger.debug("chunked %s into %d chunks (%d words)", doc.function_key, len(packer.chunks), len(tokens))
    return packer.chunks

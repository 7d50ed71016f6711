"""Test design technique catalog and name normalization."""

from __future__ import annotations

import re
from dataclasses import dataclass

SPECIFICATION_BASED = "specification_based"
STRUCTURE_BASED = "structure_based"
EXPERIENCE_BASED = "experience_based"
UNCATALOGUED = "uncatalogued"
CATEGORIES = (SPECIFICATION_BASED, STRUCTURE_BASED, EXPERIENCE_BASED, UNCATALOGUED)


@dataclass(frozen=True)
class TestDesignTechnique:
    canonical_name: str
    aliases: tuple[str, ...] = ()
    category: str = UNCATALOGUED

    __test__ = False  # not a pytest class


# (canonical name, category, extra aliases)
_SEED = [
    # ISO/IEC/IEEE 29119-4 specification-based techniques
    ("Equivalence Partitioning", SPECIFICATION_BASED,
     ["equivalence class partitioning", "equivalence class testing", "equivalence partitioning testing", "ep"]),
    ("Boundary Value Analysis", SPECIFICATION_BASED, ["boundary value testing", "boundary testing", "bva"]),
    ("State Transition Testing", SPECIFICATION_BASED, ["state transition", "state based testing"]),
    ("Decision Table Testing", SPECIFICATION_BASED, ["decision table", "decision tables"]),
    ("Combinatorial Testing", SPECIFICATION_BASED, ["pairwise testing", "all pairs testing", "combinatorial test design"]),
    ("Classification Tree Method", SPECIFICATION_BASED, ["classification tree", "classification tree testing"]),
    ("Cause-Effect Graphing", SPECIFICATION_BASED, ["cause effect graph", "cause effect graphing testing"]),
    ("Syntax Testing", SPECIFICATION_BASED, []),
    ("Scenario Testing", SPECIFICATION_BASED, ["scenario based testing"]),
    ("Use Case Testing", SPECIFICATION_BASED, ["use case based testing", "use cases"]),
    ("Random Testing", SPECIFICATION_BASED, []),
    ("Metamorphic Testing", SPECIFICATION_BASED, []),
    ("Requirement-based Testing", SPECIFICATION_BASED,
     ["requirements based testing", "requirements based", "requirement based"]),
    # structure-based
    ("Statement Testing", STRUCTURE_BASED, ["statement coverage", "statement coverage testing"]),
    ("Branch Testing", STRUCTURE_BASED, ["branch coverage"]),
    ("Decision Testing", STRUCTURE_BASED, ["decision coverage"]),
    ("Branch Condition Testing", STRUCTURE_BASED, ["condition testing", "condition coverage"]),
    ("Branch Condition Combination Testing", STRUCTURE_BASED, ["multiple condition testing"]),
    ("MC/DC Testing", STRUCTURE_BASED,
     ["modified condition decision coverage", "modified condition decision coverage testing", "mc dc"]),
    ("Data Flow Testing", STRUCTURE_BASED, ["data flow"]),
    ("Control Flow Testing", STRUCTURE_BASED, ["control flow"]),
    # experience-based
    ("Error Guessing", EXPERIENCE_BASED, ["error guessing testing"]),
    ("Exploratory Testing", EXPERIENCE_BASED, []),
    ("Ad-hoc Testing", EXPERIENCE_BASED, ["ad hoc testing", "adhoc testing"]),
    ("Session Testing", EXPERIENCE_BASED, ["session based testing", "session based exploratory testing"]),
    # names the model produced that are test types or approaches rather than 29119-4 techniques
    ("Model-Based Testing", UNCATALOGUED, ["model based testing"]),
    ("Risk-Based Testing", UNCATALOGUED, ["risk based testing"]),
    ("Performance Testing", UNCATALOGUED, ["load testing"]),
    ("Regression Testing", UNCATALOGUED, []),
    ("Security Testing", UNCATALOGUED, []),
    ("Compatibility Testing", UNCATALOGUED, ["interoperability testing"]),
    ("Integration Testing", UNCATALOGUED, []),
    ("System Testing", UNCATALOGUED, []),
    ("User Acceptance Testing", UNCATALOGUED, ["uat", "acceptance testing"]),
    ("Data Integrity Testing", UNCATALOGUED, []),
    ("Database Testing", UNCATALOGUED, []),
    ("Negative Testing", UNCATALOGUED, []),
    ("Query Testing", UNCATALOGUED, []),
    ("Usability Testing", UNCATALOGUED, []),
]

# fallback when extraction yields nothing
DEFAULT_TECHNIQUES = (
    "Equivalence Partitioning",
    "Boundary Value Analysis",
    "State Transition Testing",
    "Decision Table Testing",
    "Combinatorial Testing",
)


def alias_key(name: str) -> str:
    """Lowercase, punctuation to spaces, whitespace collapsed."""
    return " ".join(re.sub(r"[^0-9a-z]+", " ", name.lower()).split())


def title_case(name: str) -> str:
    return " ".join(w[:1].upper() + w[1:] for w in name.split())


class TechniqueCatalog:
    def __init__(self, techniques):
        self._by_name: dict[str, TestDesignTechnique] = {}
        self._alias: dict[str, str] = {}
        self._order: list[str] = []
        for tech in techniques:
            if tech.canonical_name in self._by_name:
                raise ValueError(f"duplicate technique {tech.canonical_name!r}")
            self._by_name[tech.canonical_name] = tech
            self._order.append(tech.canonical_name)
            for alias in (alias_key(tech.canonical_name), *tech.aliases):
                self._alias.setdefault(alias, tech.canonical_name)

    @classmethod
    def default(cls) -> "TechniqueCatalog":
        techs = []
        for name, category, extra in _SEED:
            aliases = {alias_key(name)} | {alias_key(a) for a in extra}
            techs.append(TestDesignTechnique(name, tuple(sorted(aliases)), category))
        return cls(techs)

    def __iter__(self):
        return (self._by_name[n] for n in self._order)

    def __len__(self) -> int:
        return len(self._order)

    def __getitem__(self, canonical_name: str) -> TestDesignTechnique:
        return self._by_name[canonical_name]

    def lookup(self, raw_name: str) -> TestDesignTechnique | None:
        for key in _candidate_keys(raw_name):
            name = self._alias.get(key)
            if name is not None:
                return self._by_name[name]
        return None

    def defaults(self) -> list[TestDesignTechnique]:
        return [self._by_name[n] for n in DEFAULT_TECHNIQUES if n in self._by_name]


def _candidate_keys(raw_name: str):
    key = alias_key(raw_name)
    yield key
    no_paren = alias_key(re.sub(r"\([^)]*\)", " ", raw_name))
    yield no_paren
    for k in (key, no_paren):
        stripped = re.sub(r"\s+(technique|techniques|method)$", "", k)
        yield stripped
        if not stripped.endswith("testing"):
            yield stripped + " testing"


def normalize_technique(raw_name: str, catalog: TechniqueCatalog | None = None) -> TestDesignTechnique:
    """Map a model-produced technique name onto the catalog.

    Unknown names are kept as uncatalogued techniques under their title-cased form.
    """
    name = raw_name.strip()
    if not alias_key(name):
        raise ValueError("technique name is empty")
    catalog = catalog or DEFAULT_CATALOG
    found = catalog.lookup(name)
    if found is not None:
        return found
    canonical = title_case(" ".join(name.split()))
    return TestDesignTechnique(canonical, (alias_key(name),), UNCATALOGUED)


DEFAULT_CATALOG = TechniqueCatalog.default()

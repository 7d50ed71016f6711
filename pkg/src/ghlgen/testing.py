"""Offline stand-ins for a real provider: scripted completions, deterministic embeddings.

Used to record the bundled fixture cache and throughout the test suite.
"""

from __future__ import annotations

import hashlib
import re
import threading
from typing import Callable, Mapping

import numpy as np

STAGE_ZERO_SHOT = "zero_shot"
STAGE_EXTRACT = "extract_techniques"
STAGE_PER_TECHNIQUE = "per_technique"
STAGE_COMBOS = "function_combos"

_TECHNIQUE_IN_PROMPT = re.compile(r"according with the (.+?) technique including")

STOPWORDS = frozenset(
    "a an the that this these those is are be been being it its of to in on for from with by as at or and "
    "when then than can cannot not no do does verify check test ensure user users".split()
)


def classify_prompt(user_text: str) -> tuple[str, str | None]:
    """(stage, technique) for a prompt rendered from the bundled templates."""
    head = user_text.split("<<<BEGIN", 1)[0]
    if head.startswith("You are software testing expert."):
        return STAGE_ZERO_SHOT, None
    if "candidate test design techniques" in head:
        return STAGE_EXTRACT, None
    m = _TECHNIQUE_IN_PROMPT.search(head)
    if m:
        return STAGE_PER_TECHNIQUE, m.group(1)
    if "create combinations of the functions" in head:
        return STAGE_COMBOS, None
    raise ValueError(f"unrecognized prompt: {head[:80]!r}")


def simple_tokens(text: str) -> list[str]:
    words = re.findall(r"[a-z0-9]+", text.lower())
    out = []
    for w in words:
        if w in STOPWORDS:
            continue
        for suffix in ("ing", "ed", "es", "s"):
            if len(w) > len(suffix) + 3 and w.endswith(suffix):
                w = w[: -len(suffix)]
                break
        out.append(w)
    return out


def bag_of_words_embedder(vocabulary) -> Callable[[str], list[float]]:
    """Count vector over ``vocabulary`` plus one constant bias component."""
    index = {w: i for i, w in enumerate(sorted(set(vocabulary)))}

    def embed(text: str) -> list[float]:
        vec = [0.0] * (len(index) + 1)
        vec[-1] = 1.0
        for tok in simple_tokens(text):
            if tok in index:
                vec[index[tok]] += 1.0
        return vec

    return embed


def hashed_gaussian_embedder(dim: int = 32, salt: str = "") -> Callable[[str], list[float]]:
    """Pseudo-random unit-free vector seeded by the text's hash."""

    def embed(text: str) -> list[float]:
        seed = int.from_bytes(hashlib.sha256((salt + text).encode("utf-8")).digest()[:8], "big")
        return np.random.default_rng(seed).normal(size=dim).tolist()

    return embed


class ScriptedProvider:
    """Answers completions by looking up ``(doc marker, stage, technique)``.

    ``script`` maps a marker string (something unique in the requirement text)
    to ``{stage: text}`` or, for per-technique prompts, ``{stage: {technique: text}}``.
    Unscripted prompts get ``default``.
    """

    def __init__(self, script: Mapping[str, Mapping], embedder: Callable[[str], list[float]] | None = None,
                 default: str = ""):
        self.script = script
        self.embedder = embedder or hashed_gaussian_embedder()
        self.default = default
        self.completion_calls = 0
        self.embedding_calls = 0
        self.embedded_texts: list[str] = []
        self._lock = threading.Lock()

    def complete(self, req) -> tuple[str, int, int]:
        with self._lock:
            self.completion_calls += 1
        stage, technique = classify_prompt(req.user_text)
        for marker, by_stage in self.script.items():
            if marker in req.user_text:
                answer = by_stage.get(stage, self.default)
                if isinstance(answer, Mapping):
                    answer = answer.get(technique, self.default)
                return answer, len(req.user_text.split()), len(answer.split())
        return self.default, len(req.user_text.split()), 0

    def embed(self, texts, model_id) -> list[list[float]]:
        with self._lock:
            self.embedding_calls += 1
            self.embedded_texts.extend(texts)
        return [self.embedder(t) for t in texts]


class FailingProvider:
    """Raises on any use; proves a run made no live calls."""

    def __init__(self):
        self.calls = 0

    def complete(self, req):
        self.calls += 1
        raise AssertionError("live completion call during a replay-only run")

    def embed(self, texts, model_id):
        self.calls += 1
        raise AssertionError("live embedding call during a replay-only run")

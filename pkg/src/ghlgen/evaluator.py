"""Similarity matrix, threshold matching, and precision/recall metrics.

A truth case and a generated case match when their embedding cosine
similarity, rounded half-up to one decimal, reaches the threshold (0.7 by
default, so the effective cut is 0.65). Matching is many-to-many:

    A = truth count, B = generated count,
    C = truth cases with at least one match, D = generated cases with at least one match,
    ratio_num = B/A, precision = D/B, recall = C/A, F1 = 2PR/(P+R).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

from ghlgen.gateway import EmbeddingVector, Gateway

ROUNDED_ONE_DECIMAL = "rounded_one_decimal"
RAW = "raw"
MATCH_MODES = (ROUNDED_ONE_DECIMAL, RAW)

DEFAULT_THRESHOLD = 0.7
DEFAULT_BIN_WIDTH = 0.05


class EvaluationError(ValueError):
    pass


def _components(v) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        v = v.components
    return np.asarray(v, dtype=float)


def cosine_similarity(a, b) -> float:
    x, y = _components(a), _components(b)
    if x.shape != y.shape:
        raise EvaluationError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise EvaluationError("cosine similarity of a zero-norm vector")
    # identical inputs are exactly 1; the product form also makes the result symmetric
    if np.array_equal(x, y):
        return 1.0
    return max(-1.0, min(1.0, float(np.dot(x, y)) / (nx * ny)))


@dataclass(frozen=True)
class SimilarityMatrix:
    truth_keys: tuple[str, ...]
    gen_keys: tuple[str, ...]
    scores: np.ndarray
    model_id: str = ""
    truth_texts: tuple[str, ...] = ()
    gen_texts: tuple[str, ...] = ()

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 2:
            scores = scores.reshape(len(self.truth_keys), len(self.gen_keys))
        if scores.shape != (len(self.truth_keys), len(self.gen_keys)):
            raise EvaluationError(f"score shape {scores.shape} does not match keys "
                                  f"({len(self.truth_keys)}, {len(self.gen_keys)})")
        if scores.size and (not np.all(np.isfinite(scores)) or scores.min() < -1 or scores.max() > 1):
            raise EvaluationError("scores must be finite and within [-1, 1]")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "truth_texts", tuple(self.truth_texts) or tuple(self.truth_keys))
        object.__setattr__(self, "gen_texts", tuple(self.gen_texts) or tuple(self.gen_keys))

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def row(self, truth_key: str) -> np.ndarray:
        try:
            i = self.truth_keys.index(truth_key)
        except ValueError:
            raise KeyError(f"unknown truth key {truth_key!r}") from None
        return self.scores[i]

    def to_dict(self, include_scores: bool = True) -> dict:
        out = {
            "model_id": self.model_id,
            "truth_keys": list(self.truth_keys),
            "gen_keys": list(self.gen_keys),
            "truth_texts": list(self.truth_texts),
            "gen_texts": list(self.gen_texts),
        }
        if include_scores:
            out["scores"] = self.scores.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimilarityMatrix":
        return cls(
            tuple(data["truth_keys"]),
            tuple(data["gen_keys"]),
            np.asarray(data["scores"], dtype=float).reshape(len(data["truth_keys"]), len(data["gen_keys"])),
            data.get("model_id", ""),
            tuple(data.get("truth_texts", ())),
            tuple(data.get("gen_texts", ())),
        )


def build_similarity_matrix(truth, generated, gateway: Gateway, model_id: str,
                            truth_keys=None, gen_keys=None) -> SimilarityMatrix:
    """Embed every distinct description once and score all truth x generated pairs.

    ``truth`` and ``generated`` are description strings or objects with a
    ``description`` attribute.
    """
    t_texts = [getattr(t, "description", t) for t in truth]
    g_texts = [getattr(g, "description", g) for g in generated]
    if not t_texts:
        raise EvaluationError("no truth cases")
    if not g_texts:
        raise EvaluationError("no generated cases")
    if truth_keys is None:
        truth_keys = [getattr(t, "case_key", None) or f"T{i:04d}" for i, t in enumerate(truth)]
    if gen_keys is None:
        gen_keys = [f"G{i:04d}" for i in range(len(g_texts))]

    distinct = list(dict.fromkeys(t_texts + g_texts))
    vectors = gateway.embed_batch(distinct, model_id)
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise EvaluationError(f"embedding dimensions differ: {sorted(dims)}")
    emb = np.array([v.components for v in vectors], dtype=float)
    norms = np.linalg.norm(emb, axis=1)
    if np.any(norms == 0):
        raise EvaluationError("zero-norm embedding vector")
    unit = emb / norms[:, None]
    pos = {t: i for i, t in enumerate(distinct)}
    ti = np.array([pos[t] for t in t_texts])
    gi = np.array([pos[g] for g in g_texts])
    scores = np.clip(unit[ti] @ unit[gi].T, -1.0, 1.0)
    # same text means same case: score exactly 1
    scores[ti[:, None] == gi[None, :]] = 1.0
    return SimilarityMatrix(tuple(truth_keys), tuple(gen_keys), scores, model_id, tuple(t_texts), tuple(g_texts))


# -- matching ---------------------------------------------------------------------


def round_half_up(x: float, places: int) -> Decimal:
    """Decimal half-up rounding of the shortest repr of ``x``."""
    return Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class MatchRule:
    mode: str = ROUNDED_ONE_DECIMAL
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.mode not in MATCH_MODES:
            raise ValueError(f"mode must be one of {MATCH_MODES}, got {self.mode!r}")
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")

    def matches(self, score: float) -> bool:
        if self.mode == RAW:
            return score >= self.threshold
        return round_half_up(score, 1) >= Decimal(repr(float(self.threshold)))

    def mask(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        if self.mode == RAW:
            return scores >= self.threshold
        cut = float(self.threshold) - 0.05
        out = scores >= cut
        # decide anything near the cut exactly
        near = np.abs(scores - cut) < 1e-6
        for idx in zip(*np.nonzero(near)):
            out[idx] = self.matches(float(scores[idx]))
        return out


@dataclass(frozen=True)
class MatchSet:
    rule: MatchRule
    pairs: frozenset
    C: int
    D: int

    def sorted_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.pairs)


def match_threshold(matrix: SimilarityMatrix, rule: MatchRule = MatchRule()) -> MatchSet:
    hit = rule.mask(matrix.scores)
    rows, cols = np.nonzero(hit)
    pairs = frozenset((matrix.truth_keys[i], matrix.gen_keys[j]) for i, j in zip(rows, cols))
    return MatchSet(rule, pairs, C=int(hit.any(axis=1).sum()), D=int(hit.any(axis=0).sum()))


def empty_matchset(rule: MatchRule = MatchRule()) -> MatchSet:
    return MatchSet(rule, frozenset(), 0, 0)


# -- metrics ---------------------------------------------------------------------


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class MetricsSummary:
    A: float
    B: float
    C: float
    D: float
    ratio_num: float
    macro_precision: float
    macro_recall: float
    f1: float
    duration_s: float = 0.0
    n: int = field(default=1, compare=False)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsSummary":
        return cls(**data)


def compute_metrics(A: int, B: int, matchset: MatchSet, duration_s: float = 0.0) -> MetricsSummary:
    if A <= 0:
        raise EvaluationError("A (truth count) must be positive")
    if B < 0:
        raise EvaluationError("B (generated count) must be nonnegative")
    C, D = matchset.C, matchset.D
    if C > A or D > B:
        raise EvaluationError(f"match set inconsistent with counts (C={C}, A={A}, D={D}, B={B})")
    precision = D / B if B else 0.0
    recall = C / A
    return MetricsSummary(A, B, C, D, B / A, precision, recall, f1_score(precision, recall), duration_s)


def metrics_from_counts(A: int, B: int, C: int, D: int, duration_s: float = 0.0) -> MetricsSummary:
    return compute_metrics(A, B, MatchSet(MatchRule(), frozenset(), C, D), duration_s)


_MEAN_FIELDS = ("A", "B", "C", "D", "ratio_num", "macro_precision", "macro_recall")


def _mean(values) -> float:
    # equal values average to themselves exactly
    if all(v == values[0] for v in values):
        return values[0]
    return math.fsum(values) / len(values)


def _mean_summary(summaries: Sequence[MetricsSummary], duration: float) -> MetricsSummary:
    means = {f: _mean([getattr(s, f) for s in summaries]) for f in _MEAN_FIELDS}
    return MetricsSummary(
        **means,
        f1=f1_score(means["macro_precision"], means["macro_recall"]),
        duration_s=duration,
        n=len(summaries),
    )


def aggregate_runs(summaries: Sequence[MetricsSummary]) -> MetricsSummary:
    """Mean over repeated runs of one function; durations add up."""
    if not summaries:
        raise EvaluationError("no runs to aggregate")
    if len({s.A for s in summaries}) != 1:
        raise EvaluationError(f"runs disagree on A: {sorted({s.A for s in summaries})}")
    if len(summaries) == 1:
        return summaries[0]
    return _mean_summary(summaries, math.fsum(s.duration_s for s in summaries))


def aggregate_functions(per_function: Sequence[MetricsSummary], pooled: bool = False) -> MetricsSummary:
    """Average across functions.

    The default is the macro average (mean of each ratio). ``pooled=True``
    instead recomputes the ratios from the averaged counts.
    """
    if not per_function:
        raise EvaluationError("no functions to aggregate")
    if len(per_function) == 1:
        return per_function[0]
    duration = math.fsum(s.duration_s for s in per_function) / len(per_function)
    mean = _mean_summary(per_function, duration)
    if not pooled:
        return mean
    p = mean.D / mean.B if mean.B else 0.0
    r = mean.C / mean.A
    return MetricsSummary(mean.A, mean.B, mean.C, mean.D, mean.B / mean.A, p, r, f1_score(p, r), duration, mean.n)


# -- histogram -------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    bin_width: float
    bins: tuple[tuple[float, int], ...]
    total: int
    threshold_marker: float

    def counts(self) -> list[int]:
        return [c for _, c in self.bins]


def bin_index(score: float, bin_width: float) -> int:
    """Index k with k*bin_width <= score < (k+1)*bin_width, edges computed as k*bin_width."""
    k = math.floor(score / bin_width)
    while k * bin_width > score:
        k -= 1
    while (k + 1) * bin_width <= score:
        k += 1
    return k


def similarity_histogram(matrix: SimilarityMatrix | np.ndarray, bin_width: float = DEFAULT_BIN_WIDTH,
                         threshold_marker: float = DEFAULT_THRESHOLD) -> Histogram:
    if not 0 < bin_width <= 1:
        raise EvaluationError(f"bin_width must be in (0, 1], got {bin_width}")
    scores = matrix.scores if isinstance(matrix, SimilarityMatrix) else np.asarray(matrix, dtype=float)
    flat = scores.ravel().tolist()
    if not flat:
        return Histogram(bin_width, (), 0, threshold_marker)
    idx = [bin_index(s, bin_width) for s in flat]
    lo, hi = min(idx), max(idx)
    counts = [0] * (hi - lo + 1)
    for k in idx:
        counts[k - lo] += 1
    bins = tuple((round((lo + i) * bin_width, 10), c) for i, c in enumerate(counts))
    return Histogram(bin_width, bins, len(flat), threshold_marker)

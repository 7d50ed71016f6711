import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ghlgen.cache import ResponseCache
from ghlgen.evaluator import (
    RAW,
    ROUNDED_ONE_DECIMAL,
    EvaluationError,
    MatchRule,
    MetricsSummary,
    SimilarityMatrix,
    aggregate_functions,
    aggregate_runs,
    bin_index,
    build_similarity_matrix,
    compute_metrics,
    cosine_similarity,
    empty_matchset,
    f1_score,
    match_threshold,
    metrics_from_counts,
    similarity_histogram,
)
from ghlgen.gateway import LIVE_RECORD, Gateway
from ghlgen.testing import ScriptedProvider, hashed_gaussian_embedder

# -- oracles ------------------------------------------------------------------------


def hand_cosine(a, b):
    dot = math.fsum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(math.fsum(x * x for x in a)) * math.sqrt(math.fsum(y * y for y in b)))


def oracle_match(score, threshold=0.7, mode=ROUNDED_ONE_DECIMAL):
    """Exact-decimal predicate: half-up to one decimal, then compare."""
    if mode == RAW:
        return score >= threshold
    x = Fraction(repr(float(score)))
    tenths = math.floor(abs(x) * 10 + Fraction(1, 2)) * (1 if x >= 0 else -1)
    return Fraction(tenths, 10) >= Fraction(repr(float(threshold)))


def oracle_counts(scores, threshold=0.7, mode=ROUNDED_ONE_DECIMAL):
    n_t, n_g = len(scores), len(scores[0]) if scores else 0
    truth_hit = [False] * n_t
    gen_hit = [False] * n_g
    pairs = set()
    for i in range(n_t):
        for j in range(n_g):
            if oracle_match(scores[i][j], threshold, mode):
                truth_hit[i] = gen_hit[j] = True
                pairs.add((i, j))
    return sum(truth_hit), sum(gen_hit), pairs


def matrix_of(scores):
    scores = np.asarray(scores, dtype=float)
    t, g = scores.shape
    return SimilarityMatrix(tuple(f"T{i}" for i in range(t)), tuple(f"G{j}" for j in range(g)), scores)


# -- cosine ---------------------------------------------------------------------------


def test_cosine_known_values():
    assert cosine_similarity([3, 4], [3, 4]) == 1.0
    assert cosine_similarity([1, 0, 0], [0, 1, 0]) == 0.0
    expected = hand_cosine((1, 2, 3), (4, 5, 6))
    assert expected == pytest.approx(32 / math.sqrt(14 * 77), abs=1e-15)
    assert abs(cosine_similarity((1, 2, 3), (4, 5, 6)) - expected) < 1e-9
    assert abs(cosine_similarity((1, 2, 3), (4, 5, 6)) - 0.974631846) < 1e-9


def test_cosine_errors():
    with pytest.raises(EvaluationError):
        cosine_similarity([1, 2], [1, 2, 3])
    with pytest.raises(EvaluationError):
        cosine_similarity([0, 0], [1, 2])


vectors = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=n, max_size=n),
    )
)


@settings(max_examples=1000, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_cosine_properties(pair, alpha):
    a, b = pair
    assume(math.sqrt(math.fsum(x * x for x in a)) > 1e-6 and math.sqrt(math.fsum(x * x for x in b)) > 1e-6)
    s = cosine_similarity(a, b)
    assert cosine_similarity(b, a) == s
    assert -1.0 <= s <= 1.0
    assert cosine_similarity(a, a) == 1.0
    assert abs(cosine_similarity([alpha * x for x in a], b) - s) < 1e-9


# -- similarity matrix -------------------------------------------------------------------


def embed_gateway(embedder=None):
    provider = ScriptedProvider({}, embedder or hashed_gaussian_embedder(16))
    return Gateway(ResponseCache(), provider, mode=LIVE_RECORD), provider


def test_identical_ids_score_one():
    gw, _ = embed_gateway()
    m = build_similarity_matrix(["AVRCP/CT/CON/BV-01-C"], ["AVRCP/CT/CON/BV-01-C", "HFP/AG/ACS/BV-02-C"], gw, "e")
    assert m.scores[0, 0] == 1.0
    assert f"{m.scores[0, 0]:.2f}" == "1.00"


def test_matrix_22_by_192():
    gw, _ = embed_gateway()
    truth = [f"Verify truth behaviour {i}" for i in range(22)]
    gen = [f"Verify generated behaviour {j}" for j in range(192)]
    m = build_similarity_matrix(truth, gen, gw, "e")
    assert m.shape == (22, 192)
    assert m.scores.size == 4224


def test_only_distinct_texts_embedded():
    gw, provider = embed_gateway()
    truth = ["alpha case", "shared case"]
    gen = ["shared case", "beta case", "shared case"]
    m = build_similarity_matrix(truth, gen, gw, "e")
    assert provider.embedding_calls == 1
    assert sorted(provider.embedded_texts) == ["alpha case", "beta case", "shared case"]
    assert m.scores[1, 0] == m.scores[1, 2] == 1.0


def test_matrix_matches_pairwise_cosine():
    emb = hashed_gaussian_embedder(16, salt="x")
    gw, _ = embed_gateway(emb)
    truth, gen = ["a one", "b two", "c three"], ["d four", "e five"]
    m = build_similarity_matrix(truth, gen, gw, "e")
    for i, t in enumerate(truth):
        for j, g in enumerate(gen):
            assert abs(m.scores[i, j] - hand_cosine(emb(t), emb(g))) < 1e-9


def test_matrix_round_trip_and_row():
    m = matrix_of([[0.1, 0.9], [0.5, -0.2]])
    again = SimilarityMatrix.from_dict(m.to_dict())
    assert again.truth_keys == m.truth_keys and np.array_equal(again.scores, m.scores)
    assert list(m.row("T1")) == [0.5, -0.2]
    with pytest.raises(KeyError):
        m.row("nope")


def test_matrix_empty_sides():
    gw, _ = embed_gateway()
    with pytest.raises(EvaluationError, match="no generated cases"):
        build_similarity_matrix(["x"], [], gw, "e")
    with pytest.raises(EvaluationError):
        build_similarity_matrix([], ["x"], gw, "e")


# -- match rule ----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "score, mode, expected",
    [
        (0.65, ROUNDED_ONE_DECIMAL, True),
        (0.651, ROUNDED_ONE_DECIMAL, True),
        (0.649, ROUNDED_ONE_DECIMAL, False),
        (0.69, ROUNDED_ONE_DECIMAL, True),
        (0.69, RAW, False),
        (0.70, RAW, True),
        (0.808, ROUNDED_ONE_DECIMAL, True),
        (0.644, ROUNDED_ONE_DECIMAL, False),
    ],
)
def test_match_boundaries(score, mode, expected):
    rule = MatchRule(mode, 0.7)
    assert rule.matches(score) is expected
    assert bool(rule.mask(np.array([score]))[0]) is expected


def test_rounded_rule_over_grid():
    rule = MatchRule()
    grid = [round(k * 0.001, 3) for k in range(-1000, 1001)]
    mask = rule.mask(np.array(grid))
    for s, m in zip(grid, mask):
        closed_form = Fraction(repr(s)) >= Fraction(65, 100)
        assert rule.matches(s) == closed_form == bool(m) == oracle_match(s)


@pytest.mark.parametrize("kw", [dict(mode="fuzzy"), dict(threshold=0), dict(threshold=1.5)])
def test_bad_rule(kw):
    with pytest.raises(ValueError):
        MatchRule(**kw)


def random_matrix(rng, t, g, quantize):
    scores = rng.uniform(-0.2, 1.0, size=(t, g))
    if quantize:
        # land often on exact half-tenth boundaries
        scores = np.round(scores * 200) / 200
    return scores


def test_match_threshold_oracle_equivalence():
    rng = np.random.default_rng(20240101)
    for trial in range(1000):
        t, g = rng.integers(1, 31, size=2)
        scores = random_matrix(rng, t, g, quantize=trial % 2 == 0)
        mode = RAW if trial % 5 == 0 else ROUNDED_ONE_DECIMAL
        threshold = float(rng.choice([0.5, 0.6, 0.7, 0.8]))
        rule = MatchRule(mode, threshold)
        ms = match_threshold(matrix_of(scores), rule)
        C, D, pairs = oracle_counts(scores.tolist(), threshold, mode)
        assert (ms.C, ms.D) == (C, D)
        assert ms.pairs == {(f"T{i}", f"G{j}") for i, j in pairs}
        m = compute_metrics(int(t), int(g), ms)
        assert (m.A, m.B, m.C, m.D) == (t, g, C, D)
        assert m.macro_precision == D / g and m.macro_recall == C / t


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_monotone_in_threshold(t, g, seed):
    scores = np.random.default_rng(seed).uniform(0.001, 1.0, size=(t, g))
    m = matrix_of(scores)
    prev = (t + 1, g + 1)
    for threshold in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0):
        ms =match_threshold(m, MatchRule(RAW, threshold))
        assert ms.C <= prev[0] and ms.D <= prev[1]
        prev = (ms.C, ms.D)
    tiny = match_threshold(m, MatchRule(RAW, 1e-9))
    assert (tiny.C, tiny.D) == (t, g)


# -- metrics -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "counts, expected",
    [
        ((118, 86, 101, 56), (0.73, 0.65, 0.86)),  # AVRCP
        ((119, 69, 82, 23), (0.58, 0.33, 0.69)),  # BAP
        ((83, 126, 73, 71), (1.52, 0.56, 0.88)),  # HFP (precision from counts)
        ((38, 109, 35, 76), (2.87, 0.70, 0.92)),  # VDP (from counts)
    ],
)
def test_metrics_from_published_counts(counts, expected):
    m = metrics_from_counts(*counts)
    got = (m.ratio_num, m.macro_precision, m.macro_recall)
    for g, e in zip(got, expected):
        assert abs(g - e) <= 0.005 + 1e-12


def test_empty_matchset_zeros():
    m = compute_metrics(10, 0, empty_matchset())
    assert (m.macro_precision, m.macro_recall, m.f1, m.ratio_num) == (0, 0, 0, 0)
    m = compute_metrics(10, 5, empty_matchset())
    assert m.f1 == 0.0


def test_inconsistent_counts():
    with pytest.raises(EvaluationError):
        metrics_from_counts(5, 3, 6, 1)
    with pytest.raises(EvaluationError):
        metrics_from_counts(0, 3, 0, 0)


def test_f1():
    assert f1_score(0, 0) == 0
    assert f1_score(0.5, 0.5) == 0.5
    assert f1_score(0.6, 0.84) == pytest.approx(0.7, abs=0.005)


@settings(max_examples=500)
@given(st.integers(1, 500), st.integers(0, 500), st.data())
def test_count_identities(A, B, data):
    C = data.draw(st.integers(0, A))
    D = data.draw(st.integers(0, B))
    m = metrics_from_counts(A, B, C, D)
    assert math.isclose(m.ratio_num * A, B, rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(m.macro_precision * B, D, rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(m.macro_recall * A, C, rel_tol=1e-12, abs_tol=1e-12)
    assert 0 <= m.f1 <= 1


# -- aggregation -------------------------------------------------------------------


def summary(A, B, C, D, precision=None, recall=None, duration=0.0):
    base = metrics_from_counts(A, B, C, D, duration)
    if precision is None:
        return base
    return MetricsSummary(A, B, C, D, B / A, precision, recall, f1_score(precision, recall), duration)


def test_aggregate_identical_runs():
    s = metrics_from_counts(20, 30, 10, 12, 5.0)
    agg = aggregate_runs([s, s, s])
    assert (agg.A, agg.B, agg.C, agg.D) == (s.A, s.B, s.C, s.D)
    assert agg.macro_precision == pytest.approx(s.macro_precision)
    assert agg.f1 == pytest.approx(s.f1)
    assert agg.duration_s == 15.0


def test_aggregate_run_mean_b():
    runs = [metrics_from_counts(50, b, 10, 10) for b in (90, 96, 102)]
    assert aggregate_runs(runs).B == 96


def test_single_run_preserved():
    s = metrics_from_counts(5, 5, 1, 1, duration_s=42.0)
    assert aggregate_runs([s]) is s
    assert aggregate_functions([s]) is s


def test_runs_must_agree_on_a():
    with pytest.raises(EvaluationError):
        aggregate_runs([metrics_from_counts(5, 5, 1, 1), metrics_from_counts(6, 5, 1, 1)])
    with pytest.raises(EvaluationError):
        aggregate_runs([])


def test_macro_ignores_weights():
    small = metrics_from_counts(5, 10, 1, 2)  # recall 0.2
    big = metrics_from_counts(500, 10, 200, 2)  # recall 0.4
    assert aggregate_functions([small, big]).macro_recall == pytest.approx(0.3)
    pooled = aggregate_functions([small, big], pooled=True)
    assert pooled.macro_recall == pytest.approx(201 / 505)


BLUETOOTH = {
    "AVRCP": (118, 86, 101, 56, 0.65, 0.86),
    "BAP": (119, 69, 82, 23, 0.33, 0.69),
    "HFP": (83, 126, 73, 71, 0.66, 0.88),
    "VDP": (38, 109, 35, 76, 0.74, 0.93),
}
MOZILLA = {
    "Bookmarks": (22, 96, 4, 11, 0.10, 0.17),
    "History": (19, 130, 4, 6, 0.05, 0.23),
    "PasswordManager": (22, 192, 19, 61, 0.34, 0.88),
    "Themes": (11, 49, 0, 0, 0.00, 0.00),
}


def published(table):
    return [summary(A, B, C, D, p, r) for A, B, C, D, p, r in table.values()]


def test_bluetooth_average_column_macro():
    avg = aggregate_functions(published(BLUETOOTH))
    assert abs(avg.ratio_num - 1.42) <= 0.03
    assert abs(avg.macro_precision - 0.60) <= 0.03
    assert abs(avg.macro_recall - 0.84) <= 0.03
    assert abs(avg.f1 - 0.70) <= 0.03
    assert abs(avg.B - 98) <= 1 and abs(avg.C - 73) <= 1


def test_mozilla_average_column_pooled():
    pooled = aggregate_functions(published(MOZILLA), pooled=True)
    assert abs(pooled.ratio_num - 6.32) <= 0.03
    assert abs(pooled.macro_precision - 0.17) <= 0.03
    assert abs(pooled.macro_recall - 0.37) <= 0.03
    assert abs(pooled.f1 - 0.23) <= 0.03


def test_mozilla_macro_values():
    # the printed per-function ratios average to these, not to the printed column
    macro = aggregate_functions(published(MOZILLA))
    assert macro.macro_precision == pytest.approx((0.10 + 0.05 + 0.34 + 0.00) / 4)
    assert macro.macro_recall == pytest.approx((0.17 + 0.23 + 0.88 + 0.00) / 4)
    assert abs(macro.macro_precision - 0.17) > 0.03


# -- histogram -----------------------------------------------------------------------


def brute_histogram(flat, width):
    counts = {}
    for s in flat:
        k = 0
        if s >= 0:
            while (k + 1) * width <= s:
                k += 1
        else:
            while k * width > s:
                k -= 1
        counts[k] = counts.get(k, 0) + 1
    return counts


def test_histogram_4224():
    rng = np.random.default_rng(7)
    scores = rng.uniform(-0.1, 1.0, size=(22, 192))
    h = similarity_histogram(matrix_of(scores))
    assert h.total == 4224 == sum(h.counts())
    brute = brute_histogram(scores.ravel().tolist(), 0.05)
    for edge, count in h.bins:
        assert count == brute.get(round(edge / 0.05), 0)


def test_histogram_all_zero():
    h = similarity_histogram(np.zeros((3, 4)))
    assert h.bins == ((0.0, 12),)


def test_histogram_empty():
    h = similarity_histogram(np.zeros((0, 0)))
    assert h.bins == () and h.total == 0


def test_histogram_bad_width():
    with pytest.raises(EvaluationError):
        similarity_histogram(np.zeros((1, 1)), 0)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=60),
    st.sampled_from([0.05, 0.1, 0.2, 0.25, 0.01]),
)
def test_histogram_brute_force(flat, width):
    h = similarity_histogram(np.array(flat), width)
    brute = brute_histogram(flat, width)
    assert h.total == len(flat) == sum(h.counts())
    got = {bin_index(edge + width / 2, width): c for edge, c in h.bins}
    assert {k: v for k, v in got.items() if v} == brute

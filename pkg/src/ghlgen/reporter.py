"""Markdown and CSV renderings of metrics, matches, techniques, and histograms."""

from __future__ import annotations

import csv
import io
from collections import Counter
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ghlgen.evaluator import Histogram, MatchSet, MetricsSummary, SimilarityMatrix

STRATEGY_ORDER = ("ZeroShot", "GHL", "GHLF")
STRATEGY_LABELS = {"ZeroShot": "zero-shot", "GHL": "GHL", "GHLF": "GHL-F"}

SUMMARY_ROWS = [
    ("(A)", "num_truth", "A"),
    ("(B)", "num_gen_ts", "B"),
    ("(C)", "num_mat_uniq_truth", "C"),
    ("(D)", "num_mat_uniq_gen", "D"),
    ("(B)/(A)", "ratio_num", "ratio_num"),
    ("(D)/(B) Macro Precision", "ratio_mat_gen", "macro_precision"),
    ("(C)/(A) Macro Recall", "ratio_mat_truth", "macro_recall"),
    ("F1-score", "f1", "f1"),
]
_COUNT_FIELDS = {"A", "B", "C", "D"}


def fmt_fixed(x: float, places: int) -> str:
    q = Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    return f"{q:.{places}f}"


def fmt_count(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return fmt_fixed(x, 2)


def fmt_duration(seconds: float) -> str:
    total = int(Decimal(repr(float(seconds))).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return f"{h}:{m:02d}:{s:02d}"


def fmt_field(summary: MetricsSummary, name: str) -> str:
    value = getattr(summary, name)
    return fmt_count(value) if name in _COUNT_FIELDS else fmt_fixed(value, 2)


def _strategy_sort(strategies) -> list[str]:
    known = [s for s in STRATEGY_ORDER if s in strategies]
    return known + sorted(s for s in strategies if s not in STRATEGY_ORDER)


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]], align_right_from: int = 1) -> str:
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join("---" if i < align_right_from else "---:" for i in range(len(header))) + "|")
    for row in rows:
        lines.append("| " + " | ".join(str(c).replace("|", "\\|") for c in row) + " |")
    return "\n".join(lines) + "\n"


def render_summary(summaries: Mapping[tuple[str, str], MetricsSummary]) -> str:
    """Table of A..F1 and duration, one block per dataset, columns zero-shot / GHL / GHL-F.

    ``summaries`` is keyed by ``(dataset, strategy)``.
    """
    datasets = sorted({d for d, _ in summaries})
    strategies = _strategy_sort({s for _, s in summaries})
    header = ["Dataset", "", "Metric"] + [STRATEGY_LABELS.get(s, s) for s in strategies]
    rows = []
    for ds in datasets:
        for label, name, attr in SUMMARY_ROWS:
            row = [ds, label, name]
            for st in strategies:
                m = summaries.get((ds, st))
                row.append(fmt_field(m, attr) if m else "")
            rows.append(row)
        row = [ds, "", "Duration time (hh:mm:ss)"]
        row += [fmt_duration(summaries[(ds, st)].duration_s) if (ds, st) in summaries else "" for st in strategies]
        rows.append(row)
    return _md_table(header, rows, align_right_from=3)


def summary_csv(summaries: Mapping[tuple[str, str], MetricsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = ["A", "B", "C", "D", "ratio_num", "macro_precision", "macro_recall", "f1", "duration_s", "n"]
    w.writerow(["dataset", "strategy", *fields])
    for ds in sorted({d for d, _ in summaries}):
        for st in _strategy_sort({s for d, s in summaries if d == ds}):
            m = summaries[(ds, st)]
            values = [m.n if f == "n" else repr(float(getattr(m, f))) for f in fields]
            w.writerow([ds, STRATEGY_LABELS.get(st, st), *values])
    return buf.getvalue()


def render_function_table(per_function: Mapping[str, MetricsSummary], average: MetricsSummary | None = None,
                          title: str | None = None) -> str:
    """One column per function plus an Average column."""
    keys = list(per_function)
    header = ["", "Metric", *keys] + (["Average"] if average is not None else [])
    rows = []
    for label, name, attr in SUMMARY_ROWS[:7]:
        row = [label, name] + [fmt_field(per_function[k], attr) for k in keys]
        if average is not None:
            row.append(fmt_field(average, attr))
        rows.append(row)
    out = _md_table(header, rows, align_right_from=2)
    return (f"### {title}\n\n" if title else "") + out


def function_table_csv(per_function: Mapping[str, MetricsSummary], average: MetricsSummary | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = ["A", "B", "C", "D", "ratio_num", "macro_precision", "macro_recall", "f1"]
    w.writerow(["function", *fields])
    items = list(per_function.items()) + ([("Average", average)] if average is not None else [])
    for key, m in items:
        w.writerow([key, *(repr(float(getattr(m, f))) for f in fields)])
    return buf.getvalue()


def technique_tally(techniques_by_function: Mapping[str, Sequence[str]]) -> list[tuple[str, dict[str, int], int]]:
    """Rows (technique, per-function presence, subtotal), most frequent first."""
    counts: Counter = Counter()
    present = {}
    for fn, techs in techniques_by_function.items():
        for t in dict.fromkeys(techs):
            counts[t] += 1
            present.setdefault(t, {})[fn] = 1
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return [(t, present[t], counts[t]) for t in ordered]


def render_technique_tally(techniques_by_function: Mapping[str, Sequence[str]]) -> str:
    fns = list(techniques_by_function)
    rows = [[t, *("1" if pres.get(f) else "" for f in fns), str(sub)]
            for t, pres, sub in technique_tally(techniques_by_function)]
    totals = [str(len(dict.fromkeys(techniques_by_function[f]))) for f in fns]
    rows.append(["Total", *totals, str(sum(int(x) for x in totals))])
    return _md_table(["Test design techniques", *fns, "Sub-total"], rows)


def technique_tally_csv(techniques_by_function: Mapping[str, Sequence[str]]) -> str:
    fns = list(techniques_by_function)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["technique", *fns, "subtotal"])
    for t, pres, sub in technique_tally(techniques_by_function):
        w.writerow([t, *(pres.get(f, 0) for f in fns), sub])
    return buf.getvalue()


def top_matches(matchset: MatchSet, matrix: SimilarityMatrix, k: int) -> list[tuple[int, int, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    t_pos = {key: i for i, key in enumerate(matrix.truth_keys)}
    g_pos = {key: j for j, key in enumerate(matrix.gen_keys)}
    scored = [(t_pos[t], g_pos[g]) for t, g in matchset.pairs]
    scored = [(i, j, float(matrix.scores[i, j])) for i, j in scored]
    scored.sort(key=lambda x: (-x[2], x[0], x[1]))
    return scored[:k]


def render_match_examples(matchset: MatchSet, matrix: SimilarityMatrix, k: int = 10) -> str:
    rows = [[matrix.truth_texts[i], matrix.gen_texts[j], fmt_fixed(s, 2)]
            for i, j, s in top_matches(matchset, matrix, k)]
    return _md_table(["Truth: High-level test cases", "Generated: High-level test cases", "Similarity"], rows,
                     align_right_from=2)


def nearest_neighbors(truth_key: str, matrix: SimilarityMatrix, k: int) -> list[tuple[int, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    row = matrix.row(truth_key)
    # stable sort: ties keep generated-case order
    order = np.argsort(-row, kind="stable")[:k]
    return [(int(j), float(row[j])) for j in order]


def render_nearest_neighbors(truth_key: str, matrix: SimilarityMatrix, k: int = 7) -> str:
    i = matrix.truth_keys.index(truth_key) if truth_key in matrix.truth_keys else None
    if i is None:
        raise KeyError(f"unknown truth key {truth_key!r}")
    rows = [[matrix.gen_texts[j], fmt_fixed(s, 3)] for j, s in nearest_neighbors(truth_key, matrix, k)]
    head = f"Truth: {matrix.truth_texts[i]}\n\n"
    return head + _md_table(["Generated: High-level test cases", "similarity"], rows)


def histogram_csv(hist: Histogram) -> str:
    lines = [f"# total={hist.total}", f"# threshold={hist.threshold_marker!r}", f"# bin_width={hist.bin_width!r}",
             "lower_edge,count"]
    lines += [f"{edge!r},{count}" for edge, count in hist.bins]
    return "\n".join(lines) + "\n"


def emit_histogram_data(hist: Histogram, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(histogram_csv(hist))
    return path


def read_histogram_csv(path: str | Path) -> tuple[int, float, list[tuple[float, int]]]:
    total, threshold, bins = 0, 0.0, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# total="):
            total = int(line.split("=", 1)[1])
        elif line.startswith("# threshold="):
            threshold = float(line.split("=", 1)[1])
        elif line and not line.startswith("#") and line != "lower_edge,count":
            edge, count = line.split(",")
            bins.append((float(edge), int(count)))
    return total, threshold, bins


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path

"""Generate high-level test cases from requirement documents with staged LLM prompts,
and score them against ground-truth cases by embedding similarity."""

from ghlgen.btid import BluetoothTestCaseId, format_bluetooth_id, parse_bluetooth_id
from ghlgen.evaluator import (
    MatchRule,
    MetricsSummary,
    SimilarityMatrix,
    aggregate_functions,
    aggregate_runs,
    build_similarity_matrix,
    compute_metrics,
    cosine_similarity,
    match_threshold,
    similarity_histogram,
)
from ghlgen.gateway import CompletionRequest, Gateway, cache_key
from ghlgen.genpipeline import render_prompt, run_ghl, run_ghl_f, run_zero_shot

__version__ = "0.1.0"

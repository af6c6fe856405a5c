"""Greedy pipeline search with the two-level shared cache.

Level one (cleaning cache) applies each candidate pipeline to the dirty table
exactly once, keyed by canonical pipeline string. Level two (evaluation cache,
owned by the harness) scores each distinct cleaned table exactly once per
protocol, keyed by content fingerprint.

Every search harvests the configured evaluator's (accuracy, ECE) for each
candidate's cleaned table — that is what the report rows and any
evaluator-aware reward read — so a follow-up search over the same pipelines
under a different reward performs no additional evaluator calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import Pipeline, apply_pipeline, impute, scale
from .errors import DegenerateDataError, InputError, RewardError
from .evaluators import EvaluationHarness
from .rewards import (RewardContext, canonical_kind, clip_reward, compute_reward,
                      make_context, r3_value, R5_SCALE)
from .table import Table

B1_PIPELINE = Pipeline((impute("mean"), scale("minmax")))
B2_PIPELINE = Pipeline((impute("mean"), scale("zscore")))
B3_PIPELINES = (Pipeline((impute("mean"),)), Pipeline((impute("median"),)),
                Pipeline((scale("minmax"),)))


@dataclass
class SearchSession:
    """Shared state for one dirty table: cleaning cache, evaluation harness,
    forest cache, and the frozen reward reference."""

    dirty: Table
    harness: EvaluationHarness
    cleaning_cache: dict = field(default_factory=dict)
    rf_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        self._ctx_template = make_context(
            self.dirty, harness=self.harness,
            rf_seed=self.harness.seed, rf_cache=self.rf_cache)

    def context(self) -> RewardContext:
        ctx = self._ctx_template
        return RewardContext(
            ref_table=ctx.ref_table, ref_profile=ctx.ref_profile,
            ref_corr=ctx.ref_corr, ref_skew=ctx.ref_skew, n0=ctx.n0,
            harness=self.harness, rf_seed=ctx.rf_seed, rf_cache=self.rf_cache)

    def cleaned(self, pipeline: Pipeline) -> Table:
        key = pipeline.canonical()
        if key not in self.cleaning_cache:
            self.cleaning_cache[key] = apply_pipeline(self.dirty, pipeline)
        return self.cleaning_cache[key]

    @property
    def evaluator_calls(self) -> int:
        return self.harness.calls


@dataclass
class PipelineRow:
    pipeline: Pipeline
    canonical: str
    score: float | None
    accuracy: float | None
    ece: float | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class BaselineRow:
    name: str
    pipeline: str
    accuracy: float
    ece: float


@dataclass
class SearchReport:
    reward_kind: str
    rows: list
    best: PipelineRow
    baselines: list
    evaluator_calls: int


def _tie_key(row: PipelineRow):
    return (len(row.pipeline), row.canonical)


def _score_pipeline(session: SearchSession, pipeline: Pipeline, kind: str,
                    cleaned: Table) -> float:
    ctx = session.context()
    if kind == "R5":
        # Incremental reward telescopes over the pipeline's own steps.
        prev = r3_value(session.dirty, ctx)
        total = 0.0
        for k in range(1, len(pipeline) + 1):
            prefix = Pipeline(pipeline.steps[:k])
            now = r3_value(session.cleaned(prefix), ctx)
            total += clip_reward(R5_SCALE * (now - prev))
            prev = now
        return clip_reward(total)
    return compute_reward(kind, cleaned, ctx)


def greedy_search(session: SearchSession, pipelines, kind: str) -> SearchReport:
    """Score every candidate under `kind`, pick the best with deterministic
    tie-break (shorter pipeline first, then lexicographic canonical string),
    and attach the B0/B1 report baselines."""
    kind = canonical_kind(kind)
    if not pipelines:
        raise InputError("greedy_search needs a non-empty pipeline list")
    rows = []
    for p in pipelines:
        canonical = p.canonical()
        try:
            cleaned = session.cleaned(p)
            downstream = session.harness.reward_eval(cleaned)
            score = _score_pipeline(session, p, kind, cleaned)
            rows.append(PipelineRow(p, canonical, score,
                                    downstream.accuracy, downstream.ece))
        except (RewardError, DegenerateDataError) as e:
            rows.append(PipelineRow(p, canonical, None, None, None, error=str(e)))
    scored = [r for r in rows if not r.failed]
    if not scored:
        raise RewardError("every candidate pipeline failed to score")
    best_score = max(r.score for r in scored)
    best = min((r for r in scored if r.score == best_score), key=_tie_key)
    baselines = [
        _baseline_row(session, "B0", Pipeline(())),
        _baseline_row(session, "B1", B1_PIPELINE),
    ]
    return SearchReport(kind, rows, best, baselines, session.evaluator_calls)


def _baseline_row(session: SearchSession, name: str, pipeline: Pipeline) -> BaselineRow:
    cleaned = session.cleaned(pipeline)
    res = session.harness.report_eval(cleaned)
    return BaselineRow(name, pipeline.canonical(), res.accuracy, res.ece)


def run_baselines(session: SearchSession) -> list:
    """Fixed report rows: B0 raw, B1 mean-impute+minmax, B2 mean-impute+zscore,
    B3 the arithmetic mean over three single-step pipelines."""
    rows = [
        _baseline_row(session, "B0", Pipeline(())),
        _baseline_row(session, "B1", B1_PIPELINE),
        _baseline_row(session, "B2", B2_PIPELINE),
    ]
    parts = [_baseline_row(session, f"B3:{p.canonical()}", p) for p in B3_PIPELINES]
    rows.append(BaselineRow(
        "B3", " | ".join(p.canonical() for p in B3_PIPELINES),
        float(np.mean([r.accuracy for r in parts])),
        float(np.mean([r.ece for r in parts]))))
    return rows


@dataclass
class RewardTaxonomy:
    """Score matrix over (reward kind, pipeline) plus per-kind winners."""

    kinds: list
    pipelines: list
    scores: dict           # (kind, canonical) -> score or None
    winners: dict          # kind -> PipelineRow
    evaluator_calls: int


def rank_rewards(session: SearchSession, pipelines, kinds) -> RewardTaxonomy:
    kinds = [canonical_kind(k) for k in kinds]
    scores = {}
    winners = {}
    for kind in kinds:
        report = greedy_search(session, pipelines, kind)
        for row in report.rows:
            scores[(kind, row.canonical)] = row.score
        winners[kind] = report.best
    return RewardTaxonomy(kinds, list(pipelines), scores, winners,
                          session.evaluator_calls)

"""End-to-end per-question orchestration.

One question flows through: CoT once (concurrently with the first code
path), scheduler-driven routing with a skip when answers agree, candidate
serialization and confidence scoring, the threshold gate, the judge only
when needed, and finally the format matcher for overlong answers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from . import confidence as confidence_mod
from .agents import (
    AgentFailed,
    candidate_from_cot,
    fallback_answer,
    run_cot,
    run_format_matcher,
    run_judge,
)
from .confidence import AgreementScorer, ConfidenceBackend, ConfidenceVector, gate
from .core import (
    AnswerCandidate,
    CandidateSet,
    DecidedBy,
    Question,
    ReasoningPath,
    ReasoningTrace,
    Routing,
    RunRecord,
    Table,
)
from .executors import LoopConfig, SqlEnvironment, code_and_debug, trace_candidate
from .gateway import LlmGateway
from .metrics import answers_match
from .scheduler import HeuristicScorer, ScorerBackend, extract_features, schema_text, score_paths

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """No reasoning path produced an answer; carries the partial record."""

    def __init__(self, message: str, record: Optional[RunRecord] = None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class PipelineConfig:
    use_scheduler: bool = True
    use_cc: bool = True
    use_ja: bool = True
    use_fm: bool = True
    n: int = 3
    theta: float = 0.1
    fm_char_limit: int = 100
    judge_sees_scores: bool = True
    pot_threshold: float = 0.9
    require_equal_results: bool = True
    sql_timeout_s: float = 10.0

    def loop_config(self) -> LoopConfig:
        return LoopConfig(
            n=self.n,
            pot_threshold=self.pot_threshold,
            require_equal_results=self.require_equal_results,
            sql_timeout_s=self.sql_timeout_s,
        )


def compare_answers(a: str, b: str) -> bool:
    """Normalized equality with numeric coercion ("84" vs "84.0" agree)."""
    return answers_match(a, b)


@dataclass(frozen=True)
class PipelineOutcome:
    final: str
    record: RunRecord
    serialized: str
    scores: Optional[ConfidenceVector]


class Pipeline:
    """Answers one question at a time; instances are independent."""

    def __init__(
        self,
        gateway: LlmGateway,
        config: Optional[PipelineConfig] = None,
        sandbox=None,
        scheduler_scorer: Optional[ScorerBackend] = None,
        cc_scorer: Optional[ConfidenceBackend] = None,
    ):
        self.gateway = gateway
        self.config = config or PipelineConfig()
        self.sandbox = sandbox
        self.scheduler_scorer = scheduler_scorer or HeuristicScorer()
        self.cc_scorer = cc_scorer or AgreementScorer()

    def answer(self, table: Table, question: Question) -> tuple[str, RunRecord]:
        outcome = self.run(table, question)
        return outcome.final, outcome.record

    def run(self, table: Table, question: Question) -> PipelineOutcome:
        config = self.config
        loop_config = config.loop_config()
        sql_env = SqlEnvironment(table)
        try:
            return self._run(table, question, config, loop_config, sql_env)
        finally:
            sql_env.close()

    def _code_path(
        self,
        path: ReasoningPath,
        table: Table,
        question: Question,
        loop_config: LoopConfig,
        sql_env: SqlEnvironment,
    ) -> ReasoningTrace:
        return code_and_debug(
            path,
            table,
            question,
            self.gateway,
            loop_config,
            sql_env=sql_env,
            sandbox=self.sandbox,
        )

    def _run(
        self,
        table: Table,
        question: Question,
        config: PipelineConfig,
        loop_config: LoopConfig,
        sql_env: SqlEnvironment,
    ) -> PipelineOutcome:
        if config.use_scheduler:
            features = extract_features(table, question)
            path_scores = score_paths(
                features, question, schema_text(table), self.scheduler_scorer
            )
            first_path = (
                ReasoningPath.POT if path_scores.pot_first else ReasoningPath.TEXT2SQL
            )
            routing = (
                Routing.POT_FIRST
                if first_path is ReasoningPath.POT
                else Routing.SQL_FIRST
            )
        else:
            first_path = ReasoningPath.POT
            routing = Routing.NO_SCHEDULER

        # CoT runs exactly once, concurrently with the first code path.
        with ThreadPoolExecutor(max_workers=2) as pool:
            cot_future = pool.submit(self._run_cot_safe, table, question)
            first_future = pool.submit(
                self._code_path, first_path, table, question, loop_config, sql_env
            )
            solution_text, cot_answer = cot_future.result()
            first_trace = first_future.result()

        cot_candidate = candidate_from_cot(cot_answer)
        cot_trace: Optional[ReasoningTrace] = None
        if solution_text is not None:
            cot_trace = ReasoningTrace(
                path=ReasoningPath.COT, iterations=(), solution_text=solution_text
            )

        other_path = (
            ReasoningPath.TEXT2SQL
            if first_path is ReasoningPath.POT
            else ReasoningPath.POT
        )
        first_candidate = trace_candidate(first_trace)
        skipped_path: Optional[ReasoningPath] = None
        other_trace: Optional[ReasoningTrace] = None

        if config.use_scheduler:
            # An errored first path never counts as agreement, so the third
            # path still runs as a backstop.
            agreed = (
                not cot_candidate.is_nothing
                and not first_candidate.is_nothing
                and compare_answers(cot_candidate.raw, first_candidate.raw)
            )
            if agreed:
                skipped_path = other_path
            else:
                other_trace = self._code_path(
                    other_path, table, question, loop_config, sql_env
                )
        else:
            other_trace = self._code_path(
                other_path, table, question, loop_config, sql_env
            )

        traces: dict[ReasoningPath, Optional[ReasoningTrace]] = {
            ReasoningPath.COT: cot_trace,
            first_path: first_trace,
            other_path: other_trace,
        }
        by_path: dict[ReasoningPath, AnswerCandidate] = {
            ReasoningPath.COT: cot_candidate,
            first_path: first_candidate,
            other_path: (
                trace_candidate(other_trace)
                if other_trace is not None
                else AnswerCandidate.nothing(other_path)
            ),
        }
        candidates = CandidateSet(
            cot=by_path[ReasoningPath.COT],
            pot=by_path[ReasoningPath.POT],
            sql=by_path[ReasoningPath.TEXT2SQL],
        )

        example = confidence_mod.serialize_example(table, question, traces, candidates)
        candidates = example.candidates

        def build_record(decided_by: DecidedBy, final: str) -> RunRecord:
            return RunRecord(
                question_id=question.id,
                routing=routing,
                skipped_path=skipped_path,
                call_counts=self.gateway.ledger.for_question(question.id),
                decided_by=decided_by,
                final_answer=final,
                metrics=None,
            )

        if not candidates.non_nothing():
            raise PipelineError(
                "every reasoning path is NOTHING",
                record=build_record(DecidedBy.JUDGE_AGENT, ""),
            )

        scores: Optional[ConfidenceVector] = None
        selected: Optional[ReasoningPath] = None
        if config.use_cc:
            scores = confidence_mod.score(example, self.cc_scorer)
            selected = gate(scores, config.theta)

        if selected is not None:
            decided_by = DecidedBy.CONFIDENCE_GATE
            final = candidates.get(selected).raw
        else:
            decided_by = DecidedBy.JUDGE_AGENT
            judge_scores = (
                scores.as_mapping()
                if scores is not None and config.judge_sees_scores
                else None
            )
            if config.use_ja:
                final = run_judge(
                    self.gateway, table, question, traces, candidates, judge_scores
                )
            else:
                ranking = (
                    scores.as_mapping()
                    if scores is not None
                    else AgreementScorer().score(example).as_mapping()
                )
                final = fallback_answer(candidates, ranking)

        if config.use_fm and len(final) > config.fm_char_limit:
            final = run_format_matcher(self.gateway, question, final)

        return PipelineOutcome(
            final=final,
            record=build_record(decided_by, final),
            serialized=example.text,
            scores=scores,
        )

    def _run_cot_safe(
        self, table: Table, question: Question
    ) -> tuple[Optional[str], Optional[str]]:
        try:
            return run_cot(self.gateway, table, question)
        except AgentFailed as exc:
            logger.warning("CoT agent failed for %s: %s", question.id, exc)
            return None, None

"""Agent operations: one gateway call each, plus at most one JSON re-ask.

Each operation builds its prompt, calls the gateway under its role, and
parses the structured reply. Unrecoverable replies raise AgentFailed; the
caller decides whether that voids a candidate or merely stops a loop.
"""

from __future__ import annotations

import logging
from typing import Mapping, Optional, Sequence

from .core import (
    AnswerCandidate,
    CandidateSet,
    ExecutionResult,
    Question,
    ReasoningPath,
    ReasoningTrace,
    Table,
)
from .gateway import AgentRole, GatewayError, JsonNotFound, LlmGateway, MissingKey, extract_json
from .metrics import normalize_answer
from . import prompts

logger = logging.getLogger(__name__)

#: Preference order used for score ties and judge fallbacks.
PATH_PRIORITY = (ReasoningPath.POT, ReasoningPath.TEXT2SQL, ReasoningPath.COT)

_RETRY_SUFFIX = "\n## Respond using JSON only."


class AgentFailed(RuntimeError):
    """An agent call could not produce a usable structured reply."""


def _complete_json(
    gateway: LlmGateway,
    role: AgentRole,
    prompt: str,
    question_id: str,
    required_keys: Sequence[str],
) -> dict[str, str]:
    try:
        raw = gateway.complete(role, prompt, question_id)
    except GatewayError as exc:
        raise AgentFailed(f"{role.value}: {exc}") from exc
    try:
        return extract_json(raw, required_keys)
    except (JsonNotFound, MissingKey) as first:
        logger.debug("%s reply unparseable (%s); re-asking once", role.value, first)
    try:
        raw = gateway.complete(role, prompt + _RETRY_SUFFIX, question_id)
        return extract_json(raw, required_keys)
    except (GatewayError,) as exc:
        raise AgentFailed(f"{role.value}: retry failed: {exc}") from exc


def run_cot(gateway: LlmGateway, table: Table, question: Question) -> tuple[str, str]:
    """Run the chain-of-thought agent once; returns (solution, answer)."""
    prompt = prompts.build_cot_prompt(table, question)
    reply = _complete_json(gateway, AgentRole.COTA, prompt, question.id, ["solution", "answer"])
    return reply["solution"], reply["answer"]


def run_pot(gateway: LlmGateway, table: Table, question: Question) -> str:
    """Generate the initial pandas code body; must assign ``ans``."""
    prompt = prompts.build_pot_prompt(table, question)
    reply = _complete_json(gateway, AgentRole.POTA, prompt, question.id, ["code"])
    return reply["code"]


def run_t2sql(gateway: LlmGateway, table: Table, question: Question) -> str:
    """Generate the initial SQL query."""
    prompt = prompts.build_sql_prompt(table, question)
    reply = _complete_json(gateway, AgentRole.T2SA, prompt, question.id, ["code"])
    return reply["code"]


def run_debug(
    gateway: LlmGateway,
    role: AgentRole,
    table: Table,
    question: Question,
    code: str,
    result: ExecutionResult,
) -> str:
    """Ask the matching debug agent for a corrected code/query version."""
    if role is AgentRole.PDA:
        prompt = prompts.build_pot_debug_prompt(table, question, code, result.payload)
    elif role is AgentRole.SDA:
        prompt = prompts.build_sql_debug_prompt(table, question, code, result.payload)
    else:
        raise ValueError(f"not a debug role: {role}")
    reply = _complete_json(gateway, role, prompt, question.id, ["code"])
    return reply["code"]


def fallback_answer(
    candidates: CandidateSet,
    scores: Optional[Mapping[ReasoningPath, float]] = None,
) -> str:
    """Best candidate without a judge: score argmax, else path priority."""
    if scores is not None:
        best: Optional[ReasoningPath] = None
        best_score = float("-inf")
        for path in PATH_PRIORITY:
            if candidates.get(path).is_nothing:
                continue
            if scores.get(path, 0.0) > best_score:
                best = path
                best_score = scores.get(path, 0.0)
        if best is not None:
            return candidates.get(best).raw
    for path in PATH_PRIORITY:
        if not candidates.get(path).is_nothing:
            return candidates.get(path).raw
    raise AgentFailed("no candidate available for fallback")


def run_judge(
    gateway: LlmGateway,
    table: Table,
    question: Question,
    traces: Mapping[ReasoningPath, Optional[ReasoningTrace]],
    candidates: CandidateSet,
    scores: Optional[Mapping[ReasoningPath, float]] = None,
) -> str:
    """Adjudicate among candidates; degrades to the score/priority fallback."""
    if not candidates.non_nothing():
        raise ValueError("judge needs at least one non-NOTHING candidate")
    score_items = None
    if scores is not None:
        score_items = [(path.value, scores.get(path, 0.0)) for path in
                       (ReasoningPath.COT, ReasoningPath.POT, ReasoningPath.TEXT2SQL)]
    prompt = prompts.build_judge_prompt(table, question, traces, candidates, score_items)
    try:
        reply = _complete_json(gateway, AgentRole.JA, prompt, question.id, ["answer"])
        return reply["answer"]
    except AgentFailed as exc:
        logger.warning("judge failed (%s); falling back to best candidate", exc)
        return fallback_answer(candidates, scores)


def run_format_matcher(gateway: LlmGateway, question: Question, long_answer: str) -> str:
    """Condense a verbose final answer; failure keeps the original."""
    prompt = prompts.build_fm_prompt(question, long_answer)
    try:
        reply = _complete_json(gateway, AgentRole.FM, prompt, question.id, ["Extracted_Answer"])
        return reply["Extracted_Answer"]
    except AgentFailed as exc:
        logger.warning("format matcher failed (%s); keeping original answer", exc)
        return long_answer


def candidate_from_cot(answer: Optional[str]) -> AnswerCandidate:
    if answer is None:
        return AnswerCandidate.nothing(ReasoningPath.COT)
    return AnswerCandidate(
        path=ReasoningPath.COT, value=normalize_answer(answer), raw=answer.strip()
    )

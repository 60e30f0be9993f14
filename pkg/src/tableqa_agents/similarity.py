"""Code-similarity metrics and the early-stopping predicates for debug loops.

PoT stops when the mean of four code similarities (Levenshtein, sequence
match, AST, opcode) strictly exceeds the threshold AND both iterations
produced the same execution result. SQL stops on an unchanged query or when
a previously failing query now succeeds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from difflib import SequenceMatcher
from typing import Optional, Protocol

from .core import ExecutionResult, ResultKind

logger = logging.getLogger(__name__)

POT_STOP_THRESHOLD = 0.9


class SandboxUnavailable(RuntimeError):
    """The sandbox process cannot serve requests."""


class SupportsSimilarity(Protocol):
    def similarity(self, code_a: str, code_b: str) -> tuple[Optional[float], Optional[float]]:
        """Return (ast, opcode) similarities; None marks an unavailable component."""
        ...


@dataclass(frozen=True)
class SimilarityReport:
    levenshtein: float
    sequence_match: float
    ast: Optional[float]
    opcode: Optional[float]
    mean: float
    degraded: bool = False

    def components(self) -> list[float]:
        out = [self.levenshtein, self.sequence_match]
        if self.ast is not None:
            out.append(self.ast)
        if self.opcode is not None:
            out.append(self.opcode)
        return out


def levenshtein_ratio(a: str, b: str) -> float:
    """1 − edit_distance/max(len); 1.0 when both strings are empty."""
    if a == b:
        return 1.0
    if not a or not b:
        return 0.0
    # Two-row DP keeps memory linear in the shorter string.
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return 1.0 - previous[-1] / max(len(a), len(b))


def sequence_match_ratio(a, b) -> float:
    """Unrounded 2M/(|a|+|b|) ratio; accepts strings or token sequences."""
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def code_similarity_report(
    code_a: str,
    code_b: str,
    sandbox: Optional[SupportsSimilarity] = None,
) -> SimilarityReport:
    """Compute all available similarity components and their mean.

    AST/opcode similarities come from the sandbox; when it is unavailable or
    the code does not parse, those components are dropped from the mean and
    the report is flagged degraded.
    """
    lev = levenshtein_ratio(code_a, code_b)
    seq = sequence_match_ratio(code_a, code_b)
    ast_sim: Optional[float] = None
    opcode_sim: Optional[float] = None
    degraded = False
    if sandbox is None:
        degraded = True
    else:
        try:
            ast_sim, opcode_sim = sandbox.similarity(code_a, code_b)
        except SandboxUnavailable:
            logger.warning("sandbox unavailable; similarity degrades to two metrics")
            degraded = True
    components = [lev, seq]
    if ast_sim is not None:
        components.append(ast_sim)
    if opcode_sim is not None:
        components.append(opcode_sim)
    return SimilarityReport(
        levenshtein=lev,
        sequence_match=seq,
        ast=ast_sim,
        opcode=opcode_sim,
        mean=sum(components) / len(components),
        degraded=degraded or ast_sim is None or opcode_sim is None,
    )


def pot_stop(
    prev: tuple[str, ExecutionResult],
    next_: tuple[str, ExecutionResult],
    sandbox: Optional[SupportsSimilarity] = None,
    threshold: float = POT_STOP_THRESHOLD,
    require_equal_results: bool = True,
) -> bool:
    """Stop predicate for the PoT debug loop.

    True iff mean code similarity strictly exceeds ``threshold`` and (unless
    relaxed) both iterations produced equal execution results.
    """
    prev_code, prev_result = prev
    next_code, next_result = next_
    report = code_similarity_report(prev_code, next_code, sandbox)
    if report.mean <= threshold:
        return False
    if not require_equal_results:
        return True
    return prev_result == next_result


def _normalize_ws(query: str) -> str:
    return " ".join(query.split())


def sql_stop(
    prev: tuple[str, ExecutionResult],
    next_: tuple[str, ExecutionResult],
) -> bool:
    """Stop predicate for the SQL debug loop.

    True iff the query is unchanged modulo whitespace, or the previous
    iteration failed and the new one succeeded.
    """
    prev_query, prev_result = prev
    next_query, next_result = next_
    if _normalize_ws(prev_query) == _normalize_ws(next_query):
        return True
    return prev_result.kind is not ResultKind.VALUE and next_result.kind is ResultKind.VALUE

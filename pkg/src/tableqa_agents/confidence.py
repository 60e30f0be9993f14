"""Candidate serialization with special tokens, confidence scoring and the
threshold gate.

Serialization follows the structured-token layout consumed by the trained
checker: table size tags, the markdown table, the question, then one block
per reasoning path. A path skipped by the scheduler, or whose serialized
body exceeds the size limit, is voided: its slots carry the NOTHING token
and its confidence is forced to zero.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Protocol

import httpx

from .core import (
    AnswerCandidate,
    CandidateSet,
    NOTHING,
    Question,
    ReasoningPath,
    ReasoningTrace,
    Table,
    table_to_markdown,
)
from .metrics import answers_match, exact_match, token_f1

logger = logging.getLogger(__name__)

PATH_BODY_CHAR_LIMIT = 3000
MAX_ITERATION_TAG = 3
DEFAULT_THETA = 0.1

#: Gate tie-break order: code paths are favored for precision.
TIE_BREAK_ORDER = (ReasoningPath.POT, ReasoningPath.TEXT2SQL, ReasoningPath.COT)

SPECIAL_TOKENS = (
    "<Table_row_size>", "</Table_row_size>",
    "<Table_column_size>", "</Table_column_size>",
    "<Table_size>", "</Table_size>",
    "<Table>", "</Table>",
    "<Question>", "</Question>",
    "<solution>", "</solution>",
    "<answer>", "</answer>",
    "<PoT>", "</PoT>",
    "<text2sql>", "</text2sql>",
    "<CoT>", "</CoT>",
    NOTHING,
) + tuple(
    tag
    for k in range(MAX_ITERATION_TAG + 1)
    for tag in (
        f"<N={k}_code>", f"</N={k}_code>",
        f"<N={k}_execution_result>", f"</N={k}_execution_result>",
    )
)


class ScorerUnavailable(RuntimeError):
    """The configured confidence backend cannot produce scores."""


@dataclass(frozen=True)
class ConfidenceVector:
    cot: float
    pot: float
    sql: float

    def __post_init__(self) -> None:
        for value in (self.cot, self.pot, self.sql):
            if not 0.0 <= value <= 1.0:
                raise ValueError("confidence scores must lie in [0, 1]")

    def get(self, path: ReasoningPath) -> float:
        return {
            ReasoningPath.COT: self.cot,
            ReasoningPath.POT: self.pot,
            ReasoningPath.TEXT2SQL: self.sql,
        }[path]

    def as_mapping(self) -> dict[ReasoningPath, float]:
        return {path: self.get(path) for path in ReasoningPath}


@dataclass(frozen=True)
class SerializedExample:
    """Special-token serialization plus the post-voiding candidate set."""

    text: str
    tokens_used: frozenset[str]
    candidates: CandidateSet
    nothing_paths: frozenset[ReasoningPath]


def _nothing_code_body() -> str:
    return (
        f"<N=0_code>{NOTHING}</N=0_code>\n"
        f"<N=0_execution_result>{NOTHING}</N=0_execution_result>"
    )


def _nothing_cot_body() -> str:
    return f"<solution>{NOTHING}</solution>\n<answer>{NOTHING}</answer>"


def _code_body(trace: ReasoningTrace) -> str:
    parts = []
    for k, (code, result) in enumerate(trace.iterations[: MAX_ITERATION_TAG + 1]):
        parts.append(f"<N={k}_code>{code}</N={k}_code>")
        parts.append(f"<N={k}_execution_result>{result.payload}</N={k}_execution_result>")
    return "\n".join(parts)


def serialize_example(
    table: Table,
    question: Question,
    traces: Mapping[ReasoningPath, Optional[ReasoningTrace]],
    candidates: CandidateSet,
) -> SerializedExample:
    nothing_paths: set[ReasoningPath] = set()
    voided: dict[ReasoningPath, AnswerCandidate] = {}

    def finalize(path: ReasoningPath, body: str, nothing_body: str) -> str:
        if len(body) > PATH_BODY_CHAR_LIMIT:
            nothing_paths.add(path)
            voided[path] = AnswerCandidate.nothing(path)
            return nothing_body
        return body

    pot_trace = traces.get(ReasoningPath.POT)
    if pot_trace is None:
        nothing_paths.add(ReasoningPath.POT)
        pot_body = _nothing_code_body()
    else:
        pot_body = finalize(ReasoningPath.POT, _code_body(pot_trace), _nothing_code_body())

    sql_trace = traces.get(ReasoningPath.TEXT2SQL)
    if sql_trace is None:
        nothing_paths.add(ReasoningPath.TEXT2SQL)
        sql_body = _nothing_code_body()
    else:
        sql_body = finalize(ReasoningPath.TEXT2SQL, _code_body(sql_trace), _nothing_code_body())

    cot_trace = traces.get(ReasoningPath.COT)
    if cot_trace is None or cot_trace.solution_text is None or candidates.cot.is_nothing:
        nothing_paths.add(ReasoningPath.COT)
        cot_body = _nothing_cot_body()
    else:
        cot_body = finalize(
            ReasoningPath.COT,
            f"<solution>{cot_trace.solution_text}</solution>\n<answer>{candidates.cot.raw}</answer>",
            _nothing_cot_body(),
        )

    text = (
        f"<Table_row_size>{table.n_rows}</Table_row_size>\n"
        f"<Table_column_size>{table.n_cols}</Table_column_size>\n"
        f"<Table_size>{table.n_rows * table.n_cols}</Table_size>\n"
        f"<Table>\n{table_to_markdown(table)}\n</Table>\n"
        f"<Question>{question.text}</Question>\n"
        f"<PoT>\n{pot_body}\n</PoT>\n"
        f"<text2sql>\n{sql_body}\n</text2sql>\n"
        f"<CoT>\n{cot_body}\n</CoT>"
    )

    updated = CandidateSet(
        cot=voided.get(ReasoningPath.COT, candidates.cot),
        pot=voided.get(ReasoningPath.POT, candidates.pot),
        sql=voided.get(ReasoningPath.TEXT2SQL, candidates.sql),
    )
    tokens_used = frozenset(token for token in SPECIAL_TOKENS if token in text)
    return SerializedExample(
        text=text,
        tokens_used=tokens_used,
        candidates=updated,
        nothing_paths=frozenset(nothing_paths),
    )


class ConfidenceBackend(Protocol):
    def score(self, example: SerializedExample) -> ConfidenceVector: ...


class StubScorer:
    """Fixture-driven constant scores, for tests and offline accounting."""

    def __init__(self, cot: float, pot: float, sql: float):
        self.vector = ConfidenceVector(cot=cot, pot=pot, sql=sql)

    def score(self, example: SerializedExample) -> ConfidenceVector:
        return self.vector


#: Penalty applied to the CoT agreement shortfall (see README formula).
COT_DOWNWEIGHT = 0.05
#: Score for a path with no other candidate to agree with.
LONE_CANDIDATE_SCORE = 0.5


class AgreementScorer:
    """Default backend: mean pairwise answer agreement across live paths.

    score(p) = mean over other non-NOTHING candidates of match(p, other),
    where match is normalized exact match with numeric coercion; a lone
    candidate scores 0.5, and CoT is slightly down-weighted by subtracting
    COT_DOWNWEIGHT times its disagreement. Unanimous candidates therefore
    all score 1.0.
    """

    def score(self, example: SerializedExample) -> ConfidenceVector:
        candidates = example.candidates
        scores: dict[ReasoningPath, float] = {}
        for path, candidate in candidates.items():
            if candidate.is_nothing:
                scores[path] = 0.0
                continue
            others = [
                other
                for other_path, other in candidates.items()
                if other_path is not path and not other.is_nothing
            ]
            if not others:
                agreement = LONE_CANDIDATE_SCORE
            else:
                agreement = sum(
                    1.0 for other in others if answers_match(candidate.raw, other.raw)
                ) / len(others)
            if path is ReasoningPath.COT:
                agreement = max(0.0, agreement - COT_DOWNWEIGHT * (1.0 - agreement))
            scores[path] = agreement
        return ConfidenceVector(
            cot=scores[ReasoningPath.COT],
            pot=scores[ReasoningPath.POT],
            sql=scores[ReasoningPath.TEXT2SQL],
        )


class RemoteScorer:
    """POSTs the serialized text to an endpoint returning three floats."""

    def __init__(self, url: str, client: Optional[httpx.Client] = None, timeout: float = 30.0):
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def score(self, example: SerializedExample) -> ConfidenceVector:
        try:
            response = self._client.post(self.url, json={"text": example.text})
        except httpx.HTTPError as exc:
            raise ScorerUnavailable(f"confidence endpoint: {exc}") from exc
        if response.status_code != 200:
            raise ScorerUnavailable(f"confidence endpoint returned {response.status_code}")
        try:
            data = response.json()
            return ConfidenceVector(
                cot=float(data["cot"]), pot=float(data["pot"]), sql=float(data["sql"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerUnavailable(f"malformed confidence response: {exc}") from exc


def score(example: SerializedExample, backend: ConfidenceBackend) -> ConfidenceVector:
    """Score an example, forcing NOTHING paths to zero regardless of backend."""
    try:
        vector = backend.score(example)
    except ScorerUnavailable as exc:
        logger.warning("confidence backend unavailable (%s); using agreement heuristic", exc)
        vector = AgreementScorer().score(example)
    forced = {
        path: 0.0
        if (path in example.nothing_paths or example.candidates.get(path).is_nothing)
        else vector.get(path)
        for path in ReasoningPath
    }
    return ConfidenceVector(
        cot=forced[ReasoningPath.COT],
        pot=forced[ReasoningPath.POT],
        sql=forced[ReasoningPath.TEXT2SQL],
    )


def gate(scores: ConfidenceVector, theta: float = DEFAULT_THETA) -> Optional[ReasoningPath]:
    """Select the argmax path when max strictly exceeds theta, else None.

    None means the judge stage is needed. Ties break PoT > text2SQL > CoT.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    best_path = TIE_BREAK_ORDER[0]
    for path in TIE_BREAK_ORDER[1:]:
        if scores.get(path) > scores.get(best_path):
            best_path = path
    if scores.get(best_path) > theta:
        return best_path
    return None


def soft_label(pred: str, gold: str) -> float:
    """1.0 on exact match, otherwise the token-level F1 against gold."""
    if exact_match(pred, gold):
        return 1.0
    return token_f1(pred, gold)


def candidate_soft_label(candidate: AnswerCandidate, gold: str) -> float:
    if candidate.is_nothing:
        return 0.0
    return soft_label(candidate.raw, gold)


MAX_TRAINING_TABLE_ROWS = 64


def _escape_text(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def emit_cc_training_rows(
    dataset_rows: Iterable[
        tuple[Table, Question, Mapping[ReasoningPath, Optional[ReasoningTrace]], CandidateSet, str]
    ],
    out_path: str,
    metadata_path: Optional[str] = None,
    max_table_rows: int = MAX_TRAINING_TABLE_ROWS,
) -> int:
    """Write one tab-separated row per pair: serialized text + 3 soft labels.

    Tables beyond ``max_table_rows`` are emitted with the full schema and a
    truncated row window; the truncation is noted in the metadata file.
    Sliding-window augmentation is deliberately not performed here.
    """
    count = 0
    truncated: list[dict] = []
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("text\tlabel_pot\tlabel_sql\tlabel_cot\n")
        for index, (table, question, traces, candidates, gold) in enumerate(dataset_rows):
            table_for_text = table
            if table.n_rows > max_table_rows:
                table_for_text = Table(
                    columns=table.columns,
                    rows=table.rows[:max_table_rows],
                    name=table.name,
                )
                truncated.append(
                    {"row": index, "rows_total": table.n_rows, "rows_kept": max_table_rows}
                )
            example = serialize_example(table_for_text, question, traces, candidates)
            labels = (
                candidate_soft_label(example.candidates.pot, gold),
                candidate_soft_label(example.candidates.sql, gold),
                candidate_soft_label(example.candidates.cot, gold),
            )
            fh.write(
                _escape_text(example.text)
                + "\t"
                + "\t".join(format(label, ".6f") for label in labels)
                + "\n"
            )
            count += 1
    if metadata_path is not None:
        with open(metadata_path, "w", encoding="utf-8") as fh:
            json.dump({"rows": count, "truncated": truncated}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return count

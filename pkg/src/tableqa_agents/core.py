"""Shared domain types and canonical serializations.

Everything here is an immutable value object; instances are safe to share
across threads and to use as fixture constants in tests.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Optional, Sequence, Union

if TYPE_CHECKING:
    from .metrics import MetricTriple

Cell = Union[str, int, float, None]

#: Sentinel marking a skipped or voided reasoning path.
NOTHING = "<NOTHING>"


class MalformedTable(ValueError):
    """Raised when markdown input cannot be parsed into a Table."""


class ReasoningPath(str, Enum):
    COT = "CoT"
    POT = "PoT"
    TEXT2SQL = "Text2SQL"


class Routing(str, Enum):
    POT_FIRST = "PoTFirst"
    SQL_FIRST = "SQLFirst"
    NO_SCHEDULER = "NoScheduler"


class DecidedBy(str, Enum):
    CONFIDENCE_GATE = "ConfidenceGate"
    JUDGE_AGENT = "JudgeAgent"


class ResultKind(str, Enum):
    VALUE = "Value"
    ERROR = "Error"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class Table:
    """Column headers plus row-major cells.

    Cells are kept as loaded (string, int, float or None); type inference is
    deferred to the executors so prompt rendering and execution cannot
    disagree.
    """

    columns: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]
    name: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        if not self.columns:
            raise ValueError("table must have at least one column")
        for header in self.columns:
            if not isinstance(header, str) or not header:
                raise ValueError("column headers must be non-empty strings")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row {i} has {len(row)} cells, expected {len(self.columns)}"
                )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class Question:
    text: str
    id: str = ""
    category: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("question text must be non-empty")


@dataclass(frozen=True)
class ExecutionResult:
    """Outcome of running one generated code/query iteration."""

    kind: ResultKind
    payload: str

    @property
    def ok(self) -> bool:
        return self.kind is ResultKind.VALUE


@dataclass(frozen=True)
class AnswerCandidate:
    """Final answer proposed by one reasoning path.

    ``value`` holds the normalized answer, or the NOTHING sentinel when the
    path was skipped, voided or ended in an error. ``raw`` preserves the
    original string for reporting.
    """

    path: ReasoningPath
    value: str
    raw: str = ""

    @property
    def is_nothing(self) -> bool:
        return self.value == NOTHING

    @staticmethod
    def nothing(path: ReasoningPath) -> "AnswerCandidate":
        return AnswerCandidate(path=path, value=NOTHING, raw="")


@dataclass(frozen=True)
class ReasoningTrace:
    """Per-path sequence of (code, execution result) iterations.

    CoT traces carry no code iterations, only ``solution_text``; code paths
    carry 1..1+N iterations and no solution text.
    """

    path: ReasoningPath
    iterations: tuple[tuple[str, ExecutionResult], ...] = ()
    solution_text: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "iterations", tuple(tuple(i) for i in self.iterations))
        if self.path is ReasoningPath.COT:
            if self.iterations:
                raise ValueError("CoT trace cannot carry code iterations")
        else:
            if not self.iterations:
                raise ValueError("code-path trace needs at least one iteration")

    @property
    def last(self) -> tuple[str, ExecutionResult]:
        return self.iterations[-1]


@dataclass(frozen=True)
class CandidateSet:
    """The three path candidates, with NOTHING markers for skipped paths."""

    cot: AnswerCandidate
    pot: AnswerCandidate
    sql: AnswerCandidate

    def get(self, path: ReasoningPath) -> AnswerCandidate:
        return {
            ReasoningPath.COT: self.cot,
            ReasoningPath.POT: self.pot,
            ReasoningPath.TEXT2SQL: self.sql,
        }[path]

    def items(self) -> tuple[tuple[ReasoningPath, AnswerCandidate], ...]:
        return (
            (ReasoningPath.COT, self.cot),
            (ReasoningPath.POT, self.pot),
            (ReasoningPath.TEXT2SQL, self.sql),
        )

    def non_nothing(self) -> tuple[AnswerCandidate, ...]:
        return tuple(c for _, c in self.items() if not c.is_nothing)


@dataclass(frozen=True)
class RunRecord:
    """Per-question provenance: routing, call counts, decision and metrics."""

    question_id: str
    routing: Routing
    skipped_path: Optional[ReasoningPath]
    call_counts: Mapping[str, int]
    decided_by: DecidedBy
    final_answer: str
    metrics: Optional["MetricTriple"] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "call_counts", dict(self.call_counts))


def format_number(value: Union[int, float]) -> str:
    """Minimal rendering: integral floats print as integers (84, not 84.0)."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        if value == int(value) and abs(value) < 1e16:
            return str(int(value))
        return str(value)
    return str(value)


def render_cell(cell: Cell) -> str:
    """Canonical prompt rendering of a cell; nulls render as empty string."""
    if cell is None:
        return ""
    if isinstance(cell, str):
        return cell
    return format_number(cell)


_SEPARATOR_CELL = re.compile(r"^:?-{3,}:?$")


def table_to_markdown(table: Table) -> str:
    """Render a table as pipe-delimited markdown.

    Deterministic: left-aligned separators, single spaces around cell text,
    literal pipes escaped. Inverse of :func:`parse_markdown_table` for tables
    whose cells are trimmed strings free of newlines.
    """
    def esc(text: str) -> str:
        return text.replace("|", "\\|")

    lines = ["| " + " | ".join(esc(h) for h in table.columns) + " |"]
    lines.append("|" + "|".join(":---" for _ in table.columns) + "|")
    for row in table.rows:
        lines.append("| " + " | ".join(esc(render_cell(c)) for c in row) + " |")
    return "\n".join(lines)


def _split_markdown_row(line: str) -> list[str]:
    body = line.strip()
    if body.startswith("|"):
        body = body[1:]
    if body.endswith("|") and not body.endswith("\\|"):
        body = body[:-1]
    cells = re.split(r"(?<!\\)\|", body)
    return [c.strip().replace("\\|", "|") for c in cells]


def parse_markdown_table(text: str, name: Optional[str] = None) -> Table:
    """Parse pipe-delimited markdown with a separator row into a Table.

    Cells are trimmed and kept as strings; numeric typing is left to the
    executors.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise MalformedTable("markdown table needs a header and a separator row")
    header = _split_markdown_row(lines[0])
    separator = _split_markdown_row(lines[1])
    if len(separator) != len(header) or not all(
        _SEPARATOR_CELL.match(c) for c in separator
    ):
        raise MalformedTable("missing or malformed separator row")
    if not header or any(not h for h in header):
        raise MalformedTable("header cells must be non-empty")
    rows = []
    for i, line in enumerate(lines[2:], start=1):
        cells = _split_markdown_row(line)
        if len(cells) != len(header):
            raise MalformedTable(
                f"data row {i} has {len(cells)} cells, expected {len(header)}"
            )
        rows.append(tuple(cells))
    return Table(columns=tuple(header), rows=tuple(rows), name=name)


def sanitize_identifier(header: str) -> str:
    """Map a header to a SQL-safe identifier.

    Spaces and punctuation become underscores; a leading digit gains an
    underscore prefix. Idempotent.
    """
    if not header:
        raise ValueError("header must be non-empty")
    out = re.sub(r"[^A-Za-z0-9_]", "_", header)
    if out[0].isdigit():
        out = "_" + out
    return out


def sanitize_headers(columns: Sequence[str]) -> list[str]:
    """Sanitize a full header set, resolving collisions with numeric suffixes."""
    seen: dict[str, int] = {}
    result: list[str] = []
    for header in columns:
        base = sanitize_identifier(header)
        if base not in seen:
            seen[base] = 1
            result.append(base)
            continue
        n = seen[base] + 1
        candidate = f"{base}_{n}"
        while candidate in seen:
            n += 1
            candidate = f"{base}_{n}"
        seen[base] = n
        seen[candidate] = 1
        result.append(candidate)
    return result

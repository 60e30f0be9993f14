"""Hand-crafted routing features and pluggable PoT-vs-SQL priority scoring.

The feature extractor is exact and row-order invariant; the scoring backend
is pluggable because the original learned router is replaced by a heuristic,
a linear model over the same ten features, or a remote endpoint. The
heuristic rule table is documented in the README and is part of the
contract.
"""

from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Protocol

import httpx

from .core import Question, Table, sanitize_headers
from .metrics import exact_match
from .values import classify_cell, parse_number

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "n_rows",
    "n_cols",
    "table_size",
    "n_unique_question_words",
    "n_numeric_tokens",
    "n_schema_overlap_words",
    "has_int",
    "has_float",
    "has_str",
    "has_nan",
)


class ScorerUnavailable(RuntimeError):
    """The configured scoring backend cannot produce scores."""


@dataclass(frozen=True)
class SchedulerFeatures:
    n_rows: int
    n_cols: int
    table_size: int
    n_unique_question_words: int
    n_numeric_tokens: int
    n_schema_overlap_words: int
    has_int: bool
    has_float: bool
    has_str: bool
    has_nan: bool

    def __post_init__(self) -> None:
        if self.table_size != self.n_rows * self.n_cols:
            raise ValueError("table_size must equal n_rows * n_cols")
        for field_name in FEATURE_NAMES[:6]:
            if getattr(self, field_name) < 0:
                raise ValueError(f"{field_name} must be >= 0")

    def as_vector(self) -> list[float]:
        return [float(getattr(self, name)) for name in FEATURE_NAMES]


@dataclass(frozen=True)
class PathScores:
    prob_pot: float
    prob_sql: float

    def __post_init__(self) -> None:
        for value in (self.prob_pot, self.prob_sql):
            if not 0.0 <= value <= 1.0:
                raise ValueError("path scores must lie in [0, 1]")

    @property
    def pot_first(self) -> bool:
        # Ties route to PoT.
        return self.prob_pot >= self.prob_sql


def question_tokens(text: str) -> list[str]:
    """Lowercase whitespace tokens with punctuation stripped at the edges."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


def schema_text(table: Table) -> str:
    return " | ".join(table.columns)


def _schema_words(table: Table) -> set[str]:
    words: set[str] = set()
    for header in table.columns:
        words.update(question_tokens(header))
    for sanitized in sanitize_headers(table.columns):
        words.add(sanitized.lower())
    return words


def extract_features(table: Table, question: Question) -> SchedulerFeatures:
    tokens = question_tokens(question.text)
    unique_words = set(tokens)
    numeric_tokens = [t for t in tokens if parse_number(t) is not None]
    overlap = unique_words & _schema_words(table)
    classes = {classify_cell(cell) for row in table.rows for cell in row}
    return SchedulerFeatures(
        n_rows=table.n_rows,
        n_cols=table.n_cols,
        table_size=table.n_rows * table.n_cols,
        n_unique_question_words=len(unique_words),
        n_numeric_tokens=len(numeric_tokens),
        n_schema_overlap_words=len(overlap),
        has_int="int" in classes,
        has_float="float" in classes,
        has_str="str" in classes,
        has_nan="nan" in classes,
    )


class ScorerBackend(Protocol):
    def score(self, features: SchedulerFeatures, question: Question, schema: str) -> PathScores: ...


class HeuristicScorer:
    """Deterministic rule table over the ten features (see README)."""

    def score(self, features: SchedulerFeatures, question: Question, schema: str) -> PathScores:
        pot, sql = 0.5, 0.5
        if not features.has_str and (features.has_int or features.has_float):
            sql += 0.2
        if features.has_nan:
            pot += 0.1
        if features.n_numeric_tokens >= 2:
            pot += 0.1
        if features.n_schema_overlap_words >= 2:
            sql += 0.1
        if features.table_size >= 200:
            pot += 0.1
        clamp = lambda x: min(1.0, max(0.0, x))
        return PathScores(prob_pot=clamp(pot), prob_sql=clamp(sql))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class LinearScorer:
    """Independent sigmoids over the feature vector, weights from a file.

    The weights file is plain text, one ``side.feature=value`` pair per line
    (sides ``pot`` and ``sql``; ``bias`` is a valid feature name). Missing
    keys default to zero, so an empty file scores (0.5, 0.5).
    """

    def __init__(self, weights: Mapping[str, float]):
        self.weights = dict(weights)
        unknown = {
            key for key in self.weights
            if key.split(".", 1)[0] not in ("pot", "sql")
            or key.split(".", 1)[-1] not in FEATURE_NAMES + ("bias",)
        }
        if unknown:
            raise ValueError(f"unknown weight keys: {sorted(unknown)}")

    @classmethod
    def from_file(cls, path: str) -> "LinearScorer":
        weights: dict[str, float] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                body = line.strip()
                if not body or body.startswith("#"):
                    continue
                if "=" not in body:
                    raise ValueError(f"{path}:{line_no}: expected key=value")
                key, value = body.split("=", 1)
                weights[key.strip()] = float(value.strip())
        return cls(weights)

    def _side(self, side: str, vector: list[float]) -> float:
        total = self.weights.get(f"{side}.bias", 0.0)
        for name, value in zip(FEATURE_NAMES, vector):
            total += self.weights.get(f"{side}.{name}", 0.0) * value
        return _sigmoid(total)

    def score(self, features: SchedulerFeatures, question: Question, schema: str) -> PathScores:
        vector = features.as_vector()
        return PathScores(
            prob_pot=self._side("pot", vector), prob_sql=self._side("sql", vector)
        )


class RemoteScorer:
    """POSTs features and texts to a scoring endpoint returning two floats."""

    def __init__(self, url: str, client: Optional[httpx.Client] = None, timeout: float = 30.0):
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def score(self, features: SchedulerFeatures, question: Question, schema: str) -> PathScores:
        payload = {
            "features": {name: getattr(features, name) for name in FEATURE_NAMES},
            "question": question.text,
            "schema": schema,
        }
        try:
            response = self._client.post(self.url, json=payload)
        except httpx.HTTPError as exc:
            raise ScorerUnavailable(f"scheduler endpoint: {exc}") from exc
        if response.status_code != 200:
            raise ScorerUnavailable(f"scheduler endpoint returned {response.status_code}")
        try:
            data = response.json()
            return PathScores(prob_pot=float(data["prob_pot"]), prob_sql=float(data["prob_sql"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerUnavailable(f"malformed scheduler response: {exc}") from exc


def score_paths(
    features: SchedulerFeatures,
    question: Question,
    schema: str,
    scorer: ScorerBackend,
) -> PathScores:
    """Score with the configured backend, falling back to the heuristic."""
    try:
        return scorer.score(features, question, schema)
    except ScorerUnavailable as exc:
        logger.warning("scorer unavailable (%s); using heuristic", exc)
        return HeuristicScorer().score(features, question, schema)


def _flatten_text(text: str) -> str:
    return " ".join(text.split())


def emit_training_rows(
    rows: Iterable[tuple[Table, Question, bool, bool]],
    out_path: str,
) -> int:
    """Write one TSV row per (table, question) pair with EM-derived labels."""
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        header = list(FEATURE_NAMES) + ["question", "schema", "label_pot", "label_sql"]
        fh.write("\t".join(header) + "\n")
        for table, question, pot_correct, sql_correct in rows:
            features = extract_features(table, question)
            cells = [format(value, "g") for value in features.as_vector()]
            cells.append(_flatten_text(question.text))
            cells.append(_flatten_text(schema_text(table)))
            cells.append(str(int(pot_correct)))
            cells.append(str(int(sql_correct)))
            fh.write("\t".join(cells) + "\n")
            count += 1
    return count


def label_from_em(candidate_answer: Optional[str], gold: str) -> bool:
    """Binary training label: exact match of a path's answer against gold."""
    if candidate_answer is None:
        return False
    return bool(exact_match(candidate_answer, gold))

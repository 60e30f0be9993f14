"""Answer-evaluation metrics: exact match, fuzzy ratio and token-level F1.

Normalization is deliberately minimal (lowercase + outer trim); tokens keep
their punctuation, so ``","`` counts as a token of its own.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from difflib import SequenceMatcher

from .values import parse_number


@dataclass(frozen=True)
class MetricTriple:
    em: int
    fuzzy: float
    f1: float

    def as_tuple(self) -> tuple[int, float, float]:
        return (self.em, self.fuzzy, self.f1)


def normalize_answer(text: str) -> str:
    """Lowercase and strip outer whitespace; inner whitespace is preserved."""
    return text.strip().lower()


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def fuzzy_ratio(pred: str, gold: str) -> float:
    """Sequence-matcher similarity with rounded-percentage semantics.

    The ratio 2M/(|s1|+|s2|) over normalized strings is scaled to a
    percentage, rounded to an integer, then divided by 100 — so the result
    is always a two-decimal value such as 0.83.
    """
    a, b = normalize_answer(pred), normalize_answer(gold)
    matcher = SequenceMatcher(None, a, b, autojunk=False)
    return round(matcher.ratio() * 100) / 100


def _tokens(text: str) -> list[str]:
    return normalize_answer(text).split()


def token_f1(pred: str, gold: str) -> float:
    """Token-level F1 over whitespace tokens of the normalized strings.

    Overlap is the multiset intersection count; both-empty scores 1.0 and
    one-sided-empty scores 0.0.
    """
    pred_tokens = _tokens(pred)
    gold_tokens = _tokens(gold)
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return (2 * precision * recall) / (precision + recall)


def score_answer(pred: str, gold: str) -> MetricTriple:
    return MetricTriple(
        em=exact_match(pred, gold),
        fuzzy=fuzzy_ratio(pred, gold),
        f1=token_f1(pred, gold),
    )


def answers_match(a: str, b: str) -> bool:
    """Equality with numeric coercion: "84" and "84.0" agree.

    Used when two reasoning paths are compared against each other; the
    evaluation metrics above stay strictly textual.
    """
    if exact_match(a, b):
        return True
    left = parse_number(normalize_answer(a))
    right = parse_number(normalize_answer(b))
    if left is None or right is None:
        return False
    return math.isclose(float(left), float(right), rel_tol=1e-9, abs_tol=1e-9)

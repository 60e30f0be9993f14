"""Independent reference implementations used to cross-check the package.

These deliberately avoid the library code paths (and difflib) so they can
serve as oracles: brute-force longest-matching-block recursion for the
sequence ratio, list-removal multiset intersection for token F1, recursive
memoized edit distance, and explicit pre-order / depth-first definitions of
the AST and opcode similarity sequences.
"""

from __future__ import annotations

import ast
import dis
from functools import lru_cache
from typing import Optional, Sequence


def longest_match(a: Sequence, b: Sequence, alo: int, ahi: int, blo: int, bhi: int):
    """Earliest-in-a, then earliest-in-b maximal matching block."""
    besti, bestj, bestsize = alo, blo, 0
    for i in range(alo, ahi):
        if ahi - i <= bestsize:
            break
        for j in range(blo, bhi):
            if bhi - j <= bestsize:
                break
            k = 0
            while i + k < ahi and j + k < bhi and a[i + k] == b[j + k]:
                k += 1
            if k > bestsize:
                besti, bestj, bestsize = i, j, k
    return besti, bestj, bestsize


def _matching_total(a: Sequence, b: Sequence, alo: int, ahi: int, blo: int, bhi: int) -> int:
    i, j, k = longest_match(a, b, alo, ahi, blo, bhi)
    if k == 0:
        return 0
    return (
        k
        + _matching_total(a, b, alo, i, blo, j)
        + _matching_total(a, b, i + k, ahi, j + k, bhi)
    )


def ro_ratio(a: Sequence, b: Sequence) -> float:
    """Ratcliff-Obershelp similarity 2M/(|a|+|b|); 1.0 for two empties."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * _matching_total(a, b, 0, len(a), 0, len(b)) / total


def brute_force_token_f1(pred: str, gold: str) -> float:
    """SQuAD-style F1 with multiset overlap counted by explicit removal."""
    pred_tokens = pred.strip().lower().split()
    gold_tokens = gold.strip().lower().split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    remaining = list(gold_tokens)
    same = 0
    for token in pred_tokens:
        if token in remaining:
            remaining.remove(token)
            same += 1
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def levenshtein_distance(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def dist(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            dist(i - 1, j) + 1,
            dist(i, j - 1) + 1,
            dist(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )

    return dist(len(a), len(b))


def levenshtein_ratio_oracle(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 1.0 - levenshtein_distance(a, b) / max(len(a), len(b))


def ast_node_types(code: str) -> Optional[list[str]]:
    """Pre-order node-type names; identifiers and constants are not emitted."""
    try:
        tree = ast.parse(code)
    except (SyntaxError, ValueError):
        return None
    sequence: list[str] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        sequence.append(type(node).__name__)
        stack.extend(reversed(list(ast.iter_child_nodes(node))))
    return sequence


def opcode_names(code: str) -> Optional[list[str]]:
    """Opcode names of the module code object, then nested code objects
    depth-first in co_consts order."""
    try:
        compiled = compile(code, "<oracle>", "exec")
    except (SyntaxError, ValueError):
        return None
    names: list[str] = []

    def visit(obj) -> None:
        names.extend(instr.opname for instr in dis.get_instructions(obj))
        for const in obj.co_consts:
            if hasattr(const, "co_code"):
                visit(const)

    visit(compiled)
    return names


def ast_similarity_oracle(code_a: str, code_b: str) -> Optional[float]:
    seq_a, seq_b = ast_node_types(code_a), ast_node_types(code_b)
    if seq_a is None or seq_b is None:
        return None
    return ro_ratio(seq_a, seq_b)


def opcode_similarity_oracle(code_a: str, code_b: str) -> Optional[float]:
    seq_a, seq_b = opcode_names(code_a), opcode_names(code_b)
    if seq_a is None or seq_b is None:
        return None
    return ro_ratio(seq_a, seq_b)

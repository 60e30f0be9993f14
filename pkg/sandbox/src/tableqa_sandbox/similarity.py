"""Structural code-similarity components.

AST similarity compares the pre-order node-type sequences of the parsed
syntax trees; identifiers and constants are erased by construction because
only node type names are emitted. Opcode similarity compares opcode-name
sequences: the module code object's instructions first, then nested code
objects depth-first in co_consts order. Both reduce to the sequence-match
ratio 2M/(|a|+|b|). Unparseable code yields None for that component.
"""

from __future__ import annotations

import ast
import dis
from difflib import SequenceMatcher
from typing import Optional


def node_type_sequence(code: str) -> Optional[list[str]]:
    try:
        tree = ast.parse(code)
    except (SyntaxError, ValueError):
        return None
    sequence: list[str] = []

    def visit(node: ast.AST) -> None:
        sequence.append(type(node).__name__)
        for child in ast.iter_child_nodes(node):
            visit(child)

    visit(tree)
    return sequence


def opcode_name_sequence(code: str) -> Optional[list[str]]:
    try:
        compiled = compile(code, "<similarity>", "exec")
    except (SyntaxError, ValueError):
        return None
    names: list[str] = []

    def visit(obj) -> None:
        names.extend(instruction.opname for instruction in dis.get_instructions(obj))
        for const in obj.co_consts:
            if hasattr(const, "co_code"):
                visit(const)

    visit(compiled)
    return names


def _ratio(a: list[str], b: list[str]) -> float:
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def code_similarity(code_a: str, code_b: str) -> tuple[Optional[float], Optional[float]]:
    """Return (ast, opcode) similarities, None for unavailable components."""
    ast_a, ast_b = node_type_sequence(code_a), node_type_sequence(code_b)
    ast_sim = _ratio(ast_a, ast_b) if ast_a is not None and ast_b is not None else None
    op_a, op_b = opcode_name_sequence(code_a), opcode_name_sequence(code_b)
    op_sim = _ratio(op_a, op_b) if op_a is not None and op_b is not None else None
    return ast_sim, op_sim

from __future__ import annotations

import ast
import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import ast_similarity_oracle, opcode_similarity_oracle

from tableqa_agents.core import Question, Table
from tableqa_agents.gateway import GatewayConfig, LlmGateway


@pytest.fixture
def cookies_table() -> Table:
    return Table(
        columns=("Day", "Boxes of cookies"),
        rows=(
            ("Tuesday", 25),
            ("Wednesday", 27),
            ("Thursday", 23),
            ("Friday", 26),
            ("Saturday", 23),
        ),
        name="cookies",
    )


@pytest.fixture
def cookies_question() -> Question:
    return Question(
        text=(
            "A Girl Scout troop recorded how many boxes of cookies they sold "
            "each day for a week. According to the table, what was the rate "
            "of change between Wednesday and Thursday?"
        ),
        id="cookies-0",
    )


@pytest.fixture
def coins_table() -> Table:
    return Table(
        columns=("Name", "Number of coins"),
        rows=(
            ("Braden", 76),
            ("Camilla", 94),
            ("Rick", 86),
            ("Mary", 84),
            ("Hector", 80),
            ("Devin", 83),
            ("Emily", 82),
            ("Avery", 87),
        ),
        name="coin_collection",
    )


@pytest.fixture
def coins_question() -> Question:
    return Question(
        text=(
            "Some friends discussed the sizes of their coin collections. "
            "What is the mean of the numbers?"
        ),
        id="coins-0",
    )


@pytest.fixture
def toys_table() -> Table:
    return Table(
        columns=("Toy", "Price"),
        rows=(
            ("toy boat", 5.54),
            ("toy guitar", 8.23),
            ("set of juggling balls", 5.01),
            ("trivia game", 8.18),
            ("jigsaw puzzle", 5.30),
            ("toy dinosaur", 3.00),
        ),
        name="toys",
    )


def render_fake_value(value) -> str:
    """Same rendering rule the sandbox pins: minimal ints, lists joined."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and value == int(value):
        return str(int(value))
    if isinstance(value, (list, tuple)):
        return ", ".join(render_fake_value(v) for v in value)
    return str(value)


_ANS_LINE = re.compile(r"^\s*ans\s*=\s*(.+?)\s*$", re.MULTILINE)


class FakeSandbox:
    """Stub sandbox: literal `ans = <value>` assignments execute, anything
    else errors. Similarity is computed locally with the oracle definitions.
    """

    def __init__(self):
        self.exec_overrides: dict[str, dict] = {}
        self.exec_calls = 0
        self.similarity_calls = 0

    def exec(self, columns, rows, code):
        self.exec_calls += 1
        if code in self.exec_overrides:
            return self.exec_overrides[code]
        matches = _ANS_LINE.findall(code)
        if not matches:
            return {"kind": "error", "type": "MissingAns", "message": "code did not define 'ans'"}
        try:
            value = ast.literal_eval(matches[-1])
        except (ValueError, SyntaxError):
            return {
                "kind": "error",
                "type": "FakeExecError",
                "message": f"cannot evaluate: {matches[-1]!r}",
            }
        return {"kind": "value", "value": render_fake_value(value)}

    def similarity(self, code_a, code_b):
        self.similarity_calls += 1
        return (
            ast_similarity_oracle(code_a, code_b),
            opcode_similarity_oracle(code_a, code_b),
        )


@pytest.fixture
def fake_sandbox() -> FakeSandbox:
    return FakeSandbox()


def make_gateway(provider) -> LlmGateway:
    return LlmGateway(provider, GatewayConfig())


def pot_reply(code: str) -> str:
    # Newlines before the closing fence mirror the reply shape models emit
    # and keep a trailing quote in the code from fusing with the fence.
    return "{'code' : '''\n" + code + "\n'''}"


def sql_reply(query: str) -> str:
    return "{'code' : '''\n" + query + "\n'''}"


def cot_reply(solution: str, answer: str) -> str:
    return "{'solution': %r, 'answer': %r}" % (solution, answer)

from __future__ import annotations

import json
import re

import httpx
import pytest

from oracles import brute_force_token_f1
from tableqa_agents.confidence import (
    AgreementScorer,
    ConfidenceVector,
    PATH_BODY_CHAR_LIMIT,
    RemoteScorer,
    ScorerUnavailable,
    StubScorer,
    emit_cc_training_rows,
    gate,
    score,
    serialize_example,
    soft_label,
)
from tableqa_agents.core import (
    AnswerCandidate,
    CandidateSet,
    ExecutionResult,
    NOTHING,
    Question,
    ReasoningPath,
    ReasoningTrace,
    ResultKind,
    Table,
)
from tableqa_agents.executors import trace_candidate
from tableqa_agents.metrics import exact_match


def _pot_trace(payloads=("4", "4")) -> ReasoningTrace:
    code = (
        "# Calculate the rate of change between Wednesday and Thursday\n"
        "rate_of_change = df.loc[1, 'Boxes of cookies'] - df.loc[2, 'Boxes of cookies']\n"
        "ans = rate_of_change"
    )
    iterations = tuple(
        (code, ExecutionResult(ResultKind.VALUE, payload)) for payload in payloads
    )
    return ReasoningTrace(path=ReasoningPath.POT, iterations=iterations)


def _sql_trace() -> ReasoningTrace:
    query = (
        "SELECT (b.Boxes_of_cookies - a.Boxes_of_cookies) AS answer\n"
        "FROM dataframe a\n"
        "JOIN dataframe b ON a.Day = 'Wednesday' AND b.Day = 'Thursday';"
    )
    return ReasoningTrace(
        path=ReasoningPath.TEXT2SQL,
        iterations=((query, ExecutionResult(ResultKind.VALUE, "[[-4]]")),),
    )


def _cot_trace() -> ReasoningTrace:
    return ReasoningTrace(
        path=ReasoningPath.COT,
        iterations=(),
        solution_text=(
            "To find the rate of change, subtract Thursday's boxes from Wednesday's: "
            "23 - 27 = -4."
        ),
    )


def _full_traces():
    return {
        ReasoningPath.COT: _cot_trace(),
        ReasoningPath.POT: _pot_trace(),
        ReasoningPath.TEXT2SQL: _sql_trace(),
    }


def _candidates(cot="-4", pot="4", sql="-4"):
    def make(path, value):
        if value is None:
            return AnswerCandidate.nothing(path)
        return AnswerCandidate(path, value, value)

    return CandidateSet(
        cot=make(ReasoningPath.COT, cot),
        pot=make(ReasoningPath.POT, pot),
        sql=make(ReasoningPath.TEXT2SQL, sql),
    )


class TestSerializeExample:
    def test_cookies_structure_matches_figure_tags(self, cookies_table, cookies_question):
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(), _candidates()
        )
        text = example.text
        assert text.startswith(
            "<Table_row_size>5</Table_row_size>\n"
            "<Table_column_size>2</Table_column_size>\n"
            "<Table_size>10</Table_size>\n"
            "<Table>\n"
        )
        for tag in (
            "</Table>", "<Question>", "</Question>",
            "<PoT>", "</PoT>", "<text2sql>", "</text2sql>", "<CoT>", "</CoT>",
            "<N=0_code>", "</N=0_code>", "<N=0_execution_result>",
            "<N=1_code>", "<solution>", "</solution>", "<answer>", "</answer>",
        ):
            assert tag in text, tag
        # Blocks appear in the figure's order.
        assert text.index("<PoT>") < text.index("<text2sql>") < text.index("<CoT>")
        assert "<N=0_execution_result>[[-4]]</N=0_execution_result>" in text
        assert "<answer>-4</answer>" in text
        assert example.nothing_paths == frozenset()

    def test_skipped_path_nothing_pattern(self, cookies_table, cookies_question):
        traces = _full_traces()
        traces[ReasoningPath.POT] = None
        example = serialize_example(
            cookies_table, cookies_question, traces, _candidates(pot=None)
        )
        assert (
            "<PoT>\n"
            f"<N=0_code>{NOTHING}</N=0_code>\n"
            f"<N=0_execution_result>{NOTHING}</N=0_execution_result>\n"
            "</PoT>"
        ) in example.text
        assert ReasoningPath.POT in example.nothing_paths
        assert NOTHING in example.tokens_used

    def test_oversized_body_voided(self, cookies_table, cookies_question):
        ramble = "x" * (PATH_BODY_CHAR_LIMIT + 500)
        traces = _full_traces()
        traces[ReasoningPath.COT] = ReasoningTrace(
            path=ReasoningPath.COT, iterations=(), solution_text=ramble
        )
        example = serialize_example(
            cookies_table, cookies_question, traces, _candidates()
        )
        assert ReasoningPath.COT in example.nothing_paths
        assert f"<solution>{NOTHING}</solution>" in example.text
        assert ramble not in example.text
        # Voiding propagates to the candidate.
        assert example.candidates.cot.is_nothing

    def test_round_trip_of_candidate_answers(self, cookies_table, cookies_question):
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(), _candidates()
        )
        results = re.findall(
            r"<N=\d+_execution_result>(.*?)</N=\d+_execution_result>",
            example.text,
            re.DOTALL,
        )
        pot_last = results[1]  # two PoT iterations then one SQL iteration
        sql_last = results[2]
        cot_answer = re.search(r"<answer>(.*?)</answer>", example.text, re.DOTALL).group(1)
        assert pot_last == _candidates().pot.raw
        assert trace_candidate(_sql_trace()).raw == "-4"
        assert sql_last == "[[-4]]"
        assert cot_answer == _candidates().cot.raw

    def test_iteration_tags_capped_at_three(self, cookies_table, cookies_question):
        trace = _pot_trace(payloads=("1", "2", "3", "4"))
        traces = _full_traces()
        traces[ReasoningPath.POT] = trace
        example = serialize_example(cookies_table, cookies_question, traces, _candidates())
        assert "<N=3_code>" in example.text
        assert "<N=4_code>" not in example.text


class TestScore:
    def test_stub_returned_verbatim(self, cookies_table, cookies_question):
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(), _candidates()
        )
        vector = score(example, StubScorer(cot=0.8, pot=0.3, sql=0.1))
        assert vector == ConfidenceVector(cot=0.8, pot=0.3, sql=0.1)

    def test_nothing_path_forced_to_zero(self, cookies_table, cookies_question):
        traces = _full_traces()
        traces[ReasoningPath.POT] = None
        example = serialize_example(
            cookies_table, cookies_question, traces, _candidates(pot=None)
        )
        vector = score(example, StubScorer(cot=0.8, pot=0.9, sql=0.1))
        assert vector.pot == 0.0
        assert vector.cot == 0.8

    def test_agreement_unanimous_equal_scores(self, cookies_table, cookies_question):
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(), _candidates(pot="-4")
        )
        vector = score(example, AgreementScorer())
        assert vector.cot == vector.pot == vector.sql == 1.0

    def test_agreement_formula_published_values(self, cookies_table, cookies_question):
        # PoT says 4; CoT and SQL say -4.
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(), _candidates()
        )
        vector = score(example, AgreementScorer())
        assert vector.pot == 0.0
        assert vector.sql == pytest.approx(0.5)
        # CoT agreement 0.5, minus 0.05 * disagreement 0.5.
        assert vector.cot == pytest.approx(0.475)

    def test_agreement_numeric_coercion(self, cookies_table, cookies_question):
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(),
            _candidates(cot="-4.0", pot="-4", sql="-4"),
        )
        vector = score(example, AgreementScorer())
        assert vector.cot == 1.0

    def test_remote_scorer_and_fallback(self, cookies_table, cookies_question):
        example = serialize_example(
            cookies_table, cookies_question, _full_traces(), _candidates()
        )

        def ok(request: httpx.Request) -> httpx.Response:
            assert json.loads(request.content)["text"] == example.text
            return httpx.Response(200, json={"cot": 0.1, "pot": 0.2, "sql": 0.3})

        scorer = RemoteScorer("http://cc.test", client=httpx.Client(transport=httpx.MockTransport(ok)))
        assert score(example, scorer) == ConfidenceVector(cot=0.1, pot=0.2, sql=0.3)

        def dead(request: httpx.Request) -> httpx.Response:
            return httpx.Response(503)

        dead_scorer = RemoteScorer(
            "http://cc.test", client=httpx.Client(transport=httpx.MockTransport(dead))
        )
        with pytest.raises(ScorerUnavailable):
            dead_scorer.score(example)
        fallback = score(example, dead_scorer)
        assert fallback == score(example, AgreementScorer())


class TestGate:
    def test_selects_strict_max(self):
        assert gate(ConfidenceVector(cot=0.8, pot=0.3, sql=0.1), 0.1) is ReasoningPath.COT

    def test_below_theta_needs_judge(self):
        assert gate(ConfidenceVector(cot=0.05, pot=0.04, sql=0.02), 0.1) is None

    def test_theta_is_strict(self):
        assert gate(ConfidenceVector(cot=0.1, pot=0.1, sql=0.1), 0.1) is None

    def test_tie_break_order(self):
        assert gate(ConfidenceVector(cot=0.4, pot=0.4, sql=0.1), 0.1) is ReasoningPath.POT
        assert gate(ConfidenceVector(cot=0.4, pot=0.1, sql=0.4), 0.1) is ReasoningPath.TEXT2SQL
        assert gate(ConfidenceVector(cot=0.4, pot=0.4, sql=0.4), 0.1) is ReasoningPath.POT

    def test_selection_invariant_under_constant_shift(self):
        base = ConfidenceVector(cot=0.2, pot=0.5, sql=0.3)
        for shift in (0.0, 0.1, 0.4):
            shifted = ConfidenceVector(
                cot=base.cot + shift, pot=base.pot + shift, sql=base.sql + shift
            )
            assert gate(shifted, 0.1) is gate(base, 0.1)


class TestSoftLabel:
    def test_exact_match_is_one(self):
        assert soft_label("-4", "-4") == 1.0

    def test_f1_when_not_exact(self):
        assert soft_label("John , Andy", "John and Andy") == pytest.approx(2 / 3)

    def test_disjoint_is_zero(self):
        assert soft_label("x", "y") == 0.0

    def test_law_on_random_pairs(self):
        import random

        rng = random.Random(303)
        alphabet = "ab cd,."
        for _ in range(200):
            pred = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 15)))
            gold = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 15)))
            label = soft_label(pred, gold)
            if exact_match(pred, gold):
                assert label == 1.0
            else:
                assert label == pytest.approx(
                    brute_force_token_f1(pred.strip().lower(), gold.strip().lower())
                )


class TestEmitCcRows:
    def test_two_question_fixture(self, tmp_path, cookies_table, cookies_question):
        rows = [
            (cookies_table, cookies_question, _full_traces(), _candidates(), "-4"),
            (
                cookies_table,
                Question(text="another?", id="q2"),
                _full_traces(),
                _candidates(pot=None),
                "-4",
            ),
        ]
        out = tmp_path / "cc.tsv"
        meta = tmp_path / "cc.meta.json"
        assert emit_cc_training_rows(rows, str(out), str(meta)) == 2
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "text\tlabel_pot\tlabel_sql\tlabel_cot"
        first = lines[1].split("\t")
        assert len(first) == 4
        # PoT answered 4 against gold -4: EM fails, token F1 is 0.
        assert float(first[1]) == 0.0
        assert float(first[2]) == 1.0  # SQL exact match
        assert float(first[3]) == 1.0  # CoT exact match
        # Skipped path labels 0.0.
        second = lines[2].split("\t")
        assert float(second[1]) == 0.0
        # Serialized text is newline-escaped into a single column.
        assert "\n" not in first[0]
        assert "\\n" in first[0]
        metadata = json.loads(meta.read_text(encoding="utf-8"))
        assert metadata == {"rows": 2, "truncated": []}

    def test_oversized_table_truncated_with_metadata(self, tmp_path, cookies_question):
        big = Table(
            columns=("a", "b"),
            rows=tuple((str(i), str(i * 2)) for i in range(100)),
        )
        rows = [(big, cookies_question, _full_traces(), _candidates(), "-4")]
        out = tmp_path / "cc.tsv"
        meta = tmp_path / "cc.meta.json"
        emit_cc_training_rows(rows, str(out), str(meta), max_table_rows=64)
        metadata = json.loads(meta.read_text(encoding="utf-8"))
        assert metadata["truncated"] == [{"row": 0, "rows_total": 100, "rows_kept": 64}]
        text = out.read_text(encoding="utf-8").splitlines()[1].split("\t")[0]
        assert "<Table_row_size>64</Table_row_size>" in text

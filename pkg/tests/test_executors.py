from __future__ import annotations

from conftest import make_gateway, pot_reply, sql_reply
from tableqa_agents.core import (
    ExecutionResult,
    ReasoningPath,
    ReasoningTrace,
    ResultKind,
    Table,
)
from tableqa_agents.executors import (
    LoopConfig,
    SqlEnvironment,
    code_and_debug,
    execute_pot,
    execute_sql,
    render_result_set,
    trace_candidate,
    unwrap_sql_payload,
)
from tableqa_agents.gateway import AgentRole, ScriptedProvider

COOKIES_JOIN_QUERY = (
    "SELECT (b.Boxes_of_cookies - a.Boxes_of_cookies) AS answer\n"
    "FROM dataframe a\n"
    "JOIN dataframe b ON a.Day = 'Wednesday' AND b.Day = 'Thursday';"
)


class TestSqlEnvironment:
    def test_cookies_rate_of_change_join(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            result = execute_sql(env, COOKIES_JOIN_QUERY)
        assert result.kind is ResultKind.VALUE
        assert result.payload == "[[-4]]"

    def test_select_scalar_wraps(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            assert execute_sql(env, "SELECT 1").payload == "[[1]]"

    def test_drop_rejected(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            result = execute_sql(env, "DROP TABLE dataframe")
            assert result.kind is ResultKind.ERROR
            assert result.payload.startswith("Rejected")
            # The relation is still intact afterwards.
            assert execute_sql(env, "SELECT COUNT(*) FROM dataframe").payload == "[[5]]"

    def test_multiple_statements_rejected(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            result = execute_sql(env, "SELECT 1; SELECT 2;")
        assert result.kind is ResultKind.ERROR
        assert result.payload.startswith("Rejected")

    def test_unknown_table_rewritten_to_dataframe(self, coins_table):
        with SqlEnvironment(coins_table) as env:
            result = execute_sql(
                env, "SELECT AVG(Number_of_coins) AS answer FROM coin_collection;"
            )
        assert result.kind is ResultKind.VALUE
        assert result.payload == "[[84]]"

    def test_currency_cells_typed_as_integers(self):
        table = Table(
            columns=("Price", "Quantity demanded"),
            rows=(("$155", "22,600"), ("$275", "20,500")),
        )
        with SqlEnvironment(table) as env:
            assert env.column_types == ["integer", "integer"]
            result = execute_sql(env, "SELECT SUM(Price) FROM dataframe")
        assert result.payload == "[[430]]"

    def test_side_effect_free_sequences(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            before = execute_sql(env, "SELECT * FROM dataframe").payload
            execute_sql(env, "SELECT COUNT(*) FROM dataframe")
            execute_sql(env, "DELETE FROM dataframe")
            after = execute_sql(env, "SELECT * FROM dataframe").payload
        assert before == after

    def test_syntax_error_reported(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            result = execute_sql(env, "SELECT FROM WHERE")
        assert result.kind is ResultKind.ERROR
        assert "syntax" in result.payload.lower()

    def test_timeout(self, cookies_table):
        # Cartesian self-joins explode fast enough to hit a tiny deadline.
        query = (
            "SELECT COUNT(*) FROM dataframe a, dataframe b, dataframe c, dataframe d, "
            "dataframe e, dataframe f, dataframe g, dataframe h, dataframe i, dataframe j"
        )
        with SqlEnvironment(cookies_table) as env:
            result = execute_sql(env, query, timeout_s=0.05)
        assert result.kind is ResultKind.TIMEOUT

    def test_null_rendering(self):
        table = Table(columns=("a",), rows=((None,),))
        with SqlEnvironment(table) as env:
            assert execute_sql(env, "SELECT a FROM dataframe").payload == "[[None]]"

    def test_empty_result_set(self, cookies_table):
        with SqlEnvironment(cookies_table) as env:
            result = execute_sql(env, "SELECT Day FROM dataframe WHERE Day = 'Sunday'")
        assert result.payload == "[]"


def test_render_result_set():
    assert render_result_set([(-4,)]) == "[[-4]]"
    assert render_result_set([(84.0,)]) == "[[84]]"
    assert render_result_set([("a",), ("b",)]) == "[[a], [b]]"
    assert render_result_set([]) == "[]"


class TestExecutePot:
    def test_coins_mean(self, coins_table, fake_sandbox):
        result = execute_pot(fake_sandbox, coins_table, "ans = 84.0")
        assert result == ExecutionResult(ResultKind.VALUE, "84")

    def test_error_surfaces_type(self, coins_table, fake_sandbox):
        fake_sandbox.exec_overrides["x = 1/0"] = {
            "kind": "error",
            "type": "ZeroDivisionError",
            "message": "division by zero",
        }
        result = execute_pot(fake_sandbox, coins_table, "x = 1/0")
        assert result.kind is ResultKind.ERROR
        assert result.payload.startswith("ZeroDivisionError")

    def test_missing_ans(self, coins_table, fake_sandbox):
        result = execute_pot(fake_sandbox, coins_table, "y = 5")
        assert result.kind is ResultKind.ERROR
        assert result.payload.startswith("MissingAns")

    def test_unavailable_sandbox(self, coins_table):
        class Dead:
            def exec(self, *a, **k):
                from tableqa_agents.similarity import SandboxUnavailable

                raise SandboxUnavailable("no process")

        result = execute_pot(Dead(), coins_table, "ans = 1")
        assert result.kind is ResultKind.ERROR
        assert result.payload.startswith("SandboxUnavailable")


class TestCodeAndDebug:
    def test_pot_identical_debug_stops_after_one_round(
        self, coins_table, coins_question, fake_sandbox
    ):
        code = "ans = 84"
        provider = ScriptedProvider()
        provider.script(AgentRole.POTA, pot_reply(code))
        provider.on(AgentRole.PDA, lambda p: pot_reply(code))
        gateway = make_gateway(provider)
        trace = code_and_debug(
            ReasoningPath.POT,
            coins_table,
            coins_question,
            gateway,
            LoopConfig(n=3),
            sandbox=fake_sandbox,
        )
        assert len(trace.iterations) == 2
        assert gateway.ledger.count(coins_question.id, AgentRole.PDA) == 1

    def test_pot_always_debugs_at_least_once(
        self, coins_table, coins_question, fake_sandbox
    ):
        # Even a successful first execution takes one debug round.
        provider = ScriptedProvider()
        provider.script(AgentRole.POTA, pot_reply("ans = 84"))
        provider.on(AgentRole.PDA, lambda p: pot_reply("ans = 84"))
        trace = code_and_debug(
            ReasoningPath.POT,
            coins_table,
            coins_question,
            make_gateway(provider),
            LoopConfig(n=3),
            sandbox=fake_sandbox,
        )
        assert len(trace.iterations) >= 2

    def test_sql_success_at_iteration_zero_stops(self, coins_table, coins_question):
        provider = ScriptedProvider()
        provider.script(
            AgentRole.T2SA, sql_reply("SELECT AVG(Number_of_coins) FROM dataframe")
        )
        gateway = make_gateway(provider)
        trace = code_and_debug(
            ReasoningPath.TEXT2SQL,
            coins_table,
            coins_question,
            gateway,
            LoopConfig(n=3),
        )
        assert len(trace.iterations) == 1
        assert trace.last[1].payload == "[[84]]"
        assert gateway.ledger.count(coins_question.id, AgentRole.SDA) == 0

    def test_sql_exhausts_after_n_plus_one_failures(self, coins_table, coins_question):
        provider = ScriptedProvider()
        provider.script(AgentRole.T2SA, sql_reply("SELECT nope FROM dataframe"))
        counter = {"i": 0}

        def debug_handler(prompt):
            counter["i"] += 1
            return sql_reply(f"SELECT nope{counter['i']} FROM dataframe")

        provider.on(AgentRole.SDA, debug_handler)
        gateway = make_gateway(provider)
        trace = code_and_debug(
            ReasoningPath.TEXT2SQL,
            coins_table,
            coins_question,
            gateway,
            LoopConfig(n=3),
        )
        assert len(trace.iterations) == 4  # 1 + N
        assert trace.last[1].kind is ResultKind.ERROR
        assert gateway.ledger.count(coins_question.id, AgentRole.SDA) == 3

    def test_sql_error_then_success_stops(self, coins_table, coins_question):
        provider = ScriptedProvider()
        provider.script(AgentRole.T2SA, sql_reply("SELECT nope FROM dataframe"))
        provider.script(AgentRole.SDA, sql_reply("SELECT COUNT(*) FROM dataframe"))
        provider.script(AgentRole.SDA, sql_reply("SELECT 'should not run'"))
        trace = code_and_debug(
            ReasoningPath.TEXT2SQL,
            coins_table,
            coins_question,
            make_gateway(provider),
            LoopConfig(n=3),
        )
        assert len(trace.iterations) == 2
        assert trace.last[1].payload == "[[8]]"

    def test_pathological_pot_never_exceeds_bound(
        self, coins_table, coins_question, fake_sandbox
    ):
        provider = ScriptedProvider()
        provider.script(AgentRole.POTA, pot_reply("ans = 'v0'"))
        counter = {"i": 0}

        def debug_handler(prompt):
            counter["i"] += 1
            # Structurally different every round: never similar, never stops.
            body = "\n".join(f"x{j} = {j}" for j in range(counter["i"] * 3))
            return pot_reply(body + f"\nans = 'v{counter['i']}'")

        provider.on(AgentRole.PDA, debug_handler)
        gateway = make_gateway(provider)
        trace = code_and_debug(
            ReasoningPath.POT,
            coins_table,
            coins_question,
            gateway,
            LoopConfig(n=3),
            sandbox=fake_sandbox,
        )
        assert len(trace.iterations) == 4  # 1 + N
        assert (
            gateway.ledger.count(coins_question.id, AgentRole.POTA)
            + gateway.ledger.count(coins_question.id, AgentRole.PDA)
            <= 4
        )

    def test_generation_failure_yields_error_trace(self, coins_table, coins_question, fake_sandbox):
        provider = ScriptedProvider()
        provider.script(AgentRole.POTA, "junk")
        provider.script(AgentRole.POTA, "junk")
        trace = code_and_debug(
            ReasoningPath.POT,
            coins_table,
            coins_question,
            make_gateway(provider),
            LoopConfig(n=3),
            sandbox=fake_sandbox,
        )
        assert len(trace.iterations) == 1
        assert trace.last[1].kind is ResultKind.ERROR
        assert trace_candidate(trace).is_nothing

    def test_debug_failure_keeps_last_iteration(self, coins_table, coins_question):
        provider = ScriptedProvider()
        provider.script(AgentRole.T2SA, sql_reply("SELECT nope FROM dataframe"))
        provider.on(AgentRole.SDA, lambda p: "never json")
        trace = code_and_debug(
            ReasoningPath.TEXT2SQL,
            coins_table,
            coins_question,
            make_gateway(provider),
            LoopConfig(n=3),
        )
        assert len(trace.iterations) == 1
        assert trace.last[1].kind is ResultKind.ERROR


class TestTraceCandidate:
    def _sql_trace(self, payload: str) -> ReasoningTrace:
        return ReasoningTrace(
            path=ReasoningPath.TEXT2SQL,
            iterations=(("SELECT x", ExecutionResult(ResultKind.VALUE, payload)),),
        )

    def test_sql_unwrap_scalar(self):
        candidate = trace_candidate(self._sql_trace("[[-4]]"))
        assert candidate.raw == "-4"
        assert candidate.value == "-4"

    def test_sql_unwrap_multi_cell(self):
        from tableqa_agents.metrics import exact_match

        candidate = trace_candidate(self._sql_trace("[[a], [b]]"))
        assert candidate.raw == "a, b"
        assert exact_match(candidate.raw, "a, b") == 1

    def test_error_trace_is_nothing(self):
        trace = ReasoningTrace(
            path=ReasoningPath.POT,
            iterations=(("x", ExecutionResult(ResultKind.ERROR, "boom")),),
        )
        assert trace_candidate(trace).is_nothing

    def test_nothing_iff_not_value(self):
        for kind in ResultKind:
            trace = ReasoningTrace(
                path=ReasoningPath.POT,
                iterations=(("c", ExecutionResult(kind, "p")),),
            )
            assert trace_candidate(trace).is_nothing is (kind is not ResultKind.VALUE)

    def test_unwrap_rules(self):
        assert unwrap_sql_payload("[[-4]]") == "-4"
        assert unwrap_sql_payload("[]") == ""
        assert unwrap_sql_payload("[[a, b], [c, d]]") == "a, b, c, d"
        assert unwrap_sql_payload("plain") == "plain"

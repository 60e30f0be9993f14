"""Execution of generated SQL and PoT code, plus the bounded debug loops.

SQL runs against an in-memory relation materialized once per question and
locked read-only. PoT code runs in a separate sandbox process reached over
a line-delimited JSON protocol (see docs/sandbox_protocol.md).
"""

from __future__ import annotations

import json
import logging
import queue
import re
import sqlite3
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .agents import AgentFailed, run_debug, run_pot, run_t2sql
from .core import (
    AnswerCandidate,
    ExecutionResult,
    Question,
    ReasoningPath,
    ReasoningTrace,
    ResultKind,
    Table,
    format_number,
    sanitize_headers,
)
from .gateway import AgentRole, LlmGateway
from .metrics import normalize_answer
from .prompts import SQL_RELATION_NAME
from .similarity import SandboxUnavailable, pot_stop, sql_stop
from .values import DECIMAL, INTEGER, infer_column_types, typed_rows

logger = logging.getLogger(__name__)

SANDBOX_PROTOCOL_VERSION = 1

_SQLITE_TYPES = {INTEGER: "INTEGER", DECIMAL: "REAL", "text": "TEXT"}


@dataclass(frozen=True)
class LoopConfig:
    """Bounds and thresholds for the code-generation debug loops."""

    n: int = 3
    pot_threshold: float = 0.9
    require_equal_results: bool = True
    sql_timeout_s: float = 10.0
    pot_timeout_ms: int = 10_000

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")


class SqlEnvironment:
    """Read-only in-memory relation for one question."""

    def __init__(self, table: Table):
        self.table = table
        self.column_names = sanitize_headers(table.columns)
        self.column_types = infer_column_types(table)
        self._conn = sqlite3.connect(":memory:", check_same_thread=False)
        self._lock = threading.Lock()
        columns_sql = ", ".join(
            f'"{name}" {_SQLITE_TYPES[ctype]}'
            for name, ctype in zip(self.column_names, self.column_types)
        )
        self._conn.execute(f'CREATE TABLE "{SQL_RELATION_NAME}" ({columns_sql})')
        placeholders = ", ".join("?" for _ in self.column_names)
        self._conn.executemany(
            f'INSERT INTO "{SQL_RELATION_NAME}" VALUES ({placeholders})',
            typed_rows(table, self.column_types),
        )
        self._conn.commit()
        self._conn.execute("PRAGMA query_only = ON")

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "SqlEnvironment":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _strip_sql_comments(query: str) -> str:
    lines = [line for line in query.splitlines() if not line.strip().startswith("--")]
    return "\n".join(lines).strip()


def render_sql_value(value) -> str:
    if value is None:
        return "None"
    if isinstance(value, (int, float)):
        return format_number(value)
    return str(value)


def render_result_set(rows: Sequence[Sequence]) -> str:
    """Row-major list-of-lists rendering; a lone scalar still reads [[v]]."""
    if not rows:
        return "[]"
    inner = "], [".join(
        ", ".join(render_sql_value(value) for value in row) for row in rows
    )
    return f"[[{inner}]]"


_NO_SUCH_TABLE = re.compile(r"no such table:\s*(\S+)")


def execute_sql(env: SqlEnvironment, query: str, timeout_s: float = 10.0) -> ExecutionResult:
    """Run a single read-only SELECT against the environment."""
    body = _strip_sql_comments(query)
    first = re.match(r"[A-Za-z]+", body)
    keyword = first.group(0).upper() if first else ""
    if keyword not in ("SELECT", "WITH"):
        return ExecutionResult(
            ResultKind.ERROR,
            f"Rejected: only a single read-only SELECT is allowed (got {keyword or 'empty statement'})",
        )

    def run_once(statement: str) -> ExecutionResult:
        deadline = time.monotonic() + timeout_s
        with env._lock:
            env._conn.set_progress_handler(
                lambda: 1 if time.monotonic() > deadline else 0, 10_000
            )
            try:
                cursor = env._conn.execute(statement)
                rows = cursor.fetchall()
            except sqlite3.ProgrammingError as exc:
                return ExecutionResult(ResultKind.ERROR, f"Rejected: {exc}")
            except sqlite3.Warning as exc:
                return ExecutionResult(ResultKind.ERROR, f"Rejected: {exc}")
            except sqlite3.OperationalError as exc:
                if "interrupted" in str(exc):
                    return ExecutionResult(ResultKind.TIMEOUT, "query timed out")
                return ExecutionResult(ResultKind.ERROR, f"OperationalError: {exc}")
            except sqlite3.Error as exc:
                return ExecutionResult(ResultKind.ERROR, f"{type(exc).__name__}: {exc}")
            finally:
                env._conn.set_progress_handler(None, 0)
        return ExecutionResult(ResultKind.VALUE, render_result_set(rows))

    result = run_once(body)
    if result.kind is ResultKind.ERROR:
        # Generated queries often target a few-shot table name; rewrite the
        # missing relation to the canonical one once before reporting.
        match = _NO_SUCH_TABLE.search(result.payload)
        if match and match.group(1) != SQL_RELATION_NAME:
            rewritten = re.sub(
                rf"\b{re.escape(match.group(1))}\b", SQL_RELATION_NAME, body
            )
            result = run_once(rewritten)
    return result


class SandboxClient:
    """Serialized line-JSON client for one sandbox-runner child process."""

    def __init__(
        self,
        command: Sequence[str],
        timeout_ms: int = 10_000,
        startup_timeout_s: float = 20.0,
    ):
        self.command = list(command)
        self.timeout_ms = timeout_ms
        self.startup_timeout_s = startup_timeout_s
        self._lock = threading.Lock()
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._lines = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            self._proc = None
            raise SandboxUnavailable(f"cannot launch sandbox: {exc}") from exc
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()
        hello = self._read_response(self.startup_timeout_s)
        if hello.get("kind") != "hello" or hello.get("protocol") != SANDBOX_PROTOCOL_VERSION:
            self._kill()
            raise SandboxUnavailable(f"bad sandbox handshake: {hello}")

    def _read_response(self, timeout_s: float) -> dict:
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            self._kill()
            raise SandboxUnavailable("sandbox did not respond in time")
        if line is None:
            self._kill()
            raise SandboxUnavailable("sandbox process exited")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            self._kill()
            raise SandboxUnavailable(f"undecodable sandbox reply: {exc}")

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def _request(self, payload: dict, timeout_s: float) -> dict:
        with self._lock:
            self._ensure_started()
            try:
                assert self._proc is not None and self._proc.stdin is not None
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._kill()
                raise SandboxUnavailable(f"sandbox pipe broken: {exc}") from exc
            return self._read_response(timeout_s)

    def exec(self, columns: Sequence[str], rows: Sequence[Sequence], code: str) -> dict:
        payload = {
            "kind": "exec",
            "columns": list(columns),
            "rows": [list(row) for row in rows],
            "code": code,
            "timeout_ms": self.timeout_ms,
        }
        return self._request(payload, self.timeout_ms / 1000 + 10.0)

    def similarity(self, code_a: str, code_b: str) -> tuple[Optional[float], Optional[float]]:
        payload = {"kind": "similarity", "code_a": code_a, "code_b": code_b}
        response = self._request(payload, 30.0)
        if response.get("kind") != "sim":
            raise SandboxUnavailable(f"unexpected similarity reply: {response}")
        return response.get("ast"), response.get("opcode")

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            self._kill()


def execute_pot(sandbox, table: Table, code: str) -> ExecutionResult:
    """Run a PoT code body against the table's dataframe in the sandbox."""
    if sandbox is None:
        return ExecutionResult(
            ResultKind.ERROR, "SandboxUnavailable: no sandbox configured"
        )
    types = infer_column_types(table)
    try:
        response = sandbox.exec(list(table.columns), typed_rows(table, types), code)
    except SandboxUnavailable as exc:
        return ExecutionResult(ResultKind.ERROR, f"SandboxUnavailable: {exc}")
    kind = response.get("kind")
    if kind == "value":
        return ExecutionResult(ResultKind.VALUE, str(response.get("value", "")))
    if kind == "timeout":
        return ExecutionResult(ResultKind.TIMEOUT, "execution timed out")
    if kind == "error":
        error_type = response.get("type", "Error")
        message = response.get("message", "")
        return ExecutionResult(ResultKind.ERROR, f"{error_type}: {message}".rstrip(": "))
    return ExecutionResult(ResultKind.ERROR, f"protocol_error: {response}")


def code_and_debug(
    path: ReasoningPath,
    table: Table,
    question: Question,
    gateway: LlmGateway,
    config: LoopConfig,
    sql_env: Optional[SqlEnvironment] = None,
    sandbox=None,
) -> ReasoningTrace:
    """Initial generation plus up to N debug rounds with early stopping.

    PoT always takes at least one debug round before the stop check; SQL
    stops immediately when the first query succeeds. Executor failures land
    in iteration results, never as exceptions.
    """
    if path is ReasoningPath.POT:
        generate = lambda: run_pot(gateway, table, question)
        debug_role = AgentRole.PDA
        execute = lambda code: execute_pot(sandbox, table, code)
    elif path is ReasoningPath.TEXT2SQL:
        if sql_env is None:
            sql_env = SqlEnvironment(table)
        env = sql_env
        generate = lambda: run_t2sql(gateway, table, question)
        debug_role = AgentRole.SDA
        execute = lambda code: execute_sql(env, code, config.sql_timeout_s)
    else:
        raise ValueError("code_and_debug only runs PoT and text2SQL paths")

    try:
        code = generate()
    except AgentFailed as exc:
        return ReasoningTrace(
            path=path,
            iterations=(("", ExecutionResult(ResultKind.ERROR, f"AgentFailed: {exc}")),),
        )
    result = execute(code)
    iterations: list[tuple[str, ExecutionResult]] = [(code, result)]

    if path is ReasoningPath.TEXT2SQL and result.kind is ResultKind.VALUE:
        return ReasoningTrace(path=path, iterations=tuple(iterations))

    for _ in range(config.n):
        try:
            new_code = run_debug(gateway, debug_role, table, question, code, result)
        except AgentFailed as exc:
            logger.debug("%s debug failed (%s); keeping last iteration", path.value, exc)
            break
        new_result = execute(new_code)
        iterations.append((new_code, new_result))
        previous = (code, result)
        current = (new_code, new_result)
        code, result = new_code, new_result
        if path is ReasoningPath.POT:
            stop = pot_stop(
                previous,
                current,
                sandbox,
                threshold=config.pot_threshold,
                require_equal_results=config.require_equal_results,
            )
        else:
            stop = sql_stop(previous, current)
        if stop:
            break
    return ReasoningTrace(path=path, iterations=tuple(iterations))


def unwrap_sql_payload(payload: str) -> str:
    """Collapse the list-of-lists rendering into a flat answer string."""
    if payload == "[]":
        return ""
    if payload.startswith("[[") and payload.endswith("]]"):
        return payload[2:-2].replace("], [", ", ")
    return payload


def trace_candidate(trace: ReasoningTrace) -> AnswerCandidate:
    """Candidate answer carried by a code-path trace's last iteration."""
    if trace.path is ReasoningPath.COT:
        raise ValueError("CoT candidates come from the CoT agent reply")
    _, result = trace.last
    if result.kind is not ResultKind.VALUE:
        return AnswerCandidate.nothing(trace.path)
    raw = result.payload
    if trace.path is ReasoningPath.TEXT2SQL:
        raw = unwrap_sql_payload(raw)
    return AnswerCandidate(path=trace.path, value=normalize_answer(raw), raw=raw)

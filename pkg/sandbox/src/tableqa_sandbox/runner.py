"""Request loop: handshake, then one JSON reply line per JSON request line.

Executed code gets a fresh namespace per request (no state leaks between
requests), sees only the dataframe preamble bindings (pd, data, df), may
import only the dataframe stack and standard math modules, and is cut off
by a wall-clock timer. Stdout is redirected during execution so stray
prints cannot corrupt the protocol stream.
"""

from __future__ import annotations

import builtins
import io
import json
import math
import signal
import sys
from contextlib import redirect_stderr, redirect_stdout

import pandas as pd

from .similarity import code_similarity

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 10_000

ALLOWED_IMPORT_ROOTS = frozenset(
    {"pandas", "numpy", "math", "statistics", "decimal", "fractions"}
)


class DisallowedImport(ImportError):
    pass


class _ExecutionTimeout(BaseException):
    # BaseException so generated `except Exception` blocks cannot swallow it.
    pass


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    root = name.split(".")[0]
    if root not in ALLOWED_IMPORT_ROOTS:
        raise DisallowedImport(f"import of '{name}' is not allowed in the sandbox")
    return __import__(name, globals, locals, fromlist, level)


def render_value(value) -> str:
    """Pinned rendering of `ans`: integral floats print as integers, list-like
    values join with ", ", everything else uses default string conversion."""
    if hasattr(value, "item") and not hasattr(value, "__len__"):
        try:
            value = value.item()
        except (ValueError, AttributeError):
            pass
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value) and abs(value) < 1e16:
            return str(int(value))
        return str(value)
    if isinstance(value, pd.DataFrame):
        return ", ".join(
            render_value(cell) for row in value.itertuples(index=False) for cell in row
        )
    if isinstance(value, pd.Series):
        return ", ".join(render_value(cell) for cell in value.tolist())
    if isinstance(value, (list, tuple)):
        return ", ".join(render_value(cell) for cell in value)
    if hasattr(value, "tolist"):  # numpy arrays
        return render_value(value.tolist())
    return str(value)


def _protocol_error(message: str) -> dict:
    return {"kind": "protocol_error", "message": message}


def _run_with_timeout(code: str, namespace: dict, timeout_ms: int) -> None:
    def on_alarm(signum, frame):
        raise _ExecutionTimeout()

    previous = signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, max(timeout_ms, 1) / 1000.0)
    try:
        exec(compile(code, "<generated>", "exec"), namespace)
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)


def handle_exec(message: dict) -> dict:
    columns = message.get("columns")
    rows = message.get("rows")
    code = message.get("code")
    if not isinstance(columns, list) or not isinstance(rows, list) or not isinstance(code, str):
        return _protocol_error("exec needs list 'columns', list 'rows' and string 'code'")
    for row in rows:
        if not isinstance(row, list) or len(row) != len(columns):
            return _protocol_error("every row must align with columns")
    try:
        timeout_ms = int(message.get("timeout_ms", DEFAULT_TIMEOUT_MS))
    except (TypeError, ValueError):
        return _protocol_error("timeout_ms must be an integer")

    data = {column: [row[i] for row in rows] for i, column in enumerate(columns)}
    sandbox_builtins = dict(vars(builtins))
    sandbox_builtins["__import__"] = _guarded_import
    namespace = {
        "__builtins__": sandbox_builtins,
        "pd": pd,
        "data": data,
        "df": pd.DataFrame(data),
    }
    sink = io.StringIO()
    try:
        with redirect_stdout(sink), redirect_stderr(sink):
            _run_with_timeout(code, namespace, timeout_ms)
    except _ExecutionTimeout:
        return {"kind": "timeout"}
    except KeyboardInterrupt:
        raise
    except BaseException as exc:  # includes SystemExit from generated exit()
        return {"kind": "error", "type": type(exc).__name__, "message": str(exc)}
    if "ans" not in namespace:
        return {"kind": "error", "type": "MissingAns", "message": "code did not define 'ans'"}
    try:
        return {"kind": "value", "value": render_value(namespace["ans"])}
    except Exception as exc:
        return {"kind": "error", "type": type(exc).__name__, "message": f"unrenderable ans: {exc}"}


def handle_similarity(message: dict) -> dict:
    code_a = message.get("code_a")
    code_b = message.get("code_b")
    if not isinstance(code_a, str) or not isinstance(code_b, str):
        return _protocol_error("similarity needs string 'code_a' and 'code_b'")
    ast_sim, opcode_sim = code_similarity(code_a, code_b)
    return {"kind": "sim", "ast": ast_sim, "opcode": opcode_sim}


def handle_request(message: dict) -> dict:
    kind = message.get("kind")
    if kind == "exec":
        return handle_exec(message)
    if kind == "similarity":
        return handle_similarity(message)
    return _protocol_error(f"unknown request kind: {kind!r}")


def main() -> int:
    out = sys.stdout
    send = lambda payload: (out.write(json.dumps(payload) + "\n"), out.flush())
    send({"kind": "hello", "protocol": PROTOCOL_VERSION})
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            send(_protocol_error(f"undecodable request line: {exc}"))
            continue
        if not isinstance(message, dict):
            send(_protocol_error("requests must be JSON objects"))
            continue
        send(handle_request(message))
    return 0


if __name__ == "__main__":
    sys.exit(main())

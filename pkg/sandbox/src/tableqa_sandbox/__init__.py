"""Sandbox runner: executes generated dataframe code in a child process.

Speaks a line-delimited JSON protocol on stdin/stdout (handshake, then
``exec`` and ``similarity`` requests). Executed code sees a fresh namespace
per request, a restricted import allowlist and a wall-clock timeout.
"""

from .runner import PROTOCOL_VERSION, main
from .similarity import code_similarity, node_type_sequence, opcode_name_sequence

__all__ = [
    "PROTOCOL_VERSION",
    "code_similarity",
    "main",
    "node_type_sequence",
    "opcode_name_sequence",
]

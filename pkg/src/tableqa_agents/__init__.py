"""Multi-agent table question answering.

Routes a (table, question) pair through CoT, PoT and text2SQL reasoning
agents, debugs generated code with similarity-based early stopping, gates
candidates on confidence scores and falls back to a judge agent only when
needed. Every model call is pluggable and mockable.
"""

from .core import (
    AnswerCandidate,
    CandidateSet,
    DecidedBy,
    ExecutionResult,
    MalformedTable,
    NOTHING,
    Question,
    ReasoningPath,
    ReasoningTrace,
    ResultKind,
    Routing,
    RunRecord,
    Table,
    parse_markdown_table,
    sanitize_headers,
    sanitize_identifier,
    table_to_markdown,
)
from .gateway import AgentRole, LlmGateway, ScriptedProvider, HttpProvider
from .metrics import MetricTriple, exact_match, fuzzy_ratio, normalize_answer, token_f1
from .pipeline import Pipeline, PipelineConfig, PipelineError, compare_answers

__all__ = [
    "AgentRole",
    "AnswerCandidate",
    "CandidateSet",
    "DecidedBy",
    "ExecutionResult",
    "HttpProvider",
    "LlmGateway",
    "MalformedTable",
    "MetricTriple",
    "NOTHING",
    "Pipeline",
    "PipelineConfig",
    "PipelineError",
    "Question",
    "ReasoningPath",
    "ReasoningTrace",
    "ResultKind",
    "Routing",
    "RunRecord",
    "ScriptedProvider",
    "Table",
    "compare_answers",
    "exact_match",
    "fuzzy_ratio",
    "normalize_answer",
    "parse_markdown_table",
    "sanitize_headers",
    "sanitize_identifier",
    "table_to_markdown",
    "token_f1",
]

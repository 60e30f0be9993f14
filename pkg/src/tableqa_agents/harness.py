"""Dataset loading, batch evaluation, report writing and training emission.

Reports are deterministic for a given provider script: aggregates are
recomputable from the per-question records, and timestamps live in a
separate metadata file so report bytes are stable across reruns.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional

from . import confidence as confidence_mod
from . import scheduler as scheduler_mod
from .agents import AgentFailed, candidate_from_cot, run_cot
from .confidence import ConfidenceBackend
from .core import (
    CandidateSet,
    DecidedBy,
    MalformedTable,
    Question,
    ReasoningPath,
    ReasoningTrace,
    Routing,
    RunRecord,
    Table,
    parse_markdown_table,
)
from .executors import SqlEnvironment, code_and_debug, trace_candidate
from .gateway import GatewayConfig, LlmGateway, Provider
from .metrics import score_answer
from .pipeline import Pipeline, PipelineConfig, PipelineError
from .scheduler import ScorerBackend, label_from_em

logger = logging.getLogger(__name__)

DATASET_FORMATS = ("generic-json", "tablebench-jsonl", "penguins-json")

TABLEBENCH_MANIFEST = {
    "id": "id",
    "question": "question",
    "answer": "answer",
    "table": "table",
    "category": "qsubtype",
    "columns_key": "columns",
    "rows_key": "data",
}


class MalformedDataset(Exception):
    def __init__(self, message: str, index: Optional[int] = None):
        where = f" (item {index})" if index is not None else ""
        super().__init__(f"{message}{where}")
        self.index = index


@dataclass(frozen=True)
class DatasetSpec:
    format: str
    path: str
    exclude_categories: frozenset[str] = frozenset()
    manifest: Optional[Mapping[str, str]] = None

    def __post_init__(self) -> None:
        if self.format not in DATASET_FORMATS:
            raise ValueError(f"unknown dataset format: {self.format}")


DatasetItem = tuple[Table, Question, str]


def _table_from_value(value, index: int) -> Table:
    if isinstance(value, str):
        try:
            return parse_markdown_table(value)
        except MalformedTable as exc:
            raise MalformedDataset(f"bad markdown table: {exc}", index) from exc
    if isinstance(value, Mapping):
        try:
            return Table(
                columns=tuple(str(c) for c in value["columns"]),
                rows=tuple(tuple(row) for row in value["rows"]),
                name=value.get("name"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDataset(f"bad table object: {exc}", index) from exc
    raise MalformedDataset("table must be markdown or {columns, rows}", index)


def _load_generic(path: str) -> list[DatasetItem]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedDataset(f"invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise MalformedDataset("generic-json must be a JSON array")
    items: list[DatasetItem] = []
    for index, entry in enumerate(data):
        if not isinstance(entry, Mapping):
            raise MalformedDataset("items must be objects", index)
        try:
            question_text = entry["question"]
            answer = str(entry["answer"])
        except KeyError as exc:
            raise MalformedDataset(f"missing field {exc}", index) from exc
        table = _table_from_value(entry.get("table"), index)
        question = Question(
            text=question_text,
            id=str(entry.get("id", index)),
            category=entry.get("category"),
        )
        items.append((table, question, answer))
    return items


def _load_tablebench(path: str, manifest: Optional[Mapping[str, str]]) -> list[DatasetItem]:
    fields = dict(TABLEBENCH_MANIFEST)
    if manifest:
        fields.update(manifest)
    items: list[DatasetItem] = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedDataset(f"invalid JSON line: {exc}", index) from exc
            table_value = entry.get(fields["table"])
            if isinstance(table_value, str):
                try:
                    table_value = json.loads(table_value)
                except json.JSONDecodeError as exc:
                    raise MalformedDataset(f"bad embedded table JSON: {exc}", index) from exc
            if not isinstance(table_value, Mapping):
                raise MalformedDataset("table field must be an object", index)
            try:
                table = Table(
                    columns=tuple(str(c) for c in table_value[fields["columns_key"]]),
                    rows=tuple(tuple(row) for row in table_value[fields["rows_key"]]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedDataset(f"bad table: {exc}", index) from exc
            try:
                question_text = entry[fields["question"]]
                answer = str(entry[fields["answer"]])
            except KeyError as exc:
                raise MalformedDataset(f"missing field {exc}", index) from exc
            question = Question(
                text=question_text,
                id=str(entry.get(fields["id"], index)),
                category=entry.get(fields["category"]),
            )
            items.append((table, question, answer))
    return items


_PENGUINS_ROW = re.compile(r"^[^,]+(,\s*[^,]+){2,}$")


def _load_penguins(path: str) -> list[DatasetItem]:
    """BIG-bench style task file: {examples: [{input, target}]}.

    The table lives inside the input prose as comma-separated lines; the
    question is the final interrogative line.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedDataset(f"invalid JSON: {exc}") from exc
    examples = data.get("examples")
    if not isinstance(examples, list):
        raise MalformedDataset("penguins-json needs an 'examples' array")
    items: list[DatasetItem] = []
    for index, entry in enumerate(examples):
        text = entry.get("input")
        target = entry.get("target")
        if not isinstance(text, str) or target is None:
            raise MalformedDataset("examples need 'input' and 'target'", index)
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        table_lines = [ln for ln in lines if _PENGUINS_ROW.match(ln)]
        if len(table_lines) < 2:
            raise MalformedDataset("no comma table found in input", index)
        width = len(table_lines[0].split(","))
        rows = [
            tuple(cell.strip() for cell in ln.split(","))
            for ln in table_lines[1:]
            if len(ln.split(",")) == width
        ]
        columns = tuple(cell.strip() for cell in table_lines[0].split(","))
        question_lines = [ln for ln in lines if ln.endswith("?")]
        if not question_lines:
            raise MalformedDataset("no question line found in input", index)
        question_text = question_lines[-1]
        items.append(
            (
                Table(columns=columns, rows=tuple(rows), name="penguins"),
                Question(text=question_text, id=str(index)),
                str(target),
            )
        )
    return items


def load_dataset(spec: DatasetSpec) -> list[DatasetItem]:
    if spec.format == "generic-json":
        items = _load_generic(spec.path)
    elif spec.format == "tablebench-jsonl":
        items = _load_tablebench(spec.path, spec.manifest)
    else:
        items = _load_penguins(spec.path)
    if spec.exclude_categories:
        items = [
            item
            for item in items
            if item[1].category not in spec.exclude_categories
        ]
    return items


@dataclass
class RunReport:
    dataset: str
    config: dict
    n_questions: int
    mean_em: float
    mean_fuzzy: float
    mean_f1: float
    call_totals: dict[str, int]
    records: list[RunRecord] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config": self.config,
            "n_questions": self.n_questions,
            "aggregates": {
                "em": round(self.mean_em, 6),
                "fuzzy": round(self.mean_fuzzy, 6),
                "f1": round(self.mean_f1, 6),
            },
            "call_totals": self.call_totals,
            "records": [record_to_dict(r) for r in self.records],
        }


def record_to_dict(record: RunRecord) -> dict:
    return {
        "question_id": record.question_id,
        "routing": record.routing.value,
        "skipped_path": record.skipped_path.value if record.skipped_path else None,
        "call_counts": dict(sorted(record.call_counts.items())),
        "decided_by": record.decided_by.value,
        "final_answer": record.final_answer,
        "metrics": (
            {
                "em": record.metrics.em,
                "fuzzy": round(record.metrics.fuzzy, 6),
                "f1": round(record.metrics.f1, 6),
            }
            if record.metrics
            else None
        ),
    }


def config_snapshot(config: PipelineConfig) -> dict:
    return {
        "use_scheduler": config.use_scheduler,
        "use_cc": config.use_cc,
        "use_ja": config.use_ja,
        "use_fm": config.use_fm,
        "n": config.n,
        "theta": config.theta,
        "fm_char_limit": config.fm_char_limit,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_benchmark(
    spec: DatasetSpec,
    config: PipelineConfig,
    provider: Provider,
    out_dir: Optional[str] = None,
    jobs: int = 1,
    gateway_config: Optional[GatewayConfig] = None,
    scheduler_scorer: Optional[ScorerBackend] = None,
    cc_scorer: Optional[ConfidenceBackend] = None,
    sandbox_factory: Optional[Callable[[], object]] = None,
) -> RunReport:
    """Evaluate every dataset item through the pipeline and aggregate."""
    items = load_dataset(spec)
    gateway = LlmGateway(provider, gateway_config)
    started = time.time()

    local = threading.local()
    created_sandboxes: list = []
    sandbox_lock = threading.Lock()

    def get_sandbox():
        if sandbox_factory is None:
            return None
        if not hasattr(local, "sandbox"):
            local.sandbox = sandbox_factory()
            with sandbox_lock:
                created_sandboxes.append(local.sandbox)
        return local.sandbox

    def evaluate(indexed: tuple[int, DatasetItem]):
        index, (table, question, gold) = indexed
        pipeline = Pipeline(
            gateway,
            config,
            sandbox=get_sandbox(),
            scheduler_scorer=scheduler_scorer,
            cc_scorer=cc_scorer,
        )
        serialized = ""
        try:
            outcome = pipeline.run(table, question)
            record, serialized = outcome.record, outcome.serialized
        except PipelineError as exc:
            logger.warning("question %s failed: %s", question.id, exc)
            record = exc.record or RunRecord(
                question_id=question.id,
                routing=Routing.NO_SCHEDULER,
                skipped_path=None,
                call_counts=gateway.ledger.for_question(question.id),
                decided_by=DecidedBy.JUDGE_AGENT,
                final_answer="",
                metrics=None,
            )
        record = replace(record, metrics=score_answer(record.final_answer, gold))
        return index, record, serialized

    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(evaluate, enumerate(items)))
        else:
            results = [evaluate(pair) for pair in enumerate(items)]
    finally:
        for sandbox in created_sandboxes:
            close = getattr(sandbox, "close", None)
            if callable(close):
                close()
    results.sort(key=lambda item: item[0])
    records = [record for _, record, _ in results]

    n = len(records)
    report = RunReport(
        # Basename keeps report bytes stable across checkouts; the full path
        # is recorded in metadata.json alongside the timestamps.
        dataset=Path(spec.path).name,
        config=config_snapshot(config),
        n_questions=n,
        mean_em=sum(r.metrics.em for r in records) / n if n else 0.0,
        mean_fuzzy=sum(r.metrics.fuzzy for r in records) / n if n else 0.0,
        mean_f1=sum(r.metrics.f1 for r in records) / n if n else 0.0,
        call_totals=gateway.ledger.totals_by_role(),
        records=records,
    )

    if out_dir is not None:
        out = Path(out_dir)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        _write_json(out / "report.json", report.to_json_dict())
        _write_json(out / "config.json", config_snapshot(config))
        _write_json(
            out / "metadata.json",
            {
                "started_unix": started,
                "duration_s": time.time() - started,
                "dataset_path": str(Path(spec.path).resolve()),
                "provider": type(provider).__name__,
                "jobs": jobs,
            },
        )
        for index, record, serialized in results:
            _write_json(
                out / "traces" / f"q{index:04d}.json",
                {
                    "question_id": record.question_id,
                    "serialized": serialized,
                    "record": record_to_dict(record),
                },
            )
    return report


def run_all_paths(
    table: Table,
    question: Question,
    gateway: LlmGateway,
    config: PipelineConfig,
    sandbox=None,
) -> tuple[dict[ReasoningPath, Optional[ReasoningTrace]], CandidateSet]:
    """Run all three reasoning paths without scheduling (training mode)."""
    loop_config = config.loop_config()
    try:
        solution_text, cot_answer = run_cot(gateway, table, question)
    except AgentFailed:
        solution_text, cot_answer = None, None
    cot_trace = (
        ReasoningTrace(path=ReasoningPath.COT, iterations=(), solution_text=solution_text)
        if solution_text is not None
        else None
    )
    with SqlEnvironment(table) as env:
        pot_trace = code_and_debug(
            ReasoningPath.POT, table, question, gateway, loop_config, sandbox=sandbox
        )
        sql_trace = code_and_debug(
            ReasoningPath.TEXT2SQL, table, question, gateway, loop_config, sql_env=env
        )
    candidates = CandidateSet(
        cot=candidate_from_cot(cot_answer),
        pot=trace_candidate(pot_trace),
        sql=trace_candidate(sql_trace),
    )
    traces: dict[ReasoningPath, Optional[ReasoningTrace]] = {
        ReasoningPath.COT: cot_trace,
        ReasoningPath.POT: pot_trace,
        ReasoningPath.TEXT2SQL: sql_trace,
    }
    return traces, candidates


def emit_training_data(
    spec: DatasetSpec,
    provider: Provider,
    out_dir: str,
    config: Optional[PipelineConfig] = None,
    gateway_config: Optional[GatewayConfig] = None,
    sandbox_factory: Optional[Callable[[], object]] = None,
) -> dict[str, str]:
    """Run every item through all three paths and emit training rows."""
    items = load_dataset(spec)
    config = config or PipelineConfig(use_scheduler=False)
    gateway = LlmGateway(provider, gateway_config)
    sandbox = sandbox_factory() if sandbox_factory else None

    scheduler_rows: list[tuple[Table, Question, bool, bool]] = []
    cc_rows: list = []
    try:
        for index, (table, question, gold) in enumerate(items):
            try:
                traces, candidates = run_all_paths(table, question, gateway, config, sandbox)
            except Exception as exc:  # per-item failures must not stop emission
                logger.warning("skipping item %d after failure: %s", index, exc)
                continue
            pot_label = label_from_em(
                None if candidates.pot.is_nothing else candidates.pot.raw, gold
            )
            sql_label = label_from_em(
                None if candidates.sql.is_nothing else candidates.sql.raw, gold
            )
            scheduler_rows.append((table, question, pot_label, sql_label))
            cc_rows.append((table, question, traces, candidates, gold))
    finally:
        close = getattr(sandbox, "close", None)
        if callable(close):
            close()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scheduler_path = out / "scheduler_train.tsv"
    cc_path = out / "cc_train.tsv"
    cc_meta_path = out / "cc_train.meta.json"
    scheduler_mod.emit_training_rows(scheduler_rows, str(scheduler_path))
    confidence_mod.emit_cc_training_rows(cc_rows, str(cc_path), str(cc_meta_path))
    return {
        "scheduler": str(scheduler_path),
        "cc": str(cc_path),
        "cc_meta": str(cc_meta_path),
    }


def score_files(pred_path: str, gold_path: str) -> dict:
    """Metrics-only evaluation of two aligned answer files (one per line)."""
    preds = Path(pred_path).read_text(encoding="utf-8").splitlines()
    golds = Path(gold_path).read_text(encoding="utf-8").splitlines()
    if len(preds) != len(golds):
        raise MalformedDataset(
            f"pred file has {len(preds)} lines, gold file has {len(golds)}"
        )
    triples = [score_answer(p, g) for p, g in zip(preds, golds)]
    n = len(triples)
    return {
        "n": n,
        "em": sum(t.em for t in triples) / n if n else 0.0,
        "fuzzy": sum(t.fuzzy for t in triples) / n if n else 0.0,
        "f1": sum(t.f1 for t in triples) / n if n else 0.0,
    }

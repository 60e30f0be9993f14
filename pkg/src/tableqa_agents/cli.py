"""Command-line entry points: run, emit-train and score.

Configuration precedence: built-in defaults, then the key=value config
file, then TABLEQA_* environment variables, then explicit flags.
Exit codes: 0 success, 1 dataset error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from typing import Optional, Sequence

from .confidence import AgreementScorer, RemoteScorer as CcRemoteScorer, StubScorer
from .executors import SandboxClient
from .gateway import GatewayConfig, HttpProvider, Provider, ScriptedProvider
from .harness import (
    DatasetSpec,
    MalformedDataset,
    emit_training_data,
    run_benchmark,
    score_files,
)
from .pipeline import PipelineConfig
from .scheduler import (
    HeuristicScorer,
    LinearScorer,
    RemoteScorer as SchedulerRemoteScorer,
)

logger = logging.getLogger(__name__)

ENV_PREFIX = "TABLEQA_"
DEFAULT_SANDBOX_CMD = f"{sys.executable} -m tableqa_sandbox"


class ConfigError(Exception):
    pass


def load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                body = line.strip()
                if not body or body.startswith("#"):
                    continue
                if "=" not in body:
                    raise ConfigError(f"{path}:{line_no}: expected key=value")
                key, value = body.split("=", 1)
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return values


def gather_settings(config_path: Optional[str]) -> dict[str, str]:
    settings: dict[str, str] = {}
    if config_path:
        settings.update(load_config_file(config_path))
    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name.startswith("model_"):
                settings["model." + name[len("model_"):]] = value
            else:
                settings[name] = value
    return settings


def build_provider(args, settings: dict[str, str]) -> Provider:
    if args.provider == "scripted":
        script = args.script or settings.get("script")
        if not script:
            raise ConfigError("--provider scripted requires --script FILE")
        try:
            return ScriptedProvider.load(script)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot load script file: {exc}") from exc
    endpoint = args.endpoint or settings.get("endpoint")
    if not endpoint:
        raise ConfigError("http provider needs --endpoint or TABLEQA_ENDPOINT")
    api_key = args.api_key or settings.get("api_key", "")
    return HttpProvider(endpoint, api_key)


def build_gateway_config(settings: dict[str, str]) -> GatewayConfig:
    models = {}
    for key, value in settings.items():
        if key.startswith("model."):
            name = key[len("model."):]
            if name == "default":
                continue
            # Env var names are case-flattened; recover canonical role names.
            canonical = {
                "cota": "CoTA", "pota": "PoTA", "t2sa": "t2SA",
                "pda": "PDA", "sda": "SDA", "ja": "JA", "fm": "FM",
            }.get(name.lower(), name)
            models[canonical] = value
    return GatewayConfig(
        models=models,
        default_model=settings.get("model.default", settings.get("model", "default")),
        temperature=float(settings.get("temperature", "0")),
        max_tokens=int(settings.get("max_tokens", "1024")),
    )


def build_scheduler_scorer(args):
    mode = args.scheduler
    if mode == "heuristic":
        return HeuristicScorer()
    if mode == "linear":
        if not args.scheduler_weights:
            raise ConfigError("--scheduler linear requires --scheduler-weights FILE")
        try:
            return LinearScorer.from_file(args.scheduler_weights)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad weights file: {exc}") from exc
    if mode == "remote":
        if not args.scheduler_url:
            raise ConfigError("--scheduler remote requires --scheduler-url URL")
        return SchedulerRemoteScorer(args.scheduler_url)
    return None  # off


def build_cc_scorer(args):
    mode = args.cc
    if mode == "heuristic":
        return AgreementScorer()
    if mode == "stub":
        if not args.cc_stub_scores:
            raise ConfigError("--cc stub requires --cc-stub-scores cot,pot,sql")
        try:
            cot, pot, sql = (float(x) for x in args.cc_stub_scores.split(","))
        except ValueError as exc:
            raise ConfigError("--cc-stub-scores must be three comma-separated floats") from exc
        return StubScorer(cot=cot, pot=pot, sql=sql)
    if mode == "remote":
        if not args.cc_url:
            raise ConfigError("--cc remote requires --cc-url URL")
        return CcRemoteScorer(args.cc_url)
    return None  # off


def build_pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        use_scheduler=not args.no_scheduler and args.scheduler != "off",
        use_cc=not args.no_cc and args.cc != "off",
        use_ja=not args.no_ja,
        use_fm=not args.no_fm,
        n=args.n,
        theta=args.theta,
        fm_char_limit=args.fm_char_limit,
    )


def build_sandbox_factory(args, settings: dict[str, str]):
    command = args.sandbox_cmd or settings.get("sandbox_cmd") or DEFAULT_SANDBOX_CMD
    if command in ("off", "none"):
        return None
    argv = shlex.split(command)

    def factory():
        return SandboxClient(argv)

    return factory


def _add_common_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset file path")
    parser.add_argument("--format", required=True,
                        choices=["generic-json", "tablebench-jsonl", "penguins-json"])
    parser.add_argument("--exclude-category", action="append", default=[],
                        help="category to exclude (repeatable)")
    parser.add_argument("--provider", choices=["scripted", "http"], default="http")
    parser.add_argument("--script", help="scripted provider response file")
    parser.add_argument("--endpoint", help="chat-completions endpoint URL")
    parser.add_argument("--api-key", help="endpoint API key")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--sandbox-cmd", help="command for the PoT sandbox (or 'off')")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tableqa",
        description="Multi-agent table question answering benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a dataset end to end")
    _add_common_run_flags(run)
    run.add_argument("--no-scheduler", action="store_true")
    run.add_argument("--no-cc", action="store_true")
    run.add_argument("--no-ja", action="store_true")
    run.add_argument("--no-fm", action="store_true")
    run.add_argument("--theta", type=float, default=0.1)
    run.add_argument("--n", type=int, default=3)
    run.add_argument("--fm-char-limit", type=int, default=100)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", help="run directory for report and traces")
    run.add_argument("--scheduler", choices=["off", "heuristic", "linear", "remote"],
                     default="heuristic")
    run.add_argument("--scheduler-weights")
    run.add_argument("--scheduler-url")
    run.add_argument("--cc", choices=["off", "heuristic", "stub", "remote"],
                     default="heuristic")
    run.add_argument("--cc-stub-scores")
    run.add_argument("--cc-url")

    emit = sub.add_parser("emit-train", help="emit scheduler and confidence training rows")
    _add_common_run_flags(emit)
    emit.add_argument("--out", required=True)
    emit.add_argument("--n", type=int, default=3)

    scorecmd = sub.add_parser("score", help="metrics-only scoring of answer files")
    scorecmd.add_argument("--pred-file", required=True)
    scorecmd.add_argument("--gold-file", required=True)

    return parser


def cmd_run(args) -> int:
    settings = gather_settings(args.config)
    spec = DatasetSpec(
        format=args.format,
        path=args.dataset,
        exclude_categories=frozenset(args.exclude_category),
    )
    provider = build_provider(args, settings)
    config = build_pipeline_config(args)
    report = run_benchmark(
        spec,
        config,
        provider,
        out_dir=args.out,
        jobs=args.jobs,
        gateway_config=build_gateway_config(settings),
        scheduler_scorer=build_scheduler_scorer(args),
        cc_scorer=build_cc_scorer(args),
        sandbox_factory=build_sandbox_factory(args, settings),
    )
    print(json.dumps(report.to_json_dict()["aggregates"], sort_keys=True))
    return 0


def cmd_emit_train(args) -> int:
    settings = gather_settings(args.config)
    spec = DatasetSpec(
        format=args.format,
        path=args.dataset,
        exclude_categories=frozenset(args.exclude_category),
    )
    provider = build_provider(args, settings)
    paths = emit_training_data(
        spec,
        provider,
        args.out,
        config=PipelineConfig(use_scheduler=False, n=args.n),
        gateway_config=build_gateway_config(settings),
        sandbox_factory=build_sandbox_factory(args, settings),
    )
    print(json.dumps(paths, sort_keys=True))
    return 0


def cmd_score(args) -> int:
    result = score_files(args.pred_file, args.gold_file)
    print(json.dumps(result, sort_keys=True))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "emit-train":
            return cmd_emit_train(args)
        return cmd_score(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MalformedDataset as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

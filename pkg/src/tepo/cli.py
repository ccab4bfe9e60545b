"""Command-line entry point.

Subcommands: gen-data, train, eval, serve-mock. Configuration precedence is
built-in defaults < --config JSON file < explicit CLI flags; the merged
config is echoed into every report and log header. Every failure exits
non-zero with a single `error: ...` line on stderr. TEPO_LOG={error,info,
debug} controls verbosity.
"""
from __future__ import annotations

import argparse
import dataclasses
import functools
import json
import logging
import os
import shlex
import sys
from pathlib import Path
from typing import Optional, Sequence

from .agent import TrainConfig, train
from .clinician import ClinicianConfig
from .environment import EnvConfig
from .policies import (
    EVAL_CSV_COLUMNS,
    AlternatingPolicy,
    CheckpointPolicy,
    EvalReport,
    GreedyOraclePolicy,
    Policy,
    RandomPolicy,
    evaluate,
)
from .protocol import RemoteSegmenter, dataset_case_resolver, serve_stream, serve_tcp
from .segmenter import BackendError, MockConfig, MockSegmenter
from .synthdata import (
    DatasetError,
    SynthConfig,
    generate_dataset,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .tinynet import CheckpointError, load_net

log = logging.getLogger("tepo")


class ConfigError(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"          # "mock" | "remote"
    spawn: Optional[str] = None  # shell-style command line
    tcp: Optional[str] = None    # host:port

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "remote"):
            raise ConfigError(f"backend.kind must be mock or remote, got {self.kind!r}")
        if self.kind == "remote" and not (self.spawn or self.tcp):
            raise ConfigError("remote backend needs spawn or tcp")


@dataclasses.dataclass(frozen=True)
class DataConfig:
    dir: Optional[str] = None
    synth: SynthConfig = dataclasses.field(default_factory=SynthConfig)


@dataclasses.dataclass(frozen=True)
class ReportConfig:
    out: Optional[str] = None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    data: DataConfig = dataclasses.field(default_factory=DataConfig)
    env: EnvConfig = dataclasses.field(default_factory=EnvConfig)
    clinician: ClinicianConfig = dataclasses.field(default_factory=ClinicianConfig)
    mock: MockConfig = dataclasses.field(default_factory=MockConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    backend: BackendConfig = dataclasses.field(default_factory=BackendConfig)
    report: ReportConfig = dataclasses.field(default_factory=ReportConfig)


def _merge_dataclass(obj, updates: dict, path: str):
    """Rebuild a (possibly nested) frozen dataclass with updates applied.

    Unknown keys are rejected with their full path.
    """
    if not isinstance(updates, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    names = {f.name: f for f in dataclasses.fields(obj)}
    kwargs = {}
    for key, value in updates.items():
        if key not in names:
            raise ConfigError(f"unknown config key {path + key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            kwargs[key] = _merge_dataclass(current, value, f"{path}{key}.")
        else:
            kwargs[key] = value
    try:
        return dataclasses.replace(obj, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def load_run_config(path: Optional[str], overrides: Optional[dict] = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = _merge_dataclass(cfg, raw, "")
    if overrides:
        cfg = _merge_dataclass(cfg, overrides, "")
    # fold the clinician section into the env config used everywhere
    env = dataclasses.replace(cfg.env, clinician=cfg.clinician)
    return dataclasses.replace(cfg, env=env)


def config_echo(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def _make_backend_factory(cfg: RunConfig):
    if cfg.backend.kind == "mock":
        return functools.partial(MockSegmenter, cfg.mock)
    if cfg.backend.spawn:
        cmd = shlex.split(cfg.backend.spawn)
        return functools.partial(RemoteSegmenter.spawn, cmd)
    host, _, port = cfg.backend.tcp.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"backend.tcp must be host:port, got {cfg.backend.tcp!r}")
    return functools.partial(RemoteSegmenter.connect, host, int(port))


def _load_cases(cfg: RunConfig, split: str):
    if cfg.data.dir is None:
        raise ConfigError("no dataset directory configured (use --data)")
    cases = read_dataset(cfg.data.dir)
    if not cases:
        raise DatasetError(f"{cfg.data.dir}: dataset is empty")
    if split == "all":
        return cases
    parts = split_dataset(cases)
    if not parts[split]:
        raise DatasetError(f"{cfg.data.dir}: split {split!r} is empty")
    return parts[split]


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise ConfigError(f"--size must look like 64x64, got {text!r}") from exc


def cmd_gen_data(args: argparse.Namespace) -> int:
    overrides: dict = {"data": {"synth": {"master_seed": args.seed}}}
    if args.size is not None:
        h, w = _parse_size(args.size)
        overrides["data"]["synth"].update({"height": h, "width": w})
    cfg = load_run_config(args.config, overrides)
    cases = generate_dataset(cfg.data.synth, args.cases)
    write_dataset(args.out, cases, generator=cfg.data.synth)
    log.info("wrote %d cases to %s", len(cases), args.out)
    print(f"wrote {len(cases)} cases to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    overrides: dict = {"data": {"dir": args.data}, "train": {}}
    if args.episode_len is not None:
        overrides["train"]["episode_len"] = args.episode_len
        overrides["env"] = {"episode_len": args.episode_len}
    if args.episodes is not None:
        overrides["train"]["episodes"] = args.episodes
    if args.seed is not None:
        overrides["train"]["seed"] = args.seed
    cfg = load_run_config(args.config, overrides)
    cases = _load_cases(cfg, args.split)
    env_cfg = dataclasses.replace(
        cfg.env, episode_len=cfg.train.episode_len, discount=cfg.train.gamma
    )
    backend = _make_backend_factory(cfg)()
    log_path = args.log or (str(args.out) + ".log.csv")
    result = train(
        cases,
        cfg.train,
        backend,
        env_config=env_cfg,
        log_path=log_path,
        checkpoint_path=args.out,
    )
    print(
        f"trained {cfg.train.episodes} episodes "
        f"({result.total_steps} steps, {result.total_updates} updates) -> {args.out}"
    )
    return 0


def _resolve_policy(spec: str) -> Policy:
    if spec == "random":
        return RandomPolicy()
    if spec == "alternating":
        return AlternatingPolicy()
    if spec == "oracle":
        return GreedyOraclePolicy()
    if spec.startswith("ckpt:"):
        path = spec[len("ckpt:"):]
        if not Path(path).is_file():
            raise ConfigError(f"checkpoint {path!r} does not exist")
        return CheckpointPolicy(load_net(path), name=f"ckpt:{Path(path).name}")
    raise ConfigError(
        f"unknown policy {spec!r} (use random|alternating|oracle|ckpt:PATH)"
    )


def write_report(report: EvalReport, base: str | Path, echo: dict) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix == ".json":
        base = base.with_suffix("")
    json_path = base.with_suffix(".json")
    csv_path = base.with_suffix(".csv")
    payload = {"config": echo, **report.to_json_dict()}
    json_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    lines = ["# config: " + json.dumps(echo, sort_keys=True)]
    lines.append(",".join(EVAL_CSV_COLUMNS))
    for row in report.csv_rows():
        lines.append(",".join(str(v) for v in row))
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return json_path, csv_path


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, {"data": {"dir": args.data}})
    cases = _load_cases(cfg, args.split)
    policy = _resolve_policy(args.policy)
    env_cfg = dataclasses.replace(cfg.env, episode_len=args.steps)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if cfg.backend.kind == "remote" and cfg.backend.tcp:
        jobs = 1  # a single TCP peer serializes requests anyway
    report = evaluate(
        policy,
        cases,
        _make_backend_factory(cfg),
        steps=args.steps,
        seed=args.seed,
        env_config=env_cfg,
        jobs=jobs,
    )
    json_path, csv_path = write_report(report, args.out, config_echo(cfg))
    print(
        f"evaluated {policy.name} on {len(report.traces)} cases "
        f"({len(report.failures)} failures) -> {json_path}, {csv_path}"
    )
    return 0


def cmd_serve_mock(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, {"data": {"dir": args.data}})
    cases = read_dataset(args.data)
    resolver = dataset_case_resolver(cases)
    make_backend = _make_backend_factory(
        dataclasses.replace(cfg, backend=BackendConfig(kind="mock"))
    )
    if args.tcp is not None:
        def ready(port: int) -> None:
            print(f"listening on 127.0.0.1:{port}", flush=True)

        serve_tcp("127.0.0.1", args.tcp, make_backend, resolver, ready=ready)
    else:
        serve_stream(sys.stdin.buffer, sys.stdout.buffer, make_backend(), resolver)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tepo",
        description="Prompt-form optimization for interactive segmentation: "
        "synthetic datasets, value-network training, policy evaluation, and "
        "the reference protocol server.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", help="generate a synthetic dataset",
                       formatter_class=fmt)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--cases", type=int, required=True, help="number of cases")
    p.add_argument("--seed", type=int, default=0, help="generator master seed")
    p.add_argument("--size", default=None, help="grid size HxW (default 64x64)")
    p.add_argument("--config", default=None, help="JSON run-config file")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a prompt-form agent",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--episode-len", type=int, default=None,
                   help="interaction steps per training episode (default 9)")
    p.add_argument("--episodes", type=int, default=None,
                   help="number of training episodes (default 6667)")
    p.add_argument("--seed", type=int, default=None, help="training seed (default 0)")
    p.add_argument("--split", default="train",
                   choices=["train", "val", "test", "all"],
                   help="dataset split to train on")
    p.add_argument("--log", default=None,
                   help="training log CSV path (default: OUT.log.csv)")
    p.add_argument("--config", default=None, help="JSON run-config file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy", formatter_class=fmt)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--policy", required=True,
                   help="random | alternating | oracle | ckpt:PATH")
    p.add_argument("--steps", type=int, default=9, help="interaction steps")
    p.add_argument("--out", required=True, help="report base path (.json/.csv)")
    p.add_argument("--seed", type=int, default=0, help="evaluation seed")
    p.add_argument("--split", default="test",
                   choices=["train", "val", "test", "all"],
                   help="dataset split to evaluate on")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel case workers (default: number of processors)")
    p.add_argument("--config", default=None, help="JSON run-config file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "serve-mock",
        help="serve the synthetic backend over the wire protocol",
        formatter_class=fmt,
    )
    p.add_argument("--data", required=True,
                   help="dataset directory the server resolves case ids against")
    p.add_argument("--tcp", type=int, default=None,
                   help="listen on this TCP port instead of stdio")
    p.add_argument("--config", default=None, help="JSON run-config file")
    p.set_defaults(func=cmd_serve_mock)

    return parser


def _setup_logging() -> None:
    level = os.environ.get("TEPO_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, BackendError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())

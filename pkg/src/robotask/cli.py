"""Command-line entry points: ``run``, ``benchmark`` and ``evaluate``.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 when the
work itself fails. Progress goes to standard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .agents import make_agent
from .core import ConfigError
from .env import make_env_spec
from .experiment import ExperimentConfig, evaluate, run
from .orchestrator import OrchestratorConfig, SyntheticEnvSpec, benchmark_resets, summarize

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

log = logging.getLogger("robotask")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _int_list(text):
    return [_positive_int(part) for part in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robotask", description="Train and benchmark goal-conditioned robot RL agents.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug-level progress output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="train and test an agent from a JSON config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--seed", type=int, help="override the config's seed")

    p = sub.add_parser("benchmark", help="time environment resets across worker layouts")
    p.add_argument("--workers", required=True, type=_int_list, help="one count or a comma list, e.g. 1,2,4")
    p.add_argument("--envs-per-worker", default=[1], type=_int_list, help="one count or a comma list")
    p.add_argument("--resets", default=1000, type=_positive_int)
    p.add_argument("--repeats", default=10, type=_positive_int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path, help="benchmark the env of this experiment config instead")
    p.add_argument("--reset-cost", default=0.005, type=float, help="synthetic env seconds per reset")
    p.add_argument("--mode", default="sleep", choices=["sleep", "busy"], help="synthetic env cost model")

    p = sub.add_parser("evaluate", help="test a saved checkpoint without exploration")
    p.add_argument("--checkpoint", required=True, type=Path, help="checkpoint file or results directory")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--episodes", default=100, type=_positive_int)
    p.add_argument("--seed", default=0, type=int)
    return parser


def _read_config(path: Path) -> tuple[dict, str]:
    try:
        text = path.read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror or e}") from e
    try:
        return json.loads(text), text
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}") from e


def cmd_run(args) -> int:
    config, text = _read_config(args.config)
    if args.seed is not None:
        if not isinstance(config, dict):
            raise ConfigError("", "configuration must be a JSON object")
        config["seed"] = args.seed
        text = json.dumps(config, indent=2) + "\n"
    ratio = run(config, args.results, config_text=text)
    print(f"final success ratio {ratio:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.config is not None:
        config, _ = _read_config(args.config)
        env_spec = make_env_spec(config.get("env_config") if isinstance(config, dict) else None)
    else:
        if args.reset_cost < 0:
            raise UsageError("--reset-cost must be >= 0")
        env_spec = SyntheticEnvSpec(reset_cost=args.reset_cost, mode=args.mode)
    rows = []
    for workers in args.workers:
        for per in args.envs_per_worker:
            log.info("benchmarking %d worker(s) x %d env(s)", workers, per)
            rows += benchmark_resets(OrchestratorConfig(workers, per), env_spec, args.resets, args.repeats)
    try:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["workers", "envs_per_worker", "repeat", "seconds"])
            writer.writerows(rows)
    except OSError as e:
        raise OSError(f"cannot write {args.out}: {e.strerror or e}") from e
    for (w, m), (mean, sd) in summarize(rows).items():
        print(f"workers={w} envs_per_worker={m}: {mean:.4f} s +/- {sd:.4f}", file=sys.stderr)
    return EXIT_OK


def _resolve_checkpoint(path: Path) -> Path:
    if path.is_dir():
        pointer = path / "checkpoints" / "latest"
        if not pointer.exists():
            raise UsageError(f"{path} has no checkpoints/latest pointer")
        return path / "checkpoints" / pointer.read_text().strip()
    if not path.exists():
        raise UsageError(f"checkpoint {path} does not exist")
    return path


def cmd_evaluate(args) -> int:
    config, _ = _read_config(args.config)
    cfg = ExperimentConfig.from_dict(config)
    env_spec = make_env_spec(cfg.env_config)
    agent = make_agent(cfg.agent_config, env_spec)
    try:
        agent.load(_resolve_checkpoint(args.checkpoint))
    except (ValueError, KeyError) as e:
        raise UsageError(str(e)) from e
    result = evaluate(agent, env_spec, args.episodes, args.seed)
    print(f"success_ratio {result.success_ratio:.4f}")
    print("episode\tsuccess\treturn\tlength")
    for row in result.episodes:
        print(f"{row['episode']}\t{int(row['success'])}\t{row['episode_return']:.1f}\t{row['episode_length']}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "benchmark": cmd_benchmark, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

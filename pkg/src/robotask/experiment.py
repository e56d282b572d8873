"""Experiment coordinator: collect experience, feed the agent, test, log, checkpoint.

Results directory layout::

    config.json             the configuration exactly as given
    metrics.jsonl           one record per finished train or test episode
    summary.csv             one row per test phase
    checkpoints/step_<n>.npz
    checkpoints/latest      name of the newest checkpoint
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .agents import make_agent
from .core import ConfigError, RngStream, Trajectory, Transition
from .env import make_env_spec
from .orchestrator import Orchestrator, OrchestratorConfig, Reset, Step

log = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    "total_timesteps", "test_interval", "test_episodes", "seed", "agent_config", "env_config",
    "orchestrator_config", "updates_per_step", "stop_success_ratio",
}


def _int(cfg, key, default, path, minimum=0):
    value = cfg.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}{key}", f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}{key}", f"must be >= {minimum}, got {value}")
    return value


@dataclass
class ExperimentConfig:
    total_timesteps: int
    test_interval: int
    agent_config: dict
    env_config: dict
    test_episodes: int = 100
    seed: int = 0
    orchestrator_config: dict = field(default_factory=dict)
    updates_per_step: float = 1.0
    stop_success_ratio: float | None = None

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        if not isinstance(cfg, dict):
            raise ConfigError("", "configuration must be a JSON object")
        unknown = set(cfg) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        for key in ("total_timesteps", "agent_config", "env_config"):
            if key not in cfg:
                raise ConfigError(key, "missing required key")
        total = _int(cfg, "total_timesteps", 0, "")
        interval = _int(cfg, "test_interval", max(total, 1), "", minimum=1)
        if total > 0 and interval > total:
            raise ConfigError("test_interval", f"must not exceed total_timesteps ({total})")
        orch = cfg.get("orchestrator_config") or {}
        if not isinstance(orch, dict):
            raise ConfigError("orchestrator_config", "must be a mapping")
        extra = set(orch) - {"num_workers", "envs_per_worker", "start_method"}
        if extra:
            raise ConfigError(f"orchestrator_config.{sorted(extra)[0]}", "unknown key")
        _int(orch, "num_workers", 1, "orchestrator_config.", minimum=1)
        _int(orch, "envs_per_worker", 1, "orchestrator_config.", minimum=1)
        ups = cfg.get("updates_per_step", 1.0)
        if not isinstance(ups, (int, float)) or isinstance(ups, bool) or ups < 0:
            raise ConfigError("updates_per_step", f"expected a nonnegative number, got {ups!r}")
        stop = cfg.get("stop_success_ratio")
        if stop is not None and not (isinstance(stop, (int, float)) and 0 <= stop <= 1):
            raise ConfigError("stop_success_ratio", f"expected a number in [0, 1], got {stop!r}")
        return cls(
            total_timesteps=total,
            test_interval=interval,
            agent_config=cfg["agent_config"],
            env_config=cfg["env_config"],
            test_episodes=_int(cfg, "test_episodes", 100, "", minimum=1),
            seed=_int(cfg, "seed", 0, ""),
            orchestrator_config=dict(orch),
            updates_per_step=float(ups),
            stop_success_ratio=stop,
        )

    def test_points(self) -> list[int]:
        """Global steps at which test phases run: every interval, the last one moved to the end."""
        n = self.total_timesteps // self.test_interval
        return [k * self.test_interval for k in range(n)] + [self.total_timesteps]


class EvalResult(NamedTuple):
    success_ratio: float
    episodes: list[dict]


def evaluate(agent, env_spec, episodes: int, seed: int | RngStream = 0) -> EvalResult:
    """Run ``episodes`` deterministic-policy episodes side by side.

    Starts are drawn from ``seed``; the agent's buffers are never touched.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    root = seed if isinstance(seed, RngStream) else RngStream(int(seed), "evaluate")
    envs = [env_spec.build() for _ in range(episodes)]
    obs = [env.reset(root.child(f"episode/{i}")) for i, env in enumerate(envs)]
    returns = np.zeros(episodes)
    lengths = np.zeros(episodes, dtype=int)
    success = np.zeros(episodes, dtype=bool)
    live = list(range(episodes))
    while live:
        actions = agent.act([obs[i] for i in live], deterministic=True)
        still = []
        for i, a in zip(live, actions):
            res = envs[i].step(a)
            obs[i] = res.obs
            returns[i] += res.reward
            lengths[i] += 1
            success[i] = success[i] or res.success
            if not (res.terminal or res.truncated):
                still.append(i)
        live = still
    rows = [{"episode": i, "success": bool(success[i]), "episode_return": float(returns[i]),
             "episode_length": int(lengths[i])} for i in range(episodes)]
    return EvalResult(float(success.mean()), rows)


class _Logger:
    def __init__(self, results_dir: Path):
        self.metrics = open(results_dir / "metrics.jsonl", "w")
        self.summary_fh = open(results_dir / "summary.csv", "w", newline="")
        self.summary = csv.writer(self.summary_fh)
        self.summary.writerow(["global_step", "success_ratio", "mean_return", "mean_length", "episodes"])

    def record(self, rec: dict) -> None:
        self.metrics.write(json.dumps(rec) + "\n")

    def test_phase(self, step: int, result: EvalResult) -> None:
        for row in result.episodes:
            self.record({"global_step": step, "phase": "test", **row})
        rets = [r["episode_return"] for r in result.episodes]
        lens = [r["episode_length"] for r in result.episodes]
        self.summary.writerow([step, result.success_ratio, float(np.mean(rets)), float(np.mean(lens)),
                               len(result.episodes)])
        self.metrics.flush()
        self.summary_fh.flush()

    def close(self):
        self.metrics.close()
        self.summary_fh.close()


def _prepare_dir(results_dir) -> Path:
    path = Path(results_dir)
    try:
        (path / "checkpoints").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create results directory {path}: {e}") from e
    if not os.access(path, os.W_OK):
        raise OSError(f"results directory {path} is not writable")
    return path


def run(config: dict, results_dir, config_text: str | None = None) -> float:
    """Train and test as configured; returns the success ratio of the last test phase.

    ``config_text`` is the original file content; when given it is stored
    byte for byte, otherwise the dict is serialized.
    """
    cfg = ExperimentConfig.from_dict(config)
    env_spec = make_env_spec(cfg.env_config)
    root = RngStream(cfg.seed, "experiment")
    agent = make_agent(cfg.agent_config, env_spec, seed=root.child("agent").child_seed())
    try:
        orch_cfg = OrchestratorConfig(**cfg.orchestrator_config)
    except ValueError as e:
        raise ConfigError("orchestrator_config", str(e)) from e

    path = _prepare_dir(results_dir)
    with open(path / "config.json", "w", newline="") as fh:
        fh.write(config_text if config_text is not None else json.dumps(config, indent=2) + "\n")

    logger = _Logger(path)
    test_points = cfg.test_points()
    last_ratio = 0.0
    global_step = 0

    def test_phase(step):
        nonlocal last_ratio
        result = evaluate(agent, env_spec, cfg.test_episodes, root.child(f"test/{step}"))
        logger.test_phase(step, result)
        ckpt = path / "checkpoints" / f"step_{step}.npz"
        agent.save(ckpt)
        (path / "checkpoints" / "latest").write_text(ckpt.name + "\n")
        last_ratio = result.success_ratio
        log.info("step %d: test success ratio %.3f", step, last_ratio)
        return cfg.stop_success_ratio is not None and last_ratio >= cfg.stop_success_ratio

    try:
        if cfg.total_timesteps == 0:
            test_phase(0)
            return last_ratio
        with Orchestrator(orch_cfg, env_spec) as orch:
            ids = orch.env_ids
            episode_count = {e: 0 for e in ids}
            current = {}
            partial = {e: [] for e in ids}
            diagnostics: dict = {}
            learn_credit = 0.0

            def reset(env_ids):
                for e in env_ids:
                    stream = root.child(f"env/{e}/episode/{episode_count[e]}")
                    episode_count[e] += 1
                    orch.send(Reset(e, stream))
                for resp in orch.receive_all():
                    current[resp.env_id] = resp.result
                    partial[resp.env_id] = []

            def finish(e, success):
                traj = Trajectory(e, partial[e], success)
                agent.observe_trajectory(traj)
                logger.record({
                    "global_step": global_step, "phase": "train", "env_id": str(e),
                    "episode_return": float(sum(t.reward for t in traj.transitions)),
                    "episode_length": len(traj), "success": bool(success), **diagnostics,
                })

            reset(ids)
            success_flags = {e: False for e in ids}
            if test_points[0] == 0 and len(test_points) > 1:
                stop = test_phase(0)
                test_points = test_points[1:]
                if stop:
                    return last_ratio
            for point in test_points:
                while global_step < point:
                    active = ids[: point - global_step]
                    actions = agent.act([current[e] for e in active], deterministic=False)
                    for e, a in zip(active, actions):
                        orch.send(Step(e, a))
                    done = []
                    for resp in orch.receive_all():
                        e, res = resp.env_id, resp.result
                        partial[e].append(Transition(current[e], np.asarray(actions[active.index(e)]),
                                                     res.reward, res.obs, res.terminal, res.truncated))
                        current[e] = res.obs
                        success_flags[e] = success_flags[e] or res.success
                        global_step += 1
                        if res.terminal or res.truncated:
                            done.append(e)
                    for e in done:
                        finish(e, success_flags[e])
                        success_flags[e] = False
                    if agent.on_policy:
                        if agent.ready():
                            diagnostics = agent.learn()
                    else:
                        learn_credit += len(active) * cfg.updates_per_step
                        if not agent.ready():
                            learn_credit = 0.0
                        while learn_credit >= 1.0 and agent.ready():
                            diagnostics = agent.learn()
                            learn_credit -= 1.0
                    if done:
                        reset(done)
                # close running episodes so logged lengths add up to global_step
                open_eps = [e for e in ids if partial[e]]
                for e in open_eps:
                    last = partial[e][-1]
                    partial[e][-1] = Transition(last.obs, last.action, last.reward, last.next_obs,
                                                last.terminal, True)
                    finish(e, success_flags[e])
                    success_flags[e] = False
                if open_eps:
                    reset(open_eps)
                if test_phase(global_step):
                    break
    finally:
        logger.close()
    return last_ratio


class Experiment:
    """Thin object wrapper: ``Experiment(config).run(results_dir="./results")``."""

    def __init__(self, config: dict, config_text: str | None = None):
        ExperimentConfig.from_dict(config)
        self.config = config
        self.config_text = config_text

    def run(self, results_dir) -> float:
        return run(self.config, results_dir, self.config_text)

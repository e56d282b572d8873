import csv
import json

import numpy as np
import pytest

from robotask.agents import make_agent
from robotask.core import ConfigError, Observation, StepResult
from robotask.env import make_env_spec
from robotask.experiment import Experiment, ExperimentConfig, evaluate, run

SMALL_SAC = {"name": "sac", "hidden": [16, 16], "batch_size": 16, "warmup_factor": 2}


def config(total=300, interval=100, agent=None, **extra):
    return {
        "total_timesteps": total,
        "test_interval": interval,
        "test_episodes": 3,
        "seed": 4,
        "agent_config": agent or dict(SMALL_SAC),
        "env_config": {"robot_config": {"name": "planar2"}, "task_config": {"name": "reach", "max_steps": 30}},
        **extra,
    }


def records(results):
    with open(results / "metrics.jsonl") as fh:
        return [json.loads(line) for line in fh]


class StubEnv:
    def reset(self, rng):
        return Observation([0.0], [], [0.0], [0.0])

    def step(self, action):
        o = Observation([0.0], [], [0.0], [0.0])
        return StepResult(o, 0.0, True, False, True)


class StubSpec:
    def build(self):
        return StubEnv()


class ZeroAgent:
    def act(self, obs, deterministic=False):
        return np.zeros((len(obs), 1))


class RandomAgent:
    def __init__(self, dim):
        self.rng, self.dim = np.random.default_rng(0), dim

    def act(self, obs, deterministic=False):
        return self.rng.uniform(-1, 1, (len(obs), self.dim))


def test_test_points():
    cfg = ExperimentConfig.from_dict(config(1000, 300))
    assert cfg.test_points() == [0, 300, 600, 1000]
    assert ExperimentConfig.from_dict(config(1000, 250)).test_points() == [0, 250, 500, 750, 1000]


def test_zero_budget_is_a_single_test_phase(tmp_path):
    run(config(total=0, interval=1), tmp_path)
    recs = records(tmp_path)
    assert {r["phase"] for r in recs} == {"test"} and len(recs) == 3
    assert (tmp_path / "checkpoints" / "step_0.npz").exists()


def test_phase_count_and_step_accounting(tmp_path):
    run(config(total=250, interval=100), tmp_path)
    recs = records(tmp_path)
    steps = [r["global_step"] for r in recs]
    assert steps == sorted(steps)
    phases = sorted({r["global_step"] for r in recs if r["phase"] == "test"})
    assert len(phases) == 250 // 100 + 1 and phases[-1] == 250
    for p in phases:
        trained = sum(r["episode_length"] for r in recs if r["phase"] == "train" and r["global_step"] <= p)
        assert trained == p
    with open(tmp_path / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == len(phases)
    assert (tmp_path / "checkpoints" / "latest").read_text().strip() == "step_250.npz"
    for p in phases:
        assert (tmp_path / "checkpoints" / f"step_{p}.npz").exists()


def test_parallel_workers_keep_accounting(tmp_path):
    cfg = config(total=200, interval=100, orchestrator_config={"num_workers": 2, "envs_per_worker": 3})
    run(cfg, tmp_path)
    recs = records(tmp_path)
    assert sum(r["episode_length"] for r in recs if r["phase"] == "train") == 200
    assert len({r["env_id"] for r in recs if r["phase"] == "train"}) == 6


def test_evaluation_never_inserts_experience():
    spec = make_env_spec({"robot_config": {"name": "planar2"}, "task_config": {"name": "reach"}})
    agent = make_agent(dict(SMALL_SAC), spec)
    evaluate(agent, spec, 5, seed=0)
    assert len(agent.buffer) == 0


def test_evaluate_oracles():
    assert evaluate(ZeroAgent(), StubSpec(), 7).success_ratio == 1.0
    spec = make_env_spec({"robot_config": {"name": "planar2"},
                          "task_config": {"name": "reach", "success_threshold": 1e-6}})
    assert evaluate(RandomAgent(spec.action_dim), spec, 20, seed=1).success_ratio <= 0.05
    with pytest.raises(ValueError):
        evaluate(ZeroAgent(), StubSpec(), 0)


def test_logged_test_records_reproduce_ratio(tmp_path):
    ratio = run(config(total=200, interval=100), tmp_path)
    last = [r for r in records(tmp_path) if r["phase"] == "test" and r["global_step"] == 200]
    assert ratio == pytest.approx(np.mean([r["success"] for r in last]))


def test_runs_are_reproducible(tmp_path):
    cfg = config(total=400, interval=200)
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_config_text_is_stored_verbatim(tmp_path):
    text = json.dumps(config(total=0, interval=1), indent=3) + "\n\n"
    Experiment(json.loads(text), text).run(tmp_path)
    assert (tmp_path / "config.json").read_text() == text


@pytest.mark.parametrize("mutate,path", [
    (lambda c: c.update(total_timesteps="10"), "total_timesteps"),
    (lambda c: c.update(test_interval=1000), "test_interval"),
    (lambda c: c.update(learning_rate=1), "learning_rate"),
    (lambda c: c.pop("env_config"), "env_config"),
    (lambda c: c["env_config"]["robot_config"].update(name="pandas"), "env_config.robot_config.name"),
    (lambda c: c["agent_config"].update(name="sca"), "agent_config.name"),
    (lambda c: c["agent_config"].update(buffer={"type": "ring"}), "agent_config.buffer.type"),
    (lambda c: c.update(orchestrator_config={"num_workers": 0}), "orchestrator_config.num_workers"),
])
def test_config_errors_name_the_key_path(mutate, path, tmp_path):
    cfg = config()
    mutate(cfg)
    with pytest.raises(ConfigError) as e:
        run(cfg, tmp_path)
    assert e.value.path == path


def test_unwritable_results_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run(config(total=0, interval=1), blocker / "sub")


@pytest.mark.parametrize("agent", [
    {"name": "ddpg", "hidden": [16, 16], "batch_size": 16, "warmup_factor": 2},
    {"name": "dqn", "hidden": [16, 16], "batch_size": 16, "warmup_factor": 2,
     "buffer": {"type": "priority", "capacity": 1024}},
    {"name": "ppo", "hidden": [16, 16], "horizon": 64, "minibatch_size": 32, "epochs": 2},
    {"name": "sac", "hidden": [16, 16], "batch_size": 16, "warmup_factor": 2,
     "her": {"enabled": True, "strategy": "future", "k_future": 2}},
])
def test_every_agent_runs_end_to_end(agent, tmp_path):
    ratio = run(config(total=200, interval=100, agent=agent), tmp_path)
    assert 0.0 <= ratio <= 1.0
    assert any("td_error" in r or "policy_loss" in r for r in records(tmp_path) if r["phase"] == "train")


def test_early_stop_on_success_ratio(tmp_path):
    cfg = config(total=300, interval=100, stop_success_ratio=0.0)
    run(cfg, tmp_path)
    assert {r["phase"] for r in records(tmp_path)} == {"test"}

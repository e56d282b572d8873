import os
import time

import numpy as np
import pytest

from robotask.core import ContractError, EnvId, RngStream
from robotask.env import make_env_spec
from robotask.orchestrator import (
    BenchmarkRow,
    Orchestrator,
    OrchestratorConfig,
    Reset,
    Step,
    SyntheticEnvSpec,
    benchmark_resets,
    summarize,
    time_resets,
)

FREE = SyntheticEnvSpec(reset_cost=0.0)


class FailingEnv:
    def reset(self, rng):
        raise ValueError("boom on reset")


class FailingSpec:
    def build(self):
        return FailingEnv()


class DyingEnv:
    def reset(self, rng):
        os._exit(3)


class DyingSpec:
    def build(self):
        return DyingEnv()


class UnbuildableSpec:
    def build(self):
        raise OSError("no simulator")


def reach_spec():
    return make_env_spec({"robot_config": {"name": "planar2"}, "task_config": {"name": "reach"}})


@pytest.mark.parametrize("workers,per,count", [(1, 1, 1), (4, 8, 32)])
def test_env_id_cardinality(workers, per, count):
    with Orchestrator(OrchestratorConfig(workers, per), FREE) as orch:
        assert len(orch.env_ids) == len(set(orch.env_ids)) == count


def test_shutdown_joins_promptly():
    orch = Orchestrator(OrchestratorConfig(2, 2), FREE)
    start = time.monotonic()
    orch.shutdown()
    assert time.monotonic() - start < 5.0
    assert not any(orch.alive)
    orch.shutdown()  # idempotent


def test_contract_violations_are_rejected():
    with Orchestrator(OrchestratorConfig(1, 2), FREE) as orch:
        with pytest.raises(ContractError):
            orch.receive()
        orch.send(Reset(EnvId(0, 0), RngStream(0)))
        with pytest.raises(ContractError):
            orch.send(Reset(EnvId(0, 0), RngStream(0)))
        with pytest.raises(ContractError):
            orch.send(Reset(EnvId(1, 0), RngStream(0)))
        assert orch.receive(timeout=5).env_id == EnvId(0, 0)


def test_reset_conservation():
    with Orchestrator(OrchestratorConfig(3, 3), FREE) as orch:
        for e in orch.env_ids:
            orch.send(Reset(e, RngStream(1, str(e))))
        got = [r.env_id for r in orch.receive_all(timeout=10)]
        assert got == orch.env_ids and orch.outstanding == 0


def _serial_trajectory(spec, seed_label, actions):
    env = spec.build()
    obs = [env.reset(RngStream(5, seed_label))]
    for a in actions:
        res = env.step(a)
        obs.append(res.obs)
        if res.terminal or res.truncated:
            break
    return obs


def test_serial_equivalence_32_envs_100_rounds():
    spec = reach_spec()
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1, 1, (32, 100, spec.action_dim))
    with Orchestrator(OrchestratorConfig(4, 8), spec) as orch:
        ids = orch.env_ids
        traj = {e: [] for e in ids}
        live = set(ids)
        for e in ids:
            orch.send(Reset(e, RngStream(5, str(e))))
        for r in orch.receive_all(timeout=30):
            traj[r.env_id].append(r.result)
        for t in range(100):
            for k, e in enumerate(ids):
                if e in live:
                    orch.send(Step(e, actions[k, t]))
            # arrival order is arbitrary; content must not depend on it
            while orch.outstanding:
                r = orch.receive(timeout=30)
                traj[r.env_id].append(r.result.obs)
                if r.result.terminal or r.result.truncated:
                    live.discard(r.env_id)
    for k, e in enumerate(ids):
        serial = _serial_trajectory(spec, str(e), actions[k])
        assert len(serial) == len(traj[e])
        assert all(a == b for a, b in zip(serial, traj[e]))


def test_worker_exception_surfaces_with_traceback():
    with Orchestrator(OrchestratorConfig(1, 1), FailingSpec()) as orch:
        orch.send(Reset(EnvId(0, 0), RngStream(0)))
        with pytest.raises(RuntimeError, match="boom on reset"):
            orch.receive(timeout=5)


def test_worker_death_is_reported():
    with Orchestrator(OrchestratorConfig(1, 1), DyingSpec()) as orch:
        orch.send(Reset(EnvId(0, 0), RngStream(0)))
        with pytest.raises(RuntimeError, match="died"):
            orch.receive(timeout=5)


def test_build_failure_is_reported():
    with pytest.raises(RuntimeError, match="no simulator"):
        Orchestrator(OrchestratorConfig(2, 1), UnbuildableSpec())


def test_receive_timeout():
    with Orchestrator(OrchestratorConfig(1, 1), SyntheticEnvSpec(reset_cost=0.5)) as orch:
        orch.send(Reset(EnvId(0, 0), RngStream(0)))
        with pytest.raises(TimeoutError):
            orch.receive(timeout=0.05)
        orch.receive(timeout=5)


def test_single_worker_wall_clock_lower_bound():
    cost = 0.005
    with Orchestrator(OrchestratorConfig(1, 1), SyntheticEnvSpec(reset_cost=cost)) as orch:
        assert time_resets(orch, 50) >= 50 * cost


def test_command_counts_balance_under_soak():
    n_commands = 20_000
    counts = {}
    with Orchestrator(OrchestratorConfig(2, 4), FREE) as orch:
        sent = 0
        for e in orch.env_ids:
            orch.send(Reset(e, RngStream(0)))
            counts[e] = 1
            sent += 1
        received = 0
        while received < sent:
            r = orch.receive(timeout=10)
            received += 1
            counts[r.env_id] -= 1
            if sent < n_commands:
                orch.send(Step(r.env_id, np.zeros(1)))
                counts[r.env_id] += 1
                sent += 1
    assert received == n_commands and all(v == 0 for v in counts.values())


def test_benchmark_rows_and_summary():
    rows = benchmark_resets(OrchestratorConfig(2, 2), SyntheticEnvSpec(reset_cost=0.001), 20, 3)
    assert [r.repeat for r in rows] == [0, 1, 2]
    assert all(isinstance(r, BenchmarkRow) and r.seconds > 0 for r in rows)
    mean, sd = summarize(rows)[(2, 2)]
    assert mean == pytest.approx(np.mean([r.seconds for r in rows])) and sd >= 0

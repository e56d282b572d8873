"""Run many environment copies in worker processes, addressed by :class:`EnvId`.

Each worker process owns ``envs_per_worker`` environments. With more than
one, a worker serves them from a small thread pool so that environments
blocked on I/O or sleeps overlap. All traffic is message passing over one
duplex pipe per worker; environments never share state.
"""

from __future__ import annotations

import collections
import logging
import multiprocessing as mp
import statistics
import threading
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from multiprocessing.connection import wait
from typing import Any, NamedTuple

import numpy as np

from .core import ContractError, EnvId, Observation, RngStream, StepResult

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrchestratorConfig:
    num_workers: int = 1
    envs_per_worker: int = 1
    start_method: str | None = None

    def __post_init__(self):
        if self.num_workers < 1 or self.envs_per_worker < 1:
            raise ValueError("num_workers and envs_per_worker must be >= 1")

    @property
    def total_envs(self) -> int:
        return self.num_workers * self.envs_per_worker


@dataclass(frozen=True)
class Reset:
    env_id: EnvId
    rng: RngStream


@dataclass(frozen=True)
class Step:
    env_id: EnvId
    action: Any


class Shutdown:
    pass


class EnvResponse(NamedTuple):
    env_id: EnvId
    result: Observation | StepResult


_INIT_OK = "ready"


def _worker_main(worker_index, env_spec, n_envs, conn):
    send_lock = threading.Lock()

    def reply(msg):
        with send_lock:
            conn.send(msg)

    try:
        envs = [env_spec.build() for _ in range(n_envs)]
    except Exception:
        reply(("init_error", traceback.format_exc()))
        return
    reply((_INIT_OK, worker_index))

    def handle(cmd):
        env = envs[cmd.env_id.slot_index]
        try:
            if isinstance(cmd, Reset):
                result = env.reset(cmd.rng)
            else:
                result = env.step(cmd.action)
        except Exception:
            reply(("error", cmd.env_id, traceback.format_exc()))
            return
        reply(("ok", cmd.env_id, result))

    pool = ThreadPoolExecutor(n_envs) if n_envs > 1 else None
    try:
        while True:
            try:
                cmd = conn.recv()
            except EOFError:
                break
            if isinstance(cmd, Shutdown):
                break
            if pool is None:
                handle(cmd)
            else:
                pool.submit(handle, cmd)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
        conn.close()


class Orchestrator:
    """Coordinator-side handle: ``send`` commands, ``receive`` responses in arrival order."""

    def __init__(self, config: OrchestratorConfig, env_spec, startup_timeout: float = 60.0):
        self.config = config
        method = config.start_method
        if method is None:
            method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        ctx = mp.get_context(method)
        self.env_ids = [EnvId(w, s) for w in range(config.num_workers) for s in range(config.envs_per_worker)]
        self._conns, self._procs = [], []
        self._outstanding: set[EnvId] = set()
        self._ready = collections.deque()
        self._closed = False
        try:
            for w in range(config.num_workers):
                parent, child = ctx.Pipe(duplex=True)
                proc = ctx.Process(target=_worker_main, args=(w, env_spec, config.envs_per_worker, child),
                                   daemon=True, name=f"env-worker-{w}")
                proc.start()
                child.close()
                self._conns.append(parent)
                self._procs.append(proc)
            for w, conn in enumerate(self._conns):
                if not conn.poll(startup_timeout):
                    raise RuntimeError(f"worker {w} did not start within {startup_timeout} s")
                msg = conn.recv()
                if msg[0] != _INIT_OK:
                    raise RuntimeError(f"worker {w} failed to build its environments:\n{msg[1]}")
        except Exception:
            self.shutdown()
            raise

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()

    @property
    def outstanding(self) -> int:
        return len(self._outstanding)

    def send(self, command: Reset | Step) -> None:
        env_id = command.env_id
        if env_id in self._outstanding:
            raise ContractError(f"env {env_id} already has an unanswered command")
        if not (0 <= env_id.worker_index < len(self._conns)
                and 0 <= env_id.slot_index < self.config.envs_per_worker):
            raise ContractError(f"unknown env id {env_id}")
        self._conns[env_id.worker_index].send(command)
        self._outstanding.add(env_id)

    def receive(self, timeout: float | None = None) -> EnvResponse:
        if not self._outstanding and not self._ready:
            raise ContractError("receive() called with no outstanding commands")
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self._ready:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            ready = wait(self._conns, remaining)
            if not ready:
                raise TimeoutError(f"no response within {timeout} s")
            for conn in ready:
                try:
                    msg = conn.recv()
                except EOFError:
                    w = self._conns.index(conn)
                    raise RuntimeError(f"worker {w} died (exit code {self._procs[w].exitcode})") from None
                if msg[0] == "error":
                    raise RuntimeError(f"env {msg[1]} raised in its worker:\n{msg[2]}")
                self._ready.append(EnvResponse(msg[1], msg[2]))
        response = self._ready.popleft()
        self._outstanding.discard(response.env_id)
        return response

    def receive_all(self, timeout: float | None = None) -> list[EnvResponse]:
        """Drain every outstanding command; responses sorted by env id."""
        out = []
        while self._outstanding or self._ready:
            out.append(self.receive(timeout))
        return sorted(out, key=lambda r: (r.env_id.worker_index, r.env_id.slot_index))

    def shutdown(self, timeout: float = 5.0) -> None:
        if self._closed:
            return
        self._closed = True
        for conn in self._conns:
            try:
                conn.send(Shutdown())
            except (OSError, BrokenPipeError):
                pass
        for proc in self._procs:
            proc.join(timeout)
            if proc.is_alive():
                log.warning("worker %s did not exit; terminating", proc.name)
                proc.terminate()
                proc.join(1.0)
        for conn in self._conns:
            conn.close()

    @property
    def alive(self) -> list[bool]:
        return [p.is_alive() for p in self._procs]


def orchestrator_start(config: OrchestratorConfig, env_spec) -> Orchestrator:
    return Orchestrator(config, env_spec)


# ---------------------------------------------------------------- benchmarking

class SyntheticEnv:
    """Goal-free stand-in whose reset and step cost a fixed wall-clock time."""

    def __init__(self, spec: "SyntheticEnvSpec"):
        self.spec = spec
        self.action_dim = 1
        self.obs_dim = 2

    def _spend(self, seconds):
        if seconds <= 0:
            return
        if self.spec.mode == "sleep":
            time.sleep(seconds)
        else:
            end = time.perf_counter() + seconds
            while time.perf_counter() < end:
                pass

    def _obs(self):
        return Observation(np.zeros(1), np.zeros(0), np.zeros(1), np.zeros(1))

    def reset(self, rng):
        self._spend(self.spec.reset_cost)
        return self._obs()

    def step(self, action):
        self._spend(self.spec.step_cost)
        return StepResult(self._obs(), 0.0, False, False, False)


@dataclass(frozen=True)
class SyntheticEnvSpec:
    """``mode='sleep'`` models wait-bound envs, ``mode='busy'`` CPU-bound ones."""

    reset_cost: float = 0.005
    step_cost: float = 0.0
    mode: str = "sleep"

    def __post_init__(self):
        if self.mode not in ("sleep", "busy"):
            raise ValueError("mode must be 'sleep' or 'busy'")

    def build(self) -> SyntheticEnv:
        return SyntheticEnv(self)


class BenchmarkRow(NamedTuple):
    workers: int
    envs_per_worker: int
    repeat: int
    seconds: float


def time_resets(orch: Orchestrator, n_resets: int, seed: int = 0) -> float:
    """Wall clock for ``n_resets`` resets spread over every env of ``orch``."""
    if n_resets < 1:
        raise ValueError("n_resets must be >= 1")
    root = RngStream(seed, "benchmark")
    sent = 0
    start = time.perf_counter()
    for env_id in orch.env_ids[:n_resets]:
        orch.send(Reset(env_id, root.child(f"{sent}")))
        sent += 1
    done = 0
    while done < n_resets:
        resp = orch.receive()
        done += 1
        if sent < n_resets:
            orch.send(Reset(resp.env_id, root.child(f"{sent}")))
            sent += 1
    return time.perf_counter() - start


def benchmark_resets(config: OrchestratorConfig, env_spec, n_resets: int = 1000,
                     repeats: int = 10) -> list[BenchmarkRow]:
    """Time ``repeats`` rounds of ``n_resets`` resets with one orchestrator."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    with Orchestrator(config, env_spec) as orch:
        for r in range(repeats):
            secs = time_resets(orch, n_resets, seed=r)
            rows.append(BenchmarkRow(config.num_workers, config.envs_per_worker, r, secs))
    return rows


def summarize(rows) -> dict[tuple[int, int], tuple[float, float]]:
    """Mean and standard deviation of seconds per (workers, envs_per_worker)."""
    groups = collections.defaultdict(list)
    for row in rows:
        groups[(row.workers, row.envs_per_worker)].append(row.seconds)
    return {k: (statistics.fmean(v), statistics.pstdev(v)) for k, v in groups.items()}

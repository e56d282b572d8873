"""Shared value types and seeded random streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Observation:
    """Agent-visible state with the goal split off from the rest.

    Reward and success are functions of ``(achieved_goal, desired_goal)`` only,
    which is what makes hindsight relabeling a pure rewrite of this object.
    """

    robot_state: np.ndarray
    task_state: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray

    def __post_init__(self):
        for name in ("robot_state", "task_state", "achieved_goal", "desired_goal"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.achieved_goal.shape != self.desired_goal.shape:
            raise ValueError(
                f"goal dimension mismatch: {self.achieved_goal.shape} vs {self.desired_goal.shape}"
            )

    def flat(self) -> np.ndarray:
        """Network input: robot state, task state, achieved goal, desired goal."""
        return np.concatenate(
            [self.robot_state, self.task_state, self.achieved_goal, self.desired_goal]
        )

    def with_goal(self, desired_goal) -> "Observation":
        return replace(self, desired_goal=desired_goal)

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("robot_state", "task_state", "achieved_goal", "desired_goal")
        )

    __hash__ = None


@dataclass(frozen=True)
class EnvId:
    worker_index: int
    slot_index: int

    def __str__(self):
        return f"{self.worker_index}/{self.slot_index}"


@dataclass(frozen=True, eq=False)
class Transition:
    obs: Observation
    action: np.ndarray
    reward: float
    next_obs: Observation
    terminal: bool = False
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "action", _frozen(np.atleast_1d(self.action)))

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        return (
            self.obs == other.obs
            and np.array_equal(self.action, other.action)
            and self.reward == other.reward
            and self.next_obs == other.next_obs
            and self.terminal == other.terminal
            and self.truncated == other.truncated
        )

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    env_id: EnvId | None
    transitions: tuple[Transition, ...]
    success: bool = False

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))

    def __len__(self):
        return len(self.transitions)

    def check_chaining(self):
        """Raise ``ValueError`` unless the trajectory is a single valid episode."""
        ts = self.transitions
        for k in range(len(ts) - 1):
            if not ts[k].next_obs == ts[k + 1].obs:
                raise ValueError(f"broken chaining between transitions {k} and {k + 1}")
            if ts[k].terminal or ts[k].truncated:
                raise ValueError(f"transition {k} ends the episode but is not last")


class StepResult(NamedTuple):
    obs: Observation
    reward: float
    terminal: bool
    truncated: bool
    success: bool


@dataclass(frozen=True)
class RngStream:
    """A named, seeded random stream.

    Draws come from a counter-based Philox generator keyed by a hash of
    ``(seed, label)``, so the sequence is identical on every platform and does
    not depend on how work is split across workers.
    """

    seed: int
    label: str = ""
    _key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        digest = hashlib.blake2b(
            f"{self.seed}\x1f{self.label}".encode(), digest_size=16
        ).digest()
        object.__setattr__(self, "_key", int.from_bytes(digest, "little"))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(key=self._key))

    def child(self, label: str) -> "RngStream":
        return derive_stream(self, label)

    def child_seed(self) -> int:
        """A 63-bit integer usable as a plain seed for this stream."""
        return self._key & ((1 << 63) - 1)


def derive_stream(root: RngStream, label: str) -> RngStream:
    if not label:
        raise ValueError("stream label must be nonempty")
    full = f"{root.label}/{label}" if root.label else label
    return RngStream(root.seed, full)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ContractError(RuntimeError):
    """A caller broke an operation's usage contract."""

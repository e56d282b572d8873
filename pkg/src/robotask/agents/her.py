"""Hindsight relabeling of finished trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Trajectory, Transition


@dataclass(frozen=True)
class HerConfig:
    enabled: bool = False
    strategy: str = "final"
    k_future: int = 4

    def __post_init__(self):
        if self.strategy not in ("final", "future"):
            raise ValueError(f"unknown HER strategy {self.strategy!r}; valid: final, future")
        if self.k_future < 1:
            raise ValueError("k_future must be >= 1")


def relabel_transition(t: Transition, goal, reward_fn, success_fn, terminate_on_success=True) -> Transition:
    """Swap in ``goal`` as the desired goal and recompute reward and terminal from it."""
    next_obs = t.next_obs.with_goal(goal)
    reward = float(reward_fn(next_obs.achieved_goal, goal))
    terminal = bool(success_fn(next_obs.achieved_goal, goal)) and terminate_on_success
    return Transition(
        obs=t.obs.with_goal(goal),
        action=t.action,
        reward=reward,
        next_obs=next_obs,
        terminal=terminal,
        truncated=t.truncated and not terminal,
    )


def relabel(trajectory: Trajectory, config: HerConfig, reward_fn, success_fn,
            terminate_on_success: bool = True, rng: np.random.Generator | None = None) -> list[Transition]:
    """Extra transitions whose desired goal is a goal that was actually reached.

    ``final`` rewrites every step with the last achieved goal of the episode.
    ``future`` does that and adds, for each step, ``k_future`` copies whose
    goal is the achieved goal of a uniformly drawn step at or after it.
    """
    ts = trajectory.transitions
    if not ts:
        return []
    final_goal = ts[-1].next_obs.achieved_goal
    out = [relabel_transition(t, final_goal, reward_fn, success_fn, terminate_on_success) for t in ts]
    if config.strategy == "future":
        rng = rng if rng is not None else np.random.default_rng()
        n = len(ts)
        for i, t in enumerate(ts):
            for j in rng.integers(i, n, config.k_future):
                goal = ts[j].next_obs.achieved_goal
                out.append(relabel_transition(t, goal, reward_fn, success_fn, terminate_on_success))
    return out

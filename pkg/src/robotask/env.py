"""Environments: the robot x task composition and an adapter for gym-style goal envs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, ContractError, Observation, RngStream, StepResult
from .robot import (
    ROBOT_NAMES,
    RobotModel,
    forward_kinematics,
    make_robot,
    robot_reset,
    robot_step,
)
from .task import (
    TASK_NAMES,
    TaskSpec,
    achieved_goal_of,
    compute_reward,
    make_task,
    success_criterion,
    task_reset,
    task_state_vector,
    task_step,
)

GOAL_RESAMPLE_TRIES = 10


class Environment:
    """Minimal contract every environment follows.

    Subclasses provide ``reset(rng) -> Observation`` and
    ``step(action) -> StepResult``, plus the goal-only reward and success
    rules used for hindsight relabeling.
    """

    action_dim: int
    obs_dim: int

    def reset(self, rng: RngStream) -> Observation:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError


@dataclass(frozen=True)
class EnvSpec:
    robot: RobotModel
    task: TaskSpec
    randomize: bool = False
    terminate_on_success: bool = True

    def __post_init__(self):
        if self.task.needs_gripper and not self.robot.has_gripper:
            raise ValueError(f"task {self.task.name!r} needs a gripper but {self.robot.name!r} has none")

    @property
    def action_dim(self) -> int:
        return self.robot.action_dim

    @property
    def goal_dim(self) -> int:
        return self.task.goal_dim

    @property
    def obs_dim(self) -> int:
        return self.robot.action_dim + self.task.state_dim + 2 * self.task.goal_dim

    @property
    def max_steps(self) -> int:
        return self.task.max_steps

    def compute_reward(self, achieved_goal, desired_goal):
        return compute_reward(achieved_goal, desired_goal, self.task)

    def is_success(self, achieved_goal, desired_goal):
        return success_criterion(achieved_goal, desired_goal, self.task)

    def build(self) -> "RobotTaskEnv":
        return RobotTaskEnv(self)


def make_env_spec(env_config: dict, path: str = "env_config") -> EnvSpec:
    """Build an :class:`EnvSpec` from an ``env_config`` tree.

    Shape: ``{"robot_config": {"name": ...}, "task_config": {"name": ...},
    "randomize": bool, "terminate_on_success": bool}``. Everything under the
    robot and task subtrees other than ``name`` is passed through as overrides.
    """
    if not isinstance(env_config, dict):
        raise ConfigError(path, "must be a mapping")
    extra = set(env_config) - {"robot_config", "task_config", "randomize", "terminate_on_success"}
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")
    robot_cfg = dict(env_config.get("robot_config") or {})
    task_cfg = dict(env_config.get("task_config") or {})
    robot_name = robot_cfg.pop("name", None)
    if robot_name not in ROBOT_NAMES:
        raise ConfigError(f"{path}.robot_config.name",
                          f"unknown robot {robot_name!r}; valid names: {', '.join(ROBOT_NAMES)}")
    task_name = task_cfg.pop("name", None)
    if task_name not in TASK_NAMES:
        raise ConfigError(f"{path}.task_config.name",
                          f"unknown task {task_name!r}; valid names: {', '.join(TASK_NAMES)}")
    try:
        robot = make_robot(robot_name, **robot_cfg)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}.robot_config", str(e)) from e
    try:
        task = make_task(task_name, robot, **task_cfg)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}.task_config", str(e)) from e
    if task.needs_gripper and not robot.has_gripper:
        robot = make_robot(robot_name, **{**robot_cfg, "gripper": True})
    try:
        return EnvSpec(robot, task,
                       randomize=bool(env_config.get("randomize", False)),
                       terminate_on_success=bool(env_config.get("terminate_on_success", True)))
    except ValueError as e:
        raise ConfigError(path, str(e)) from e


class RobotTaskEnv(Environment):
    """One robot arm paired with one task."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.action_dim = spec.action_dim
        self.obs_dim = spec.obs_dim
        self._robot_state = None
        self._task_state = None
        self._goal = None
        self._steps = 0
        self._done = True

    def _observe(self) -> Observation:
        spec = self.spec
        ee = forward_kinematics(spec.robot, self._robot_state.joint_positions)
        return Observation(
            robot_state=spec.robot.state_vector(self._robot_state),
            task_state=task_state_vector(spec.task, self._task_state),
            achieved_goal=achieved_goal_of(spec.task, ee, self._task_state),
            desired_goal=self._goal,
        )

    def reset(self, rng: RngStream) -> Observation:
        spec = self.spec
        robot_state = robot_reset(spec.robot, rng.child("robot"), spec.randomize)
        if spec.task.name == "throw":
            robot_state = replace(robot_state, gripper_aperture=0.0)
        ee = forward_kinematics(spec.robot, robot_state.joint_positions)
        task_stream = rng.child("task")
        for attempt in range(GOAL_RESAMPLE_TRIES):
            stream = task_stream if attempt == 0 else task_stream.child(f"retry/{attempt}")
            task_state, goal = task_reset(spec.task, stream, spec.randomize, ee_position=ee)
            achieved = achieved_goal_of(spec.task, ee, task_state)
            if not success_criterion(achieved, goal, spec.task):
                break
        self._robot_state, self._task_state, self._goal = robot_state, task_state, goal
        self._steps = 0
        self._done = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise ContractError("step() called on a finished episode; reset first")
        spec = self.spec
        self._robot_state = robot_step(spec.robot, self._robot_state, action)
        ee = forward_kinematics(spec.robot, self._robot_state.joint_positions)
        self._task_state = task_step(spec.task, self._task_state, ee, self._robot_state.gripper_aperture)
        self._steps += 1
        obs = self._observe()
        reward = spec.compute_reward(obs.achieved_goal, self._goal)
        success = spec.is_success(obs.achieved_goal, self._goal)
        terminal = success and spec.terminate_on_success
        truncated = self._steps >= spec.max_steps and not terminal
        self._done = terminal or truncated
        return StepResult(obs, reward, terminal, truncated, success)


class PointMass1D:
    """A tiny gym-style goal environment used to exercise :class:`GoalEnvWrapper`.

    A point on a line moves by ``0.1 * action`` per step towards a goal.
    Its API follows the familiar ``reset(seed=) / step(action)`` convention
    with dict observations.
    """

    max_episode_steps = 50
    threshold = 0.05

    def __init__(self):
        self.x = 0.0
        self.goal = 0.0
        self.t = 0

    def reset(self, seed=None):
        gen = np.random.default_rng(seed)
        self.x = float(gen.uniform(-1, 1))
        self.goal = float(gen.uniform(-1, 1))
        self.t = 0
        return self._obs(), {}

    def _obs(self):
        return {
            "observation": np.array([self.x]),
            "achieved_goal": np.array([self.x]),
            "desired_goal": np.array([self.goal]),
        }

    def compute_reward(self, achieved_goal, desired_goal, info=None):
        d = np.abs(np.asarray(achieved_goal) - np.asarray(desired_goal))[..., 0]
        return np.where(d < self.threshold, 0.0, -1.0)

    def step(self, action):
        self.x = float(np.clip(self.x + 0.1 * float(np.clip(action[0], -1, 1)), -1, 1))
        self.t += 1
        obs = self._obs()
        reward = float(self.compute_reward(obs["achieved_goal"], obs["desired_goal"]))
        terminated = reward == 0.0
        truncated = self.t >= self.max_episode_steps and not terminated
        return obs, reward, terminated, truncated, {"is_success": terminated}


@dataclass(frozen=True)
class GoalEnvWrapperSpec:
    """Picklable recipe for a wrapped external env; ``factory`` must be importable."""

    factory: type
    action_dim: int
    goal_dim: int
    obs_dim: int
    max_steps: int
    terminate_on_success: bool = True

    def build(self) -> "GoalEnvWrapper":
        return GoalEnvWrapper(self.factory(), self)

    def compute_reward(self, achieved_goal, desired_goal):
        env = self.factory()
        r = env.compute_reward(achieved_goal, desired_goal, None)
        return float(r) if np.ndim(r) == 0 else np.asarray(r, dtype=np.float64)

    def is_success(self, achieved_goal, desired_goal):
        r = self.compute_reward(achieved_goal, desired_goal)
        ok = np.asarray(r) == 0.0
        return bool(ok) if ok.ndim == 0 else ok


def point_mass_spec() -> GoalEnvWrapperSpec:
    return GoalEnvWrapperSpec(PointMass1D, action_dim=1, goal_dim=1, obs_dim=3,
                              max_steps=PointMass1D.max_episode_steps)


class GoalEnvWrapper(Environment):
    """Adapts a gym-style goal env (dict observations) to :class:`Environment`."""

    def __init__(self, env, spec: GoalEnvWrapperSpec):
        self.env = env
        self.spec = spec
        self.action_dim = spec.action_dim
        self.obs_dim = spec.obs_dim
        self._done = True

    @staticmethod
    def _convert(obs) -> Observation:
        return Observation(
            robot_state=obs["observation"],
            task_state=np.zeros(0),
            achieved_goal=obs["achieved_goal"],
            desired_goal=obs["desired_goal"],
        )

    def reset(self, rng: RngStream) -> Observation:
        obs, _ = self.env.reset(seed=rng.child_seed())
        self._done = False
        return self._convert(obs)

    def step(self, action) -> StepResult:
        if self._done:
            raise ContractError("step() called on a finished episode; reset first")
        obs, reward, terminated, truncated, info = self.env.step(np.asarray(action, dtype=np.float64))
        success = bool(info.get("is_success", reward == 0.0))
        terminal = bool(terminated) and self.spec.terminate_on_success
        truncated = bool(truncated) and not terminal
        self._done = bool(terminated or truncated)
        return StepResult(self._convert(obs), float(reward), terminal, truncated, success)

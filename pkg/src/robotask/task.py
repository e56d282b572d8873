"""Reach, pick-and-place and throw tasks.

A task owns the objects around the arm, decides what counts as the achieved
goal, and supplies the reward and success rules. Both rules are pure
functions of an (achieved, desired) goal pair so trajectories can be
relabeled after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .core import RngStream
from .robot import RobotModel

TASK_NAMES = ("reach", "pick_place", "throw")
RELEASE_APERTURE = 0.5


@dataclass(frozen=True)
class TaskSpec:
    name: str
    workspace: tuple[tuple[float, float, float], tuple[float, float, float]]
    max_steps: int = 100
    success_threshold: float = 0.05
    reward_mode: str = "sparse"
    grasp_radius: float = 0.05
    dt: float = 1.0 / 240.0
    substeps: int = 4
    gravity_mean: float = 9.81
    gravity_sigma: float = 0.5
    # throw targets land in an annulus around the base, in units of arm reach
    throw_annulus: tuple[float, float] = (1.1, 1.5)
    base_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    reach_radius: float = 1.0

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise ValueError(f"unknown task {self.name!r}; valid names: {', '.join(TASK_NAMES)}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.success_threshold <= 0:
            raise ValueError("success_threshold must be positive")
        lo, hi = np.asarray(self.workspace[0]), np.asarray(self.workspace[1])
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo > hi):
            raise ValueError(f"workspace must be a nonempty 3-D box, got {self.workspace}")
        if self.reward_mode not in ("sparse", "dense"):
            raise ValueError(f"reward_mode must be 'sparse' or 'dense', got {self.reward_mode!r}")
        if self.substeps < 1 or self.dt <= 0:
            raise ValueError("dt and substeps must be positive")

    @property
    def step_duration(self) -> float:
        return self.dt * self.substeps

    @property
    def floor(self) -> float:
        return float(self.workspace[0][2])

    @property
    def needs_gripper(self) -> bool:
        return self.name != "reach"

    @property
    def goal_dim(self) -> int:
        return 3

    @property
    def state_dim(self) -> int:
        return 8 if self.name == "throw" else 4


@dataclass(frozen=True, eq=False)
class TaskState:
    object_position: np.ndarray
    object_velocity: np.ndarray
    object_held: bool
    target_position: np.ndarray
    effective_gravity: float
    in_flight: bool = False

    def __post_init__(self):
        if self.object_held and self.in_flight:
            raise ValueError("object cannot be held and in flight at once")


def default_workspace(robot: RobotModel):
    """A target box in front of the base, comfortably inside the arm's reach."""
    L = robot.chain_length
    planar = all(abs(j.axis[2]) == 1.0 for j in robot.joints) and all(
        o[2] == 0.0 for o in robot.link_offsets
    )
    if planar:
        return ((0.25 * L, -0.5 * L, 0.0), (0.75 * L, 0.5 * L, 0.0))
    return ((0.25 * L, -0.3 * L, 0.05), (0.5 * L, 0.3 * L, 0.4 * L))


def make_task(name: str, robot: RobotModel | None = None, **overrides) -> TaskSpec:
    """Build a task spec with defaults, scaled to ``robot`` when given."""
    known = {f.name for f in fields(TaskSpec)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown task_config keys: {sorted(unknown)}")
    kwargs = {}
    if name == "throw":
        kwargs["max_steps"] = 150
    if robot is not None:
        kwargs["workspace"] = default_workspace(robot)
        kwargs["reach_radius"] = robot.chain_length
    else:
        kwargs["workspace"] = ((-0.5, -0.5, 0.0), (0.5, 0.5, 0.5))
    kwargs.update(overrides)
    if "workspace" in overrides:
        kwargs["workspace"] = tuple(tuple(float(v) for v in corner) for corner in overrides["workspace"])
    if "throw_annulus" in overrides:
        kwargs["throw_annulus"] = tuple(overrides["throw_annulus"])
    if "base_position" in overrides:
        kwargs["base_position"] = tuple(overrides["base_position"])
    return TaskSpec(name=name, **kwargs)


def sample_target(spec: TaskSpec, gen: np.random.Generator) -> np.ndarray:
    if spec.name == "throw":
        lo, hi = spec.throw_annulus
        # uniform over the annulus area
        r = spec.reach_radius * math.sqrt(gen.uniform(lo * lo, hi * hi))
        phi = gen.uniform(-math.pi, math.pi)
        base = np.asarray(spec.base_position)
        return np.array([base[0] + r * math.cos(phi), base[1] + r * math.sin(phi), 0.0])
    lo, hi = np.asarray(spec.workspace[0]), np.asarray(spec.workspace[1])
    return gen.uniform(lo, hi)


def task_reset(spec: TaskSpec, rng: RngStream, randomize: bool = False,
               ee_position=None) -> tuple[TaskState, np.ndarray]:
    """Place objects and a fresh target. Returns ``(state, desired_goal)``.

    ``ee_position`` is where the gripper starts; the throw task spawns its
    object there.
    """
    gen = rng.generator()
    target = sample_target(spec, gen)
    zero = np.zeros(3)
    obj, held = zero, False
    if spec.name == "pick_place":
        lo, hi = np.asarray(spec.workspace[0]), np.asarray(spec.workspace[1])
        obj = gen.uniform(lo, hi)
        obj[2] = spec.floor
    elif spec.name == "throw":
        obj = np.array(ee_position if ee_position is not None else zero, dtype=np.float64)
        held = True

    gravity = spec.gravity_mean
    if randomize and spec.gravity_sigma > 0:
        gravity = float(rng.child("dr").generator().normal(spec.gravity_mean, spec.gravity_sigma))
    state = TaskState(obj, zero.copy(), held, target, gravity, False)
    return state, target.copy()


def _fly(pos, vel, g, dt, substeps, ground=0.0):
    """Exact constant-gravity flight for up to ``substeps`` intervals of ``dt``.

    Returns ``(pos, vel, landed)``. On impact the object is placed at the exact
    point where its parabola meets the ground.
    """
    pos, vel = pos.copy(), vel.copy()
    for _ in range(substeps):
        z_next = pos[2] + vel[2] * dt - 0.5 * g * dt * dt
        if z_next > ground:
            pos = pos + vel * dt
            pos[2] = z_next
            vel[2] -= g * dt
            continue
        # solve ground = z + vz*t - g t^2 / 2 for the first t in (0, dt]
        h = pos[2] - ground
        if g > 0:
            t = (vel[2] + math.sqrt(max(vel[2] * vel[2] + 2.0 * g * h, 0.0))) / g
        elif vel[2] < 0:
            t = -h / vel[2]
        else:
            t = 0.0
        t = min(max(t, 0.0), dt)
        pos = pos + vel * t
        pos[2] = ground
        return pos, np.zeros(3), True
    return pos, vel, False


def task_step(spec: TaskSpec, state: TaskState, ee_position, gripper_aperture: float) -> TaskState:
    if spec.name == "reach":
        return state
    ee = np.asarray(ee_position, dtype=np.float64)
    released = gripper_aperture >= RELEASE_APERTURE

    if spec.name == "pick_place":
        if state.object_held:
            if released:
                drop = ee.copy()
                drop[2] = spec.floor
                return replace(state, object_position=drop, object_velocity=np.zeros(3), object_held=False)
            return replace(state, object_position=ee.copy())
        if np.linalg.norm(ee - state.object_position) < spec.grasp_radius and not released:
            return replace(state, object_position=ee.copy(), object_held=True)
        return state

    # throw
    if state.object_held:
        vel = (ee - state.object_position) / spec.step_duration
        state = replace(state, object_position=ee.copy(), object_velocity=vel)
        if not released:
            return state
        state = replace(state, object_held=False, in_flight=True)
    if state.in_flight:
        pos, vel, landed = _fly(state.object_position, state.object_velocity,
                                state.effective_gravity, spec.dt, spec.substeps)
        return replace(state, object_position=pos, object_velocity=vel, in_flight=not landed)
    return state


def task_state_vector(spec: TaskSpec, state: TaskState) -> np.ndarray:
    if spec.name == "reach":
        return np.zeros(4)
    parts = [state.object_position, [float(state.object_held)]]
    if spec.name == "throw":
        parts += [state.object_velocity, [float(state.in_flight)]]
    return np.concatenate(parts)


def achieved_goal_of(spec: TaskSpec, ee_position, state: TaskState) -> np.ndarray:
    if spec.name == "reach":
        return np.array(ee_position, dtype=np.float64)
    return state.object_position.copy()


def _distance(achieved, desired):
    a = np.asarray(achieved, dtype=np.float64)
    d = np.asarray(desired, dtype=np.float64)
    if a.shape != d.shape:
        raise ValueError(f"goal dimension mismatch: {a.shape} vs {d.shape}")
    return np.linalg.norm(a - d, axis=-1)


def success_criterion(achieved_goal, desired_goal, spec: TaskSpec):
    """True iff the goals are strictly closer than the success threshold.

    Works elementwise over leading batch axes.
    """
    ok = _distance(achieved_goal, desired_goal) < spec.success_threshold
    return bool(ok) if np.ndim(ok) == 0 else ok


def compute_reward(achieved_goal, desired_goal, spec: TaskSpec):
    """Sparse: 0 on success, -1 otherwise. Dense: negative distance."""
    d = _distance(achieved_goal, desired_goal)
    if spec.reward_mode == "dense":
        r = -d
    else:
        r = np.where(d < spec.success_threshold, 0.0, -1.0)
    return float(r) if np.ndim(r) == 0 else r

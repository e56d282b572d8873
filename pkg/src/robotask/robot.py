"""Kinematic serial-chain arms with a scalar gripper.

Every joint is revolute. The end effector is found by composing, from the
base outwards, a rotation about the joint axis followed by the link offset:
``p = R1 (o1 + R2 (o2 + ... Rn on))``. Link geometry for the named industrial
arms uses nominal lengths rounded to the centimetre; it only has to produce a
plausible reachable workspace, not match the real machines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import RngStream

GRIPPER_RATE = 0.25
TWO_PI = 2.0 * math.pi
MULTIPLIER_BOUNDS = (0.1, 2.0)


@dataclass(frozen=True)
class JointSpec:
    axis: tuple[float, float, float]
    limit_lo: float
    limit_hi: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError(f"joint axis {self.axis} is not a unit vector")
        if not self.limit_lo < self.limit_hi:
            raise ValueError(f"joint limits must satisfy lo < hi, got {self.limit_lo}, {self.limit_hi}")


@dataclass(frozen=True)
class RobotRandomization:
    joint_delta_sigma: float = 0.05
    damping_mean: float = 1.0
    damping_sigma: float = 0.05

    def __post_init__(self):
        if self.joint_delta_sigma < 0 or self.damping_sigma < 0:
            raise ValueError("randomization sigmas must be nonnegative")


@dataclass(frozen=True)
class RobotModel:
    name: str
    joints: tuple[JointSpec, ...]
    link_offsets: tuple[tuple[float, float, float], ...]
    has_gripper: bool
    max_joint_delta: float
    dr: RobotRandomization = field(default_factory=RobotRandomization)

    def __post_init__(self):
        if len(self.joints) != len(self.link_offsets):
            raise ValueError("need exactly one link offset per joint")
        if self.max_joint_delta <= 0:
            raise ValueError("max_joint_delta must be positive")

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def action_dim(self) -> int:
        return self.dof + int(self.has_gripper)

    @property
    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.limit_lo for j in self.joints])
        hi = np.array([j.limit_hi for j in self.joints])
        return lo, hi

    @property
    def chain_length(self) -> float:
        return float(sum(np.linalg.norm(o) for o in self.link_offsets))

    def state_vector(self, state: "RobotState") -> np.ndarray:
        """Joint positions normalized to [-1, 1], then the gripper aperture."""
        lo, hi = self.limits
        q = 2.0 * (state.joint_positions - lo) / (hi - lo) - 1.0
        if self.has_gripper:
            q = np.append(q, state.gripper_aperture)
        return q


@dataclass(frozen=True, eq=False)
class RobotState:
    joint_positions: np.ndarray
    gripper_aperture: float
    effective_joint_delta: float
    effective_damping: np.ndarray


def _z(lo=-math.pi, hi=math.pi):
    return JointSpec((0.0, 0.0, 1.0), lo, hi)


def _y(lo=-math.pi, hi=math.pi, sign=1.0):
    return JointSpec((0.0, sign, 0.0), lo, hi)


def _planar(lengths, gripper):
    # the base turns a full circle either way so no target is blocked by a limit
    return dict(
        joints=(_z(-TWO_PI, TWO_PI),) + tuple(_z(-2.9, 2.9) for _ in lengths[1:]),
        link_offsets=tuple((float(l), 0.0, 0.0) for l in lengths),
        has_gripper=gripper,
        max_joint_delta=0.1,
    )


_MODELS = {
    "panda": lambda: dict(
        joints=(
            _z(-2.9, 2.9),
            _y(-1.76, 1.76),
            _z(-2.9, 2.9),
            _y(-3.07, -0.07, sign=-1.0),
            _z(-2.9, 2.9),
            _y(-0.02, 3.75, sign=-1.0),
            JointSpec((0.0, 0.0, -1.0), -2.9, 2.9),
        ),
        link_offsets=(
            (0.0, 0.0, 0.33),
            (0.0, 0.0, 0.32),
            (0.08, 0.0, 0.0),
            (-0.08, 0.0, 0.38),
            (0.0, 0.0, 0.0),
            (0.09, 0.0, 0.0),
            (0.0, 0.0, -0.21),
        ),
        has_gripper=True,
        max_joint_delta=0.05,
    ),
    "ur5": lambda: dict(
        joints=(
            _z(-TWO_PI, TWO_PI),
            _y(-TWO_PI, TWO_PI),
            _y(-TWO_PI, TWO_PI),
            _y(-TWO_PI, TWO_PI),
            _z(-TWO_PI, TWO_PI),
            _y(-TWO_PI, TWO_PI),
        ),
        link_offsets=(
            (0.0, 0.0, 0.09),
            (0.43, 0.0, 0.0),
            (0.39, 0.0, 0.0),
            (0.0, 0.11, 0.0),
            (0.0, 0.0, -0.09),
            (0.0, 0.23, 0.0),
        ),
        has_gripper=True,
        max_joint_delta=0.05,
    ),
    "iiwa": lambda: dict(
        joints=(
            _z(-2.97, 2.97),
            _y(-2.09, 2.09),
            _z(-2.97, 2.97),
            _y(-2.09, 2.09, sign=-1.0),
            _z(-2.97, 2.97),
            _y(-2.09, 2.09),
            _z(-3.05, 3.05),
        ),
        link_offsets=(
            (0.0, 0.0, 0.36),
            (0.0, 0.0, 0.21),
            (0.0, 0.0, 0.21),
            (0.0, 0.0, 0.2),
            (0.0, 0.0, 0.2),
            (0.0, 0.0, 0.0),
            (0.0, 0.0, 0.28),
        ),
        has_gripper=True,
        max_joint_delta=0.05,
    ),
    "planar2": lambda: _planar((0.5, 0.5), False),
    "planar3": lambda: _planar((0.4, 0.3, 0.3), False),
}

ROBOT_NAMES = tuple(_MODELS)


def make_robot(name: str, *, gripper: bool | None = None, max_joint_delta: float | None = None,
               dr: RobotRandomization | dict | None = None) -> RobotModel:
    """Build one of the embedded arm models.

    ``gripper`` overrides whether the arm carries a gripper (planar arms ship
    without one). ``dr`` may be a :class:`RobotRandomization` or a dict of its
    fields.
    """
    if name not in _MODELS:
        raise ValueError(f"unknown robot {name!r}; valid names: {', '.join(ROBOT_NAMES)}")
    kwargs = _MODELS[name]()
    if gripper is not None:
        kwargs["has_gripper"] = bool(gripper)
    if max_joint_delta is not None:
        kwargs["max_joint_delta"] = float(max_joint_delta)
    if isinstance(dr, dict):
        dr = RobotRandomization(**dr)
    return RobotModel(name=name, dr=dr or RobotRandomization(), **kwargs)


def parse_robot(text: str) -> RobotModel:
    """Parse a custom arm from the plain-text robot format.

    Format (``#`` starts a comment, blank lines ignored)::

        name myarm
        dof 2
        gripper 0
        max_joint_delta 0.1
        joint <ax> <ay> <az> <lo> <hi> <ox> <oy> <oz>
        joint ...

    One ``joint`` line per degree of freedom: axis, limits, then the link
    offset to the next joint in the joint's own frame.
    """
    header = {}
    joints, offsets = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "joint":
            if len(rest) != 8:
                raise ValueError(f"joint line needs 8 numbers: {raw!r}")
            vals = [float(v) for v in rest]
            joints.append(JointSpec(tuple(vals[0:3]), vals[3], vals[4]))
            offsets.append(tuple(vals[5:8]))
        elif key in ("name", "dof", "gripper", "max_joint_delta"):
            header[key] = rest[0]
        else:
            raise ValueError(f"unknown key {key!r} in robot definition")
    if "dof" in header and int(header["dof"]) != len(joints):
        raise ValueError(f"dof {header['dof']} does not match {len(joints)} joint lines")
    return RobotModel(
        name=header.get("name", "custom"),
        joints=tuple(joints),
        link_offsets=tuple(offsets),
        has_gripper=bool(int(header.get("gripper", 0))),
        max_joint_delta=float(header.get("max_joint_delta", 0.1)),
    )


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def forward_kinematics(model: RobotModel, joint_positions) -> np.ndarray:
    q = np.asarray(joint_positions, dtype=np.float64)
    if q.shape != (model.dof,):
        raise ValueError(f"expected {model.dof} joint positions, got shape {q.shape}")
    p = np.zeros(3)
    for joint, offset, angle in zip(reversed(model.joints), reversed(model.link_offsets), q[::-1]):
        p = axis_angle_matrix(joint.axis, angle) @ (np.asarray(offset) + p)
    return p


def _clamp_multiplier(x):
    return np.clip(x, *MULTIPLIER_BOUNDS)


def robot_reset(model: RobotModel, rng: RngStream, randomize: bool = False) -> RobotState:
    """Sample a start configuration and, optionally, randomized motion parameters.

    Joint positions are uniform in the central half of each joint's range.
    With ``randomize`` the per-step joint delta is scaled by a draw from
    ``N(1, joint_delta_sigma)`` and each joint's damping is drawn from
    ``N(damping_mean, damping_sigma)``; both multipliers are clamped.
    """
    gen = rng.generator()
    lo, hi = model.limits
    mid, half = (lo + hi) / 2, (hi - lo) / 4
    q = gen.uniform(mid - half, mid + half)

    dr = model.dr
    delta = model.max_joint_delta
    damping = np.full(model.dof, dr.damping_mean, dtype=np.float64)
    if randomize:
        dr_gen = rng.child("dr").generator()
        if dr.joint_delta_sigma > 0:
            delta = model.max_joint_delta * float(_clamp_multiplier(dr_gen.normal(1.0, dr.joint_delta_sigma)))
        if dr.damping_sigma > 0:
            damping = _clamp_multiplier(dr_gen.normal(dr.damping_mean, dr.damping_sigma, model.dof))
    return RobotState(q, 1.0, delta, damping)


def robot_step(model: RobotModel, state: RobotState, action) -> RobotState:
    """Apply one joint-delta action; the last component drives the gripper."""
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != (model.action_dim,):
        raise ValueError(f"expected action of dimension {model.action_dim}, got shape {a.shape}")
    lo, hi = model.limits
    dq = a[: model.dof] * state.effective_joint_delta * state.effective_damping
    q = np.clip(state.joint_positions + dq, lo, hi)
    aperture = state.gripper_aperture
    if model.has_gripper:
        aperture = min(1.0, max(0.0, aperture + a[-1] * GRIPPER_RATE))
    return replace(state, joint_positions=q, gripper_aperture=aperture)

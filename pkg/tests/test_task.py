import math
from dataclasses import replace

import numpy as np
import pytest

from helpers import projectile_landing
from robotask.core import RngStream
from robotask.robot import make_robot
from robotask.task import (
    TaskState,
    achieved_goal_of,
    compute_reward,
    make_task,
    success_criterion,
    task_reset,
    task_step,
)

PANDA = make_robot("panda")


def _inside(point, box):
    lo, hi = np.asarray(box[0]), np.asarray(box[1])
    return np.all(point >= lo) and np.all(point <= hi)


def test_reach_goal_inside_workspace():
    spec = make_task("reach", PANDA)
    for i in range(200):
        state, goal = task_reset(spec, RngStream(i), False)
        assert _inside(goal, spec.workspace)
        assert not state.object_held and np.array_equal(state.object_position, np.zeros(3))


def test_pick_place_object_on_floor():
    spec = make_task("pick_place", PANDA)
    state, goal = task_reset(spec, RngStream(1), False)
    assert state.object_position[2] == spec.floor
    assert _inside(state.object_position, spec.workspace) and _inside(goal, spec.workspace)


def test_throw_target_outside_reach():
    spec = make_task("throw", PANDA)
    ee = np.array([0.3, 0.0, 0.5])
    for i in range(500):
        state, goal = task_reset(spec, RngStream(i), False, ee_position=ee)
        assert np.linalg.norm(goal - np.asarray(spec.base_position)) > PANDA.chain_length
        assert state.object_held and np.array_equal(state.object_position, ee)


def test_gravity_randomization_monte_carlo():
    spec = make_task("throw", PANDA, gravity_sigma=0.5)
    root = RngStream(4, "g")
    g = [task_reset(spec, root.child(str(i)), True)[0].effective_gravity for i in range(10_000)]
    assert abs(np.std(g) - 0.5) < 0.05 * 0.5
    assert task_reset(spec, root, False)[0].effective_gravity == spec.gravity_mean


def test_unknown_task_and_overrides():
    with pytest.raises(ValueError, match="reach"):
        make_task("push")
    with pytest.raises(ValueError, match="unknown"):
        make_task("reach", bogus=1)
    assert make_task("throw").max_steps == 150
    assert make_task("reach").max_steps == 100


def _pp_state(obj, held=False):
    return TaskState(np.asarray(obj, float), np.zeros(3), held, np.ones(3), 9.81)


def test_pick_place_out_of_range_no_grasp():
    spec = make_task("pick_place", PANDA)
    s = task_step(spec, _pp_state([0.5, 0, 0.05]), [0.5, 0.2, 0.05], 0.0)
    assert not s.object_held


def test_pick_place_grasp_carry_release():
    spec = make_task("pick_place", PANDA)
    s = task_step(spec, _pp_state([0.5, 0, 0.05]), [0.51, 0, 0.05], 0.2)
    assert s.object_held
    ee = np.array([0.4, 0.1, 0.3])
    s = task_step(spec, s, ee, 0.2)
    assert np.array_equal(s.object_position, ee)
    assert np.array_equal(achieved_goal_of(spec, ee, s), ee)
    s = task_step(spec, s, ee, 0.9)
    assert not s.object_held and s.object_position[2] == spec.floor
    assert s.object_position[0] == 0.4


def test_open_gripper_does_not_grasp():
    spec = make_task("pick_place", PANDA)
    s = task_step(spec, _pp_state([0.5, 0, 0.05]), [0.5, 0, 0.05], 1.0)
    assert not s.object_held


@pytest.mark.parametrize("p,v", [
    ((0.2, 0.1, 1.0), (3.0, -1.0, 0.5)),
    ((0.0, 0.0, 0.8), (1.0, 2.0, -0.5)),
    ((0.5, 0.5, 0.3), (-2.0, 0.0, 2.0)),
])
def test_throw_landing_matches_closed_form(p, v):
    spec = make_task("throw", PANDA)
    state = TaskState(np.array(p), np.array(v), False, np.zeros(3), 9.81, in_flight=True)
    steps = 0
    apex_seen = False
    while state.in_flight:
        prev = state
        state = task_step(spec, state, np.zeros(3), 1.0)
        steps += 1
        if state.in_flight:
            # horizontal velocity is constant in flight
            assert np.allclose(state.object_velocity[:2], v[:2])
            if prev.object_velocity[2] > 0 >= state.object_velocity[2]:
                apex_seen = True
        assert steps < 10_000
    expected, t_star = projectile_landing(p, v, 9.81)
    assert np.linalg.norm(state.object_position - expected) < 1e-3
    assert apex_seen == (v[2] > 0 and v[2] / 9.81 < t_star)
    landed = achieved_goal_of(spec, np.zeros(3), state)
    for _ in range(5):
        state = task_step(spec, state, np.zeros(3), 1.0)
        assert np.array_equal(achieved_goal_of(spec, np.zeros(3), state), landed)


def test_throw_release_velocity_from_finite_difference():
    spec = make_task("throw", PANDA)
    s = TaskState(np.array([0.3, 0, 1.0]), np.zeros(3), True, np.zeros(3), 9.81)
    s = task_step(spec, s, [0.35, 0, 1.0], 0.0)
    assert np.allclose(s.object_velocity, [0.05 / spec.step_duration, 0, 0])
    s = task_step(spec, s, [0.40, 0, 1.0], 1.0)
    assert s.in_flight and not s.object_held


def test_reward_examples():
    sparse = make_task("reach")
    dense = replace(sparse, reward_mode="dense")
    g = np.array([0.1, 0.2, 0.3])
    assert compute_reward(g, g, sparse) == 0.0
    far = g + np.array([2 * sparse.success_threshold, 0, 0])
    assert compute_reward(far, g, sparse) == -1.0
    assert math.isclose(compute_reward(g + [0.3, 0, 0], g, dense), -0.3)


def test_success_boundary_is_strict():
    spec = make_task("reach", success_threshold=0.25)
    a = np.zeros(3)
    assert success_criterion(a, a, spec)
    assert not success_criterion(a, np.array([0.25, 0, 0]), spec)


def test_success_matches_sparse_reward_sweep():
    spec = make_task("reach")
    rng = np.random.default_rng(0)
    a = rng.uniform(-0.1, 0.1, (100_000, 3))
    d = rng.uniform(-0.1, 0.1, (100_000, 3))
    assert np.array_equal(success_criterion(a, d, spec), compute_reward(a, d, spec) == 0.0)
    dense = replace(spec, reward_mode="dense")
    assert np.all(compute_reward(a, d, dense) <= 0)
    assert set(np.unique(compute_reward(a, d, spec))) <= {0.0, -1.0}


def test_goal_dimension_mismatch():
    spec = make_task("reach")
    with pytest.raises(ValueError):
        compute_reward(np.zeros(3), np.zeros(2), spec)
    with pytest.raises(ValueError):
        success_criterion(np.zeros(3), np.zeros(2), spec)


def test_reach_achieved_goal_is_ee():
    spec = make_task("reach")
    state, _ = task_reset(spec, RngStream(0), False)
    ee = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(achieved_goal_of(spec, ee, state), ee)
    assert task_step(spec, state, ee, 0.0) is state

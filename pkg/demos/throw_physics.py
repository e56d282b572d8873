"""
Ballistics of the throw task
============================

A released object flies under constant gravity until it hits the ground.
The simulated rest point is compared with the closed-form projectile
solution.
"""

import math

import numpy as np

from robotask.robot import make_robot
from robotask.task import TaskState, make_task, task_step

spec = make_task("throw", make_robot("panda"))
print(f"control step {spec.step_duration * 1000:.1f} ms ({spec.substeps} substeps of {spec.dt:.5f} s)")

for p, v in [((0.3, 0.0, 0.6), (2.0, 0.5, 1.5)), ((0.0, 0.2, 1.0), (-1.0, 1.0, -0.3))]:
    p, v = np.array(p), np.array(v)
    state = TaskState(p, v, False, np.zeros(3), 9.81, in_flight=True)
    steps = 0
    while state.in_flight:
        state = task_step(spec, state, np.zeros(3), 1.0)
        steps += 1
    t_star = (v[2] + math.sqrt(v[2] ** 2 + 2 * 9.81 * p[2])) / 9.81
    closed_form = p[:2] + v[:2] * t_star
    err = np.linalg.norm(state.object_position[:2] - closed_form)
    print(f"landed at {np.round(state.object_position, 4)} after {steps} steps; "
          f"closed form {np.round(closed_form, 4)}; error {err:.1e} m")

# %%
# With domain randomization, every reset draws its own gravity.
from robotask.core import RngStream  # noqa: E402
from robotask.task import task_reset  # noqa: E402

g = [task_reset(spec, RngStream(i, "dr"), randomize=True)[0].effective_gravity for i in range(2000)]
print(f"randomized gravity: mean {np.mean(g):.3f}, std {np.std(g):.3f} (configured 9.81 +/- {spec.gravity_sigma})")

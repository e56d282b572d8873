"""
Robots, tasks and goal-conditioned environments
===============================================

Pair any robot with any task, step it with joint-delta actions and read the
achieved and desired goals that the reward is computed from.
"""

import numpy as np

from robotask.core import RngStream
from robotask.env import make_env_spec
from robotask.robot import forward_kinematics, make_robot

# %%
# Forward kinematics of the built-in arms at their zero configuration.
for name in ("planar2", "planar3", "panda", "ur5", "iiwa"):
    robot = make_robot(name)
    ee = forward_kinematics(robot, np.zeros(robot.dof))
    print(f"{name:8s} dof={robot.dof} reach={robot.chain_length:.3f} m  ee(q=0)={np.round(ee, 3)}")

# %%
# An environment is a robot plus a task. Planar arms get a gripper added
# automatically when the task needs one.
spec = make_env_spec({"robot_config": {"name": "planar2"}, "task_config": {"name": "pick_place"}})
print("action dim", spec.action_dim, "observation dim", spec.obs_dim)

env = spec.build()
obs = env.reset(RngStream(seed=0, label="demo"))
print("object at", obs.achieved_goal, "target", obs.desired_goal)

# %%
# Random actions rarely solve anything; the sparse reward stays at -1.
rewards = []
for _ in range(spec.max_steps):
    res = env.step(np.random.default_rng(len(rewards)).uniform(-1, 1, spec.action_dim))
    rewards.append(res.reward)
    if res.terminal or res.truncated:
        break
print(f"{len(rewards)} steps, return {sum(rewards):.0f}, success {res.success}")

# %%
# Rewards are pure functions of the goals, so they can be recomputed for any
# substitute goal. This is what hindsight relabeling relies on.
print("reward if the goal had been where the object is:",
      spec.compute_reward(res.obs.achieved_goal, res.obs.achieved_goal))

"""Independent oracles shared by the test modules."""

import math

import numpy as np


def finite_difference(f, arrays, h=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. each array, perturbed in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def grad_mismatch(analytic, numeric, rtol=1e-4, atol=1e-6):
    """Entries failing ``|a-n| <= max(atol, rtol*max(|a|,|n|))``; empty when all pass."""
    bad = []
    for k, (a, n) in enumerate(zip(analytic, numeric)):
        a = np.zeros_like(n) if a is None else a
        tol = np.maximum(atol, rtol * np.maximum(np.abs(a), np.abs(n)))
        idx = np.argwhere(np.abs(a - n) > tol)
        bad += [(k, tuple(i), a[tuple(i)], n[tuple(i)]) for i in idx]
    return bad


def homogeneous_fk(joints, offsets, q):
    """End effector by multiplying 4x4 transforms: Rot(axis, q_i) then Trans(offset_i)."""
    T = np.eye(4)
    for joint, off, angle in zip(joints, offsets, q):
        x, y, z = joint.axis
        K = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)
        R = np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K
        rot = np.eye(4)
        rot[:3, :3] = R
        trans = np.eye(4)
        trans[:3, 3] = off
        T = T @ rot @ trans
    return T[:3, 3]


def ik_solution(robot, target, q0, starts=12, seed=0):
    """Joint vector within limits reaching ``target``, nearest to ``q0`` among multi-start solves."""
    from scipy.optimize import least_squares

    lo, hi = robot.limits
    offsets = robot.link_offsets
    rng = np.random.default_rng(seed)
    best = None
    for k in range(starts):
        # mostly local restarts: the nearest solution is what a short episode can reach
        x0 = q0 if k == 0 else rng.uniform(lo, hi) if k % 3 == 0 else np.clip(q0 + rng.normal(0, 0.7, q0.shape), lo, hi)
        sol = least_squares(lambda q: homogeneous_fk(robot.joints, offsets, q) - target,
                            x0, bounds=(lo, hi), xtol=1e-12, ftol=1e-12)
        if np.linalg.norm(sol.fun) > 1e-4:
            continue
        if best is None or np.abs(sol.x - q0).max() < np.abs(best - q0).max():
            best = sol.x
        if np.abs(best - q0).max() < 1.0:
            break
    return best


def projectile_landing(p, v, g):
    """Closed-form rest point of a point mass released at ``p`` with velocity ``v`` over z=0."""
    t_star = (v[2] + math.sqrt(v[2] ** 2 + 2 * g * p[2])) / g
    return np.array([p[0] + v[0] * t_star, p[1] + v[1] * t_star, 0.0]), t_star


def gae_brute_force(rewards, values, terminals, gamma, lam):
    """Advantages from the explicit double sum of discounted TD residuals."""
    T = len(rewards)
    deltas = [rewards[t] + gamma * (1 - terminals[t]) * values[t + 1] - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, coef = 0.0, 1.0
        for k in range(t, T):
            total += coef * deltas[k]
            if terminals[k]:
                break
            coef *= gamma * lam
        adv[t] = total
    return adv

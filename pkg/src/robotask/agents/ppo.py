"""Proximal policy optimization with a clipped surrogate and GAE."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import LOG_2PI, AdamState, Tape, adam_step
from ..core import ConfigError, Trajectory
from ..replay import OnpolicyBuffer, transitions_to_arrays
from .base import Agent

BEHAVIOUR_CACHE_LIMIT = 1 << 20


def gae(rewards, values, terminals, gamma: float, lam: float):
    """Generalized advantage estimates and value targets.

    ``values`` carries one more entry than ``rewards``: the bootstrap value of
    the state after the last step. A terminal step cuts both the bootstrap and
    the recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=np.float64)
    T = len(rewards)
    if len(values) != T + 1 or len(terminals) != T:
        raise ValueError(f"length mismatch: {T} rewards, {len(terminals)} terminals, "
                         f"{len(values)} values (need {T + 1})")
    nonterminal = 1.0 - terminals
    deltas = rewards + gamma * nonterminal * values[1:] - values[:-1]
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        running = deltas[t] + gamma * lam * nonterminal[t] * running
        adv[t] = running
    return adv, adv + values[:-1]


class RunningMoments:
    """Mean and variance of a stream, merged batch by batch."""

    def __init__(self):
        self.count, self.mean, self.var = 0.0, 0.0, 1.0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        n = x.size
        if n == 0:
            return
        total = self.count + n
        delta = x.mean() - self.mean
        m2 = self.var * self.count + x.var() * n + delta * delta * self.count * n / total
        self.mean += delta * n / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> float:
        return math.sqrt(self.var) + 1e-8


def _clip_norm(grads, max_norm):
    norm = math.sqrt(float(np.sum([np.sum(g * g) for g in grads])))
    if norm > max_norm:
        return [g * (max_norm / norm) for g in grads]
    return grads


def clipped_surrogate(ratio, advantage, clip_eps: float):
    """Elementwise ``min(r * A, clip(r, 1 - eps, 1 + eps) * A)``."""
    unclipped = ad.mul(ratio, advantage)
    clipped = ad.mul(ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), advantage)
    return ad.minimum(unclipped, clipped)


class PpoAgent(Agent):
    name = "ppo"
    on_policy = True
    extra_keys = {"clip", "gae_lambda", "use_gae", "entropy_coef", "value_coef", "horizon",
                  "minibatch_size", "epochs", "init_log_std", "max_grad_norm", "normalize_value", "her"}

    def __init__(self, env_spec, config=None, seed=0, path="agent_config"):
        super().__init__(env_spec, config, seed, path)
        cfg = self.config
        if (cfg.get("her") or {}).get("enabled"):
            raise ConfigError(f"{path}.her.enabled", "hindsight relabeling needs an off-policy agent")
        self.clip_eps = float(cfg.get("clip", 0.2))
        self.use_gae = bool(cfg.get("use_gae", True))
        self.lam = float(cfg.get("gae_lambda", 0.95)) if self.use_gae else 1.0
        self.entropy_coef = float(cfg.get("entropy_coef", 0.0))
        self.value_coef = float(cfg.get("value_coef", 0.5))
        self.horizon = int(cfg.get("horizon", 2048))
        self.minibatch_size = int(cfg.get("minibatch_size", 64))
        self.epochs = int(cfg.get("epochs", 10))
        self.max_grad_norm = cfg.get("max_grad_norm", 0.5)
        # the value net regresses standardized returns; sparse returns reach -1/(1-gamma)
        self.normalize_value = bool(cfg.get("normalize_value", True))
        self.returns = RunningMoments()
        self.policy_net = self._mlp(self.obs_dim, self.action_dim, output_scale=0.01)
        self.log_std = ad.parameter(np.full(self.action_dim, float(cfg.get("init_log_std", -0.5))),
                                    name="log_std")
        self.value_net = self._mlp(self.obs_dim, 1)
        self.params = self.policy_net.parameters() + [self.log_std] + self.value_net.parameters()
        self.n_policy_params = len(self.policy_net.parameters()) + 1
        self.opt = AdamState(self.params, self.lr)
        self.buffer = OnpolicyBuffer()
        self.updates = 0
        self._behaviour_logp: dict[bytes, float] = {}

    def networks(self):
        return {"policy": self.policy_net, "value": self.value_net}

    def extra_state(self):
        r = self.returns
        return {"log_std": self.log_std.data, "return_moments": np.array([r.count, r.mean, r.var])}

    def load_extra_state(self, arrays):
        self.log_std.data = np.array(arrays["log_std"], dtype=np.float64)
        if "return_moments" in arrays:
            self.returns.count, self.returns.mean, self.returns.var = (float(v) for v in arrays["return_moments"])

    def _act(self, x, deterministic):
        mu = self.policy_net.predict(x)
        if deterministic:
            return mu
        std = np.exp(self.log_std.data)
        noise = self.rng.standard_normal(mu.shape)
        actions = mu + std * noise
        # behaviour log-probs, so episodes spanning an update keep the policy that acted
        logp = (-0.5 * LOG_2PI - self.log_std.data - 0.5 * noise * noise).sum(axis=1)
        cache = self._behaviour_logp
        for a, lp in zip(actions, logp):
            cache[a.tobytes()] = lp
        if len(cache) > BEHAVIOUR_CACHE_LIMIT:
            for key in list(itertools.islice(cache, len(cache) - BEHAVIOUR_CACHE_LIMIT)):
                del cache[key]
        return actions

    def log_prob(self, obs, actions):
        return ad.gaussian_log_prob(self.policy_net(obs), self.log_std, actions)

    def observe_trajectory(self, trajectory: Trajectory) -> None:
        trajectory.check_chaining()
        if not trajectory.transitions:
            return
        arrays = transitions_to_arrays(trajectory.transitions)
        values = self.value(np.vstack([arrays["obs"], arrays["next_obs"][-1:]]))
        adv, ret = gae(arrays["reward"], values, arrays["terminal"], self.gamma, self.lam)
        logp = self.log_prob(arrays["obs"], arrays["action"]).data
        cache = self._behaviour_logp
        arrays["log_prob"] = np.array([cache.pop(np.asarray(t.action, dtype=np.float64).tobytes(), lp)
                                       for t, lp in zip(trajectory.transitions, logp)])
        arrays["advantage"] = adv
        arrays["return"] = ret
        self.buffer.add_batch(arrays)

    def ready(self) -> bool:
        return len(self.buffer) >= self.horizon

    def value(self, obs) -> np.ndarray:
        out = self.value_net.predict(obs)[:, 0]
        if self.normalize_value:
            return self.returns.mean + self.returns.std * out
        return out

    def loss(self, mb, advantages):
        logp = self.log_prob(mb["obs"], mb["action"])
        ratio = ad.exp(logp - mb["log_prob"])
        policy_loss = -ad.mean(clipped_surrogate(ratio, advantages, self.clip_eps))
        target = mb["return"]
        if self.normalize_value:
            target = (target - self.returns.mean) / self.returns.std
        value_loss = ad.mean(ad.square(self.value_net(mb["obs"])[:, 0] - target))
        entropy = ad.sum(self.log_std) + 0.5 * self.action_dim * (1.0 + math.log(2.0 * math.pi))
        total = policy_loss + self.value_coef * value_loss - self.entropy_coef * entropy
        return total, policy_loss, value_loss, ratio

    def learn(self) -> dict[str, float]:
        if len(self.buffer) == 0:
            raise ValueError("on-policy buffer is empty")
        data = self.buffer.data()
        if self.normalize_value:
            self.returns.update(data["return"])
        adv_all = data["advantage"]
        data["advantage"] = (adv_all - adv_all.mean()) / (adv_all.std() + 1e-8)
        stats = {"policy_loss": [], "value_loss": [], "clip_fraction": []}
        for _ in range(self.epochs):
            for mb in self.buffer.batches(self.minibatch_size, self.rng):
                with Tape() as tape:
                    total, p_loss, v_loss, ratio = self.loss(mb, mb["advantage"])
                tape.backward(total)
                grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
                if self.max_grad_norm:
                    # clip policy and value parts separately: sparse-reward value
                    # targets are large and would otherwise swamp the policy step
                    k = self.n_policy_params
                    grads = _clip_norm(grads[:k], self.max_grad_norm) + _clip_norm(grads[k:], self.max_grad_norm)
                adam_step(self.opt, self.params, grads)
                stats["policy_loss"].append(float(p_loss.data))
                stats["value_loss"].append(float(v_loss.data))
                stats["clip_fraction"].append(float(np.mean(np.abs(ratio.data - 1.0) > self.clip_eps)))
        self.buffer.clear()
        self.updates += 1
        self.learn_steps += 1
        return {k: float(np.mean(v)) for k, v in stats.items()}

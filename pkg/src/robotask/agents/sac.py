"""Soft actor-critic with twin critics and a learned entropy temperature."""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import AdamState, Tape, adam_step, polyak_update
from ..replay import Batch
from .base import OffPolicyAgent

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0


class SacAgent(OffPolicyAgent):
    name = "sac"
    extra_keys = OffPolicyAgent.extra_keys | {"init_temperature", "target_entropy", "learn_temperature"}

    def __init__(self, env_spec, config=None, seed=0, path="agent_config"):
        super().__init__(env_spec, config, seed, path)
        cfg = self.config
        n_in, n_act = self.obs_dim, self.action_dim
        self.actor = self._mlp(n_in, 2 * n_act)
        self.q1 = self._mlp(n_in + n_act, 1)
        self.q2 = self._mlp(n_in + n_act, 1)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = ad.parameter(np.array(math.log(float(cfg.get("init_temperature", 1.0)))))
        self.target_entropy = float(cfg.get("target_entropy", -n_act))
        self.learn_temperature = bool(cfg.get("learn_temperature", True))
        self.actor_opt = AdamState(self.actor.parameters(), self.lr)
        self.critic_params = self.q1.parameters() + self.q2.parameters()
        self.critic_opt = AdamState(self.critic_params, self.lr)
        self.alpha_opt = AdamState([self.log_alpha], self.lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data))

    def networks(self):
        return {"actor": self.actor, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}

    def extra_state(self):
        return {"log_alpha": self.log_alpha.data}

    def load_extra_state(self, arrays):
        self.log_alpha.data = np.array(arrays["log_alpha"], dtype=np.float64)

    # -- policy
    def policy(self, obs, noise):
        """Squashed-Gaussian sample ``tanh(mu + sigma * noise)`` and its log-probability."""
        out = self.actor(obs)
        mu = out[:, : self.action_dim]
        log_std = ad.clip(out[:, self.action_dim:], LOG_STD_MIN, LOG_STD_MAX)
        u = mu + ad.exp(log_std) * noise
        log_prob = ad.gaussian_log_prob(mu, log_std, u) - ad.tanh_squash_correction(u)
        return ad.tanh(u), log_prob

    def _act(self, x, deterministic):
        out = self.actor.predict(x)
        mu = out[:, : self.action_dim]
        if deterministic:
            return np.tanh(mu)
        log_std = np.clip(out[:, self.action_dim:], LOG_STD_MIN, LOG_STD_MAX)
        return np.tanh(mu + np.exp(log_std) * self.rng.standard_normal(mu.shape))

    @staticmethod
    def _q(net, obs, action):
        return net(ad.concat([obs, action], axis=1))[:, 0]

    # -- losses
    def critic_target(self, batch: Batch, noise) -> np.ndarray:
        next_action, next_logp = self.policy(batch.next_obs, noise)
        q1 = self._q(self.q1_target, batch.next_obs, next_action).data
        q2 = self._q(self.q2_target, batch.next_obs, next_action).data
        soft_v = np.minimum(q1, q2) - self.alpha * next_logp.data
        return batch.reward + self.gamma * (1.0 - batch.terminal) * soft_v

    def critic_loss(self, batch: Batch, target, weights):
        q1 = self._q(self.q1, batch.obs, batch.action)
        q2 = self._q(self.q2, batch.obs, batch.action)
        loss = ad.mean(weights * ad.square(q1 - target)) + ad.mean(weights * ad.square(q2 - target))
        return loss, q1, q2

    def actor_loss(self, obs, noise):
        action, log_prob = self.policy(obs, noise)
        q = ad.minimum(self._q(self.q1, obs, action), self._q(self.q2, obs, action))
        return ad.mean(self.alpha * log_prob - q), log_prob

    def temperature_loss(self, log_prob):
        return ad.mean(-ad.exp(self.log_alpha) * (np.asarray(log_prob) + self.target_entropy))

    def learn(self) -> dict[str, float]:
        batch, idx, weights = self.sample()
        n = len(batch.reward)
        target = self.critic_target(batch, self.rng.standard_normal((n, self.action_dim)))

        with Tape() as tape:
            c_loss, q1, q2 = self.critic_loss(batch, target, weights)
        tape.backward(c_loss)
        adam_step(self.critic_opt, self.critic_params, [p.grad for p in self.critic_params])

        actor_params = self.actor.parameters()
        with Tape() as tape:
            a_loss, log_prob = self.actor_loss(batch.obs, self.rng.standard_normal((n, self.action_dim)))
        tape.backward(a_loss)
        adam_step(self.actor_opt, actor_params, [p.grad for p in actor_params])

        t_loss = np.nan
        if self.learn_temperature:
            with Tape() as tape:
                t = self.temperature_loss(log_prob.data)
            tape.backward(t)
            adam_step(self.alpha_opt, [self.log_alpha], [self.log_alpha.grad])
            t_loss = float(t.data)

        polyak_update(self.q1_target, self.q1, self.tau)
        polyak_update(self.q2_target, self.q2, self.tau)

        td = 0.5 * (np.abs(q1.data - target) + np.abs(q2.data - target))
        self.buffer.update_priorities(idx, td)
        self.learn_steps += 1
        return {"critic_loss": float(c_loss.data), "actor_loss": float(a_loss.data),
                "temperature_loss": t_loss, "alpha": self.alpha, "td_error": float(td.mean())}

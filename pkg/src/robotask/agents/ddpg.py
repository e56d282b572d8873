"""Deep deterministic policy gradient."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import AdamState, Tape, adam_step, polyak_update
from ..replay import Batch
from .base import OffPolicyAgent


class DdpgAgent(OffPolicyAgent):
    name = "ddpg"
    extra_keys = OffPolicyAgent.extra_keys | {"exploration_noise"}

    def __init__(self, env_spec, config=None, seed=0, path="agent_config"):
        super().__init__(env_spec, config, seed, path)
        self.sigma_explore = float(self.config.get("exploration_noise", 0.1))
        n_in, n_act = self.obs_dim, self.action_dim
        self.actor = self._mlp(n_in, n_act)
        self.critic = self._mlp(n_in + n_act, 1)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState(self.actor.parameters(), self.lr)
        self.critic_opt = AdamState(self.critic.parameters(), self.lr)

    def networks(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def _act(self, x, deterministic):
        a = np.tanh(self.actor.predict(x))
        if not deterministic:
            a = np.clip(a + self.sigma_explore * self.rng.standard_normal(a.shape), -1.0, 1.0)
        return a

    @staticmethod
    def _q(net, obs, action):
        return net(ad.concat([obs, action], axis=1))[:, 0]

    def td_target(self, batch: Batch) -> np.ndarray:
        next_action = np.tanh(self.actor_target.predict(batch.next_obs))
        q_next = self.critic_target.predict(np.concatenate([batch.next_obs, next_action], axis=1))[:, 0]
        return batch.reward + self.gamma * (1.0 - batch.terminal) * q_next

    def critic_loss(self, batch: Batch, target, weights):
        q = self._q(self.critic, batch.obs, batch.action)
        return ad.mean(weights * ad.square(q - target)), q

    def actor_loss(self, obs):
        return -ad.mean(self._q(self.critic, obs, ad.tanh(self.actor(obs))))

    def learn(self) -> dict[str, float]:
        batch, idx, weights = self.sample()
        target = self.td_target(batch)
        critic_params = self.critic.parameters()
        with Tape() as tape:
            c_loss, q = self.critic_loss(batch, target, weights)
        tape.backward(c_loss)
        adam_step(self.critic_opt, critic_params, [p.grad for p in critic_params])

        actor_params = self.actor.parameters()
        with Tape() as tape:
            a_loss = self.actor_loss(batch.obs)
        tape.backward(a_loss)
        adam_step(self.actor_opt, actor_params, [p.grad for p in actor_params])

        polyak_update(self.actor_target, self.actor, self.tau)
        polyak_update(self.critic_target, self.critic, self.tau)
        td = np.abs(q.data - target)
        self.buffer.update_priorities(idx, td)
        self.learn_steps += 1
        return {"critic_loss": float(c_loss.data), "actor_loss": float(a_loss.data),
                "td_error": float(td.mean())}

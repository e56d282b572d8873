"""Double deep Q-learning over a discretized action grid."""

from __future__ import annotations

import itertools

import numpy as np

from .. import autodiff as ad
from ..autodiff import AdamState, Tape, adam_step
from ..replay import Batch
from .base import OffPolicyAgent


class ActionDiscretizer:
    """Cartesian grid of ``levels`` evenly spaced values per action dimension.

    The number of discrete actions is ``levels ** dims``, so keep ``dims``
    small: 3 levels on a 7-joint arm with gripper is already 6561 actions.
    """

    def __init__(self, dims: int, levels: int = 3):
        if levels < 2:
            raise ValueError("need at least two levels per dimension")
        self.dims, self.levels = dims, levels
        self.values = np.linspace(-1.0, 1.0, levels)
        self.table = np.array(list(itertools.product(self.values, repeat=dims)), dtype=np.float64)

    @property
    def n(self) -> int:
        return len(self.table)

    def to_continuous(self, index) -> np.ndarray:
        return self.table[index]

    def to_index(self, action) -> np.ndarray:
        a = np.atleast_2d(np.asarray(action, dtype=np.float64))
        digits = np.rint((a + 1.0) / 2.0 * (self.levels - 1)).astype(np.int64)
        weights = self.levels ** np.arange(self.dims - 1, -1, -1)
        return digits @ weights


class DqnAgent(OffPolicyAgent):
    name = "dqn"
    extra_keys = OffPolicyAgent.extra_keys | {
        "levels", "epsilon_start", "epsilon_end", "epsilon_decay_steps", "target_update_interval",
    }

    def __init__(self, env_spec, config=None, seed=0, path="agent_config"):
        super().__init__(env_spec, config, seed, path)
        cfg = self.config
        self.discretizer = ActionDiscretizer(self.action_dim, int(cfg.get("levels", 3)))
        self.q = self._mlp(self.obs_dim, self.discretizer.n)
        self.q_target = self.q.copy()
        self.opt = AdamState(self.q.parameters(), self.lr)
        self.epsilon_start = float(cfg.get("epsilon_start", 1.0))
        self.epsilon_end = float(cfg.get("epsilon_end", 0.05))
        self.epsilon_decay_steps = int(cfg.get("epsilon_decay_steps", 50_000))
        self.target_update_interval = int(cfg.get("target_update_interval", 1000))
        self.act_calls = 0

    def networks(self):
        return {"q": self.q, "q_target": self.q_target}

    @property
    def epsilon(self) -> float:
        frac = min(1.0, self.act_calls / max(1, self.epsilon_decay_steps))
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac

    def _act(self, x, deterministic):
        greedy = np.argmax(self.q.predict(x), axis=1)
        if not deterministic:
            explore = self.rng.random(len(x)) < self.epsilon
            greedy = np.where(explore, self.rng.integers(0, self.discretizer.n, len(x)), greedy)
            self.act_calls += len(x)
        return self.discretizer.to_continuous(greedy)

    def _encode(self, arrays):
        arrays = dict(arrays)
        arrays["action"] = self.discretizer.to_index(arrays["action"]).astype(np.float64)[:, None]
        return arrays

    def td_target(self, batch: Batch) -> np.ndarray:
        """Double-Q target: the online net picks the next action, the target net scores it."""
        best = np.argmax(self.q.predict(batch.next_obs), axis=1)
        q_next = self.q_target.predict(batch.next_obs)[np.arange(len(best)), best]
        return batch.reward + self.gamma * (1.0 - batch.terminal) * q_next

    def loss(self, batch: Batch, target, weights):
        q = ad.gather_rows(self.q(batch.obs), batch.action[:, 0].astype(np.int64))
        return ad.mean(weights * ad.square(q - target)), q

    def learn(self) -> dict[str, float]:
        batch, idx, weights = self.sample()
        target = self.td_target(batch)
        params = self.q.parameters()
        with Tape() as tape:
            loss, q = self.loss(batch, target, weights)
        tape.backward(loss)
        adam_step(self.opt, params, [p.grad for p in params])
        self.learn_steps += 1
        if self.learn_steps % self.target_update_interval == 0:
            self.q_target = self.q.copy()
        td = np.abs(q.data - target)
        self.buffer.update_priorities(idx, td)
        return {"loss": float(loss.data), "td_error": float(td.mean()), "epsilon": self.epsilon}

    def extra_state(self):
        return {"act_calls": np.array(self.act_calls)}

    def load_extra_state(self, arrays):
        if "act_calls" in arrays:
            self.act_calls = int(arrays["act_calls"])

"""Behaviour shared by every agent: buffers, HER hand-off, checkpoints."""

from __future__ import annotations

import numpy as np

from ..autodiff import Mlp, load_checkpoint, save_checkpoint
from ..core import ConfigError, Observation, Trajectory
from ..replay import PriorityBuffer, UniformBuffer, transitions_to_arrays
from .her import HerConfig, relabel

COMMON_KEYS = {"name", "lr", "gamma", "hidden", "activation", "seed"}


def _get(cfg: dict, key, default, path):
    value = cfg.get(key, default)
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected a boolean, got {value!r}")
    return value


class Agent:
    """Common agent contract.

    ``act`` maps observations to actions, ``observe_trajectory`` receives each
    finished episode, and ``learn`` performs one update when :meth:`ready`.
    """

    name = "agent"
    on_policy = False
    extra_keys: set[str] = set()

    def __init__(self, env_spec, config: dict | None = None, seed: int = 0, path: str = "agent_config"):
        config = dict(config or {})
        unknown = set(config) - COMMON_KEYS - self.extra_keys
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", f"unknown key for agent {self.name!r}")
        self.config = config
        self.path = path
        self.env_spec = env_spec
        self.obs_dim = env_spec.obs_dim
        self.action_dim = env_spec.action_dim
        self.goal_dim = env_spec.goal_dim
        self.lr = float(config.get("lr", 3e-4))
        self.gamma = float(config.get("gamma", 0.99))
        self.hidden = tuple(int(h) for h in config.get("hidden", (64, 64)))
        self.activation = config.get("activation", "relu")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"{path}.activation", f"expected 'relu' or 'tanh', got {self.activation!r}")
        self.rng = np.random.default_rng(seed)
        self.learn_steps = 0

    # -- networks
    def _mlp(self, n_in, n_out, output_scale=1.0) -> Mlp:
        return Mlp((n_in, *self.hidden, n_out), self.activation, self.rng, output_scale)

    def networks(self) -> dict[str, Mlp]:
        raise NotImplementedError

    def extra_state(self) -> dict[str, np.ndarray]:
        return {}

    def load_extra_state(self, arrays: dict) -> None:
        pass

    # -- acting
    @staticmethod
    def _as_batch(obs) -> tuple[np.ndarray, bool]:
        if isinstance(obs, Observation):
            return obs.flat()[None, :], True
        if isinstance(obs, (list, tuple)) and obs and isinstance(obs[0], Observation):
            return np.stack([o.flat() for o in obs]), False
        arr = np.asarray(obs, dtype=np.float64)
        return (arr[None, :], True) if arr.ndim == 1 else (arr, False)

    def act(self, obs, deterministic: bool = False) -> np.ndarray:
        """Action for one observation, or a stacked batch for many."""
        x, single = self._as_batch(obs)
        if x.shape[1] != self.obs_dim:
            raise ValueError(f"observation dimension {x.shape[1]} != expected {self.obs_dim}")
        a = self._act(x, deterministic)
        return a[0] if single else a

    def _act(self, x: np.ndarray, deterministic: bool) -> np.ndarray:
        raise NotImplementedError

    # -- experience
    def observe_trajectory(self, trajectory: Trajectory) -> None:
        raise NotImplementedError

    def ready(self) -> bool:
        raise NotImplementedError

    def learn(self) -> dict[str, float]:
        raise NotImplementedError

    # -- persistence
    def state_dict(self) -> dict[str, np.ndarray]:
        arrays = {}
        for net_name, net in self.networks().items():
            arrays.update(net.state_dict(prefix=f"{net_name}."))
        arrays.update(self.extra_state())
        return arrays

    def save(self, path) -> None:
        meta = {"agent": self.name, "obs_dim": self.obs_dim, "action_dim": self.action_dim,
                "hidden": list(self.hidden), "activation": self.activation}
        save_checkpoint(path, self.state_dict(), meta)

    def load(self, path) -> None:
        arrays, meta = load_checkpoint(path)
        expected = {"agent": self.name, "obs_dim": self.obs_dim, "action_dim": self.action_dim,
                    "hidden": list(self.hidden)}
        for key, want in expected.items():
            if meta.get(key) != want:
                raise ValueError(
                    f"checkpoint/config mismatch on {key}: checkpoint has {meta.get(key)!r}, config implies {want!r}"
                )
        for net_name, net in self.networks().items():
            net.load_state_dict(arrays, prefix=f"{net_name}.")
        self.load_extra_state(arrays)


class OffPolicyAgent(Agent):
    """Replay-buffer agent with optional prioritized sampling and HER."""

    extra_keys = {"batch_size", "tau", "buffer", "her", "warmup_factor"}

    def __init__(self, env_spec, config=None, seed=0, path="agent_config"):
        super().__init__(env_spec, config, seed, path)
        cfg = self.config
        self.batch_size = int(cfg.get("batch_size", 256))
        self.tau = float(cfg.get("tau", 0.005))
        self.warmup = int(cfg.get("warmup_factor", 10)) * self.batch_size
        self.buffer = self._make_buffer(dict(cfg.get("buffer") or {}))
        try:
            self.her = HerConfig(**dict(cfg.get("her") or {}))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path}.her", str(e)) from e
        self.her_rng = np.random.default_rng(seed + 1)

    def _make_buffer(self, bcfg):
        kind = bcfg.pop("type", "uniform")
        capacity = int(bcfg.pop("capacity", 2 ** 20))
        try:
            if kind == "uniform":
                if bcfg:
                    raise TypeError(f"unexpected keys {sorted(bcfg)}")
                return UniformBuffer(capacity)
            if kind == "priority":
                return PriorityBuffer(capacity, **bcfg)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{self.path}.buffer", str(e)) from e
        raise ConfigError(f"{self.path}.buffer.type", f"unknown buffer {kind!r}; valid: uniform, priority")

    def observe_trajectory(self, trajectory: Trajectory) -> None:
        """Store the episode and, with HER on, its relabeled copies."""
        trajectory.check_chaining()
        transitions = list(trajectory.transitions)
        if not transitions:
            return
        if self.her.enabled:
            spec = self.env_spec
            transitions += relabel(trajectory, self.her, spec.compute_reward, spec.is_success,
                                   spec.terminate_on_success, self.her_rng)
        self.buffer.add_batch(self._encode(transitions_to_arrays(transitions)))

    def _encode(self, arrays):
        return arrays

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.warmup, self.batch_size)

    def sample(self):
        return self.buffer.sample(self.batch_size, self.rng)

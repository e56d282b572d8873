"""Experience storage: uniform ring buffer, proportional prioritized buffer, on-policy FIFO."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import Transition


class Batch(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray


def transitions_to_arrays(transitions) -> dict[str, np.ndarray]:
    ts = list(transitions)
    return {
        "obs": np.stack([t.obs.flat() for t in ts]),
        "action": np.stack([t.action for t in ts]),
        "reward": np.array([t.reward for t in ts], dtype=np.float64),
        "next_obs": np.stack([t.next_obs.flat() for t in ts]),
        "terminal": np.array([t.terminal for t in ts], dtype=np.float64),
    }


class UniformBuffer:
    """Fixed-capacity ring; the oldest entry is overwritten first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.size = 0
        self.cursor = 0
        self._cols: dict[str, np.ndarray] | None = None

    def __len__(self):
        return self.size

    def _allocate(self, arrays):
        self._cols = {
            k: np.zeros((self.capacity,) + v.shape[1:], dtype=np.float64) for k, v in arrays.items()
        }

    def add(self, transition: Transition, priority: float | None = None) -> None:
        self.add_batch(transitions_to_arrays([transition]))

    def add_batch(self, arrays: dict[str, np.ndarray]) -> np.ndarray:
        """Insert stacked transitions; returns the slots written."""
        n = len(arrays["reward"])
        if self._cols is None:
            self._allocate(arrays)
        slots = (self.cursor + np.arange(n)) % self.capacity
        for k, col in self._cols.items():
            col[slots] = arrays[k]
        self.cursor = int((self.cursor + n) % self.capacity)
        self.size = min(self.capacity, self.size + n)
        return slots

    def get(self, indices) -> Batch:
        c = self._cols
        return Batch(c["obs"][indices], c["action"][indices], c["reward"][indices],
                     c["next_obs"][indices], c["terminal"][indices])

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Equiprobable draws with replacement; importance weights are all one."""
        if self.size < batch_size or self.size == 0:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, batch_size)
        return self.get(idx), idx, np.ones(batch_size)

    def update_priorities(self, indices, td_errors) -> None:
        pass


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


class SumTree:
    """Complete binary tree of priorities stored in one flat array.

    Node ``i`` has children ``2i+1`` and ``2i+2``; leaves occupy the last
    ``capacity`` slots. Parents are recomputed from their children on every
    update, so internal nodes are always exact sums of the current leaves.
    """

    def __init__(self, capacity: int):
        self.capacity = _next_pow2(capacity)
        self.tree = np.zeros(2 * self.capacity - 1)
        self.depth = self.capacity.bit_length() - 1

    @property
    def total(self) -> float:
        return float(self.tree[0])

    @property
    def leaves(self) -> np.ndarray:
        return self.tree[self.capacity - 1:]

    def update(self, leaf_indices, values) -> None:
        idx = np.asarray(leaf_indices, dtype=np.int64) + self.capacity - 1
        self.tree[idx] = values
        for _ in range(self.depth):
            idx = np.unique((idx - 1) // 2)
            self.tree[idx] = self.tree[2 * idx + 1] + self.tree[2 * idx + 2]

    def find(self, u) -> np.ndarray:
        """Leaf index whose cumulative-priority interval contains each ``u``."""
        u = np.array(u, dtype=np.float64, ndmin=1)
        idx = np.zeros(u.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * idx + 1
            left_sum = self.tree[left]
            right = u >= left_sum
            u = np.where(right, u - left_sum, u)
            idx = left + right
        return idx - (self.capacity - 1)


class PriorityBuffer(UniformBuffer):
    """Proportional prioritized replay.

    Leaves hold priorities already raised to ``alpha``, so a draw picks leaf
    ``i`` with probability ``p_i / sum(p)``. New entries get the largest
    priority seen so far.
    """

    def __init__(self, capacity: int, alpha: float = 0.6, beta: float = 0.4,
                 beta_steps: int = 100_000, epsilon_priority: float = 1e-6):
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 <= beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        self.tree = SumTree(capacity)
        super().__init__(self.tree.capacity)
        self.alpha = alpha
        self.beta_start = beta
        self.beta_steps = max(1, int(beta_steps))
        self.epsilon_priority = epsilon_priority
        self.max_priority_seen = 1.0
        self.sample_calls = 0

    @property
    def beta(self) -> float:
        frac = min(1.0, self.sample_calls / self.beta_steps)
        return self.beta_start + (1.0 - self.beta_start) * frac

    def add_batch(self, arrays, priority: float | None = None) -> np.ndarray:
        slots = super().add_batch(arrays)
        p = self.max_priority_seen if priority is None else priority
        self.tree.update(slots, np.full(len(slots), p))
        return slots

    def add(self, transition: Transition, priority: float | None = None) -> None:
        self.add_batch(transitions_to_arrays([transition]), priority)

    def probabilities(self) -> np.ndarray:
        return self.tree.leaves[: self.size] / self.tree.total

    def importance_weights(self, indices, beta: float | None = None) -> np.ndarray:
        beta = self.beta if beta is None else beta
        probs = self.tree.leaves[indices] / self.tree.total
        w = (self.size * probs) ** (-beta)
        return w / w.max()

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < batch_size or self.size == 0:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        total = self.tree.total
        u = rng.uniform(0.0, total, batch_size)
        idx = self.tree.find(np.minimum(u, np.nextafter(total, 0.0)))
        weights = self.importance_weights(idx)
        self.sample_calls += 1
        return self.get(idx), idx, weights

    def update_priorities(self, indices, td_errors) -> None:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise IndexError(f"priority index out of range [0, {self.size})")
        p = (np.abs(np.asarray(td_errors, dtype=np.float64)) + self.epsilon_priority) ** self.alpha
        self.tree.update(idx, p)
        if p.size:
            self.max_priority_seen = max(self.max_priority_seen, float(p.max()))


class OnpolicyBuffer:
    """Transitions of the current policy plus per-step auxiliaries.

    Batches are served without replacement; the buffer is cleared once the
    owner has consumed it.
    """

    def __init__(self):
        self._chunks: list[dict[str, np.ndarray]] = []
        self._data: dict[str, np.ndarray] | None = None
        self._cursor = 0

    def __len__(self):
        if self._data is not None:
            return len(self._data["reward"])
        return int(np.sum([len(c["reward"]) for c in self._chunks]))

    def add_batch(self, arrays: dict[str, np.ndarray]) -> None:
        if self._data is not None:
            raise RuntimeError("buffer is being consumed; clear it before adding")
        self._chunks.append(arrays)

    def add(self, transition: Transition, **aux) -> None:
        arrays = transitions_to_arrays([transition])
        arrays.update({k: np.atleast_1d(np.asarray(v, dtype=np.float64)) for k, v in aux.items()})
        self.add_batch(arrays)

    def data(self) -> dict[str, np.ndarray]:
        if self._data is None:
            keys = self._chunks[0].keys() if self._chunks else ()
            self._data = {k: np.concatenate([c[k] for c in self._chunks]) for k in keys}
            self._chunks = []
        return self._data

    @property
    def remaining(self) -> int:
        return len(self) - self._cursor

    def sample(self, batch_size: int, rng=None) -> dict[str, np.ndarray]:
        """Next FIFO slice of the current pass."""
        data = self.data()
        if self.remaining < batch_size:
            raise ValueError(f"only {self.remaining} unconsumed transitions, need {batch_size}")
        sl = slice(self._cursor, self._cursor + batch_size)
        self._cursor += batch_size
        return {k: v[sl] for k, v in data.items()}

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        """One pass over every element exactly once, shuffled when ``rng`` is given."""
        data = self.data()
        n = len(data["reward"])
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            yield {k: v[sel] for k, v in data.items()}

    def clear(self) -> None:
        self._chunks = []
        self._data = None
        self._cursor = 0

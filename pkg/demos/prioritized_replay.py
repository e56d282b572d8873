"""
Proportional prioritized replay
===============================

Transitions are drawn in proportion to ``(|td| + eps) ** alpha`` through a
sum tree, and importance weights correct for the skew.
"""

import numpy as np

from robotask.core import Observation, Transition
from robotask.replay import PriorityBuffer

buffer = PriorityBuffer(capacity=8, alpha=0.6, beta=0.4, beta_steps=1000)
for i in range(8):
    o = Observation([float(i)], [], [0.0], [1.0])
    buffer.add(Transition(o, [0.0], -1.0, o))

# %%
# Pretend the learner found large TD errors on two transitions.
td = np.array([0.1, 0.1, 4.0, 0.1, 0.1, 2.0, 0.1, 0.1])
buffer.update_priorities(np.arange(8), td)
print("sampling probabilities:", np.round(buffer.probabilities(), 3))

# %%
# Empirical frequencies follow the probabilities.
rng = np.random.default_rng(0)
draws = np.concatenate([buffer.sample(8, rng)[1] for _ in range(5000)])
print("empirical frequencies: ", np.round(np.bincount(draws, minlength=8) / len(draws), 3))

# %%
# Frequent samples get small importance weights; beta anneals towards 1.
_, idx, weights = buffer.sample(8, rng)
for i, w in sorted(zip(idx, weights)):
    print(f"  slot {i}: weight {w:.3f}")
print(f"beta after {buffer.sample_calls} sample calls: {buffer.beta:.3f}")

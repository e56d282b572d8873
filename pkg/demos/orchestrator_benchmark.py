"""
Parallel environment resets
===========================

Time 200 resets of an environment that waits 5 ms per reset, spread over
worker processes and over threads inside one worker.
"""

from robotask.orchestrator import OrchestratorConfig, SyntheticEnvSpec, benchmark_resets, summarize

env = SyntheticEnvSpec(reset_cost=0.005, mode="sleep")
rows = []
for workers, per in [(1, 1), (2, 1), (4, 1), (1, 4), (2, 4)]:
    rows += benchmark_resets(OrchestratorConfig(workers, per), env, n_resets=200, repeats=3)

for (workers, per), (mean, sd) in summarize(rows).items():
    print(f"{workers} worker(s) x {per} env(s): {mean:.3f} s +/- {sd:.3f}")

# %%
# A CPU-bound env (mode="busy") only speeds up with more cores, while a
# waiting env also benefits from threads inside a worker.

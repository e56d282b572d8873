"""
Learning to reach with SAC and hindsight relabeling
===================================================

A two-link planar arm learns to put its end effector on random targets from
a sparse reward. Hindsight relabeling turns every failed episode into a
success for the goal it actually reached. Takes a couple of minutes.
"""

import csv
import json
import logging
import tempfile
from pathlib import Path

from robotask.experiment import run

logging.basicConfig(level=logging.INFO, format="%(message)s")

config = {
    "total_timesteps": 30_000,
    "test_interval": 5_000,
    "test_episodes": 50,
    "seed": 0,
    "agent_config": {"name": "sac", "batch_size": 128, "her": {"enabled": True, "strategy": "final"}},
    "env_config": {"robot_config": {"name": "planar2"}, "task_config": {"name": "reach"}},
}

with tempfile.TemporaryDirectory() as results:
    final = run(config, results, config_text=json.dumps(config, indent=2))
    print("\nsuccess ratio by test phase")
    with open(Path(results) / "summary.csv") as fh:
        for row in csv.DictReader(fh):
            print(f"  step {int(row['global_step']):6d}: {float(row['success_ratio']):.2f}")
    print("files:", sorted(p.name for p in Path(results).iterdir()))

# %%
# The same run from the command line:
#
#   robotask run --config reach.json --results results/reach
#   robotask evaluate --checkpoint results/reach --config reach.json --episodes 100

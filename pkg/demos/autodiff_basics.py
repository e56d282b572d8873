"""
Reverse-mode autodiff and a small MLP
=====================================

Operations are recorded only inside a ``Tape``. Here a two-layer network
learns ``sin`` with Adam.
"""

import numpy as np

from robotask import autodiff as ad

# %%
# Gradients of a scalar expression.
x = ad.parameter(np.array([0.5, -1.0, 2.0]))
with ad.Tape() as tape:
    y = ad.sum(ad.tanh(x) * x)
tape.backward(y)
print("d/dx sum(tanh(x) * x) =", np.round(x.grad, 4))
print("analytic               =", np.round(np.tanh(x.data) + x.data * (1 - np.tanh(x.data) ** 2), 4))

# %%
# Fit sin on [-pi, pi].
rng = np.random.default_rng(0)
net = ad.Mlp([1, 32, 32, 1], activation="tanh", rng=rng)
opt = ad.AdamState(net.parameters(), lr=3e-3)
xs = np.linspace(-np.pi, np.pi, 256)[:, None]
ys = np.sin(xs)
for step in range(1501):
    loss = ad.minimize(opt, net.parameters(), lambda: ad.mean(ad.square(net(xs) - ys)))
    if step % 500 == 0:
        print(f"step {step:4d}  mse {loss:.5f}")

# %%
# Checkpoints are plain .npz files.
import tempfile  # noqa: E402
from pathlib import Path  # noqa: E402

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "sin.npz"
    ad.save_checkpoint(path, net.state_dict(), {"target": "sin"})
    arrays, meta = ad.load_checkpoint(path)
    print("saved", sorted(arrays), meta)

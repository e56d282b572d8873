"""Reverse-mode automatic differentiation over float64 numpy arrays.

Operations are recorded only while a :class:`Tape` is active, so plain
forward passes (acting, computing targets) carry no bookkeeping::

    with Tape() as tape:
        loss = mean(square(net(x) - y))
    tape.backward(loss)
    adam_step(opt, net.parameters(), [p.grad for p in net.parameters()])
"""

from __future__ import annotations

import math
import threading

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
SQUASH_EPS = 1e-6
CHECKPOINT_VERSION = 1

_state = threading.local()


def _active_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Tape:
    """Ordered record of primitive operations and their backward rules."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()

    def record(self, out, inputs, backward):
        self.nodes.append((out, inputs, backward))

    def backward(self, output: Tensor) -> None:
        """Populate ``.grad`` of every tensor upstream of scalar ``output``."""
        if output.data.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
        for out, inputs, _ in self.nodes:
            out.grad = None
            for t in inputs:
                t.grad = None
        output.grad = np.ones_like(output.data)
        for out, inputs, fn in reversed(self.nodes):
            if out.grad is None:
                continue
            in_grads = fn(out.grad)
            for t, g in zip(inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad = g if t.grad is None else t.grad + g


def _make(data, inputs, backward) -> Tensor:
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(y, (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors, axis=-1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    y = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(y, tuple(ts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp with zero gradient outside ``[lo, hi]``."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def index(a, idx) -> Tensor:
    a = as_tensor(a)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), back)


def gather_rows(a, cols) -> Tensor:
    """``out[i] = a[i, cols[i]]``."""
    rows = np.arange(a.shape[0])
    return index(a, (rows, np.asarray(cols, dtype=np.int64)))


def detach(a) -> Tensor:
    return Tensor(as_tensor(a).data)


def gaussian_log_prob(mu, log_std, x) -> Tensor:
    """Diagonal Gaussian log-density, summed over the last axis."""
    mu, log_std, x = as_tensor(mu), as_tensor(log_std), as_tensor(x)
    inv_std = np.exp(-log_std.data)
    z = (x.data - mu.data) * inv_std
    y = (-0.5 * LOG_2PI - log_std.data - 0.5 * z * z).sum(axis=-1)

    def back(g):
        g = g[..., None]
        dx = -g * z * inv_std
        return (
            _unbroadcast(-dx, mu.shape),
            _unbroadcast(g * (z * z - 1.0), log_std.shape),
            _unbroadcast(dx, x.shape),
        )

    return _make(y, (mu, log_std, x), back)


def tanh_squash_correction(pre_tanh) -> Tensor:
    """``sum_d log(1 - tanh(u_d)^2 + 1e-6)``, to be subtracted from a log-density."""
    u = as_tensor(pre_tanh)
    t = np.tanh(u.data)
    inner = 1.0 - t * t + SQUASH_EPS
    y = np.log(inner).sum(axis=-1)

    def back(g):
        return (g[..., None] * (-2.0 * t * (1.0 - t * t)) / inner,)

    return _make(y, (u,), back)


# ---------------------------------------------------------------- networks

class Mlp:
    """Fully connected network with a linear output layer.

    Weights use Glorot-uniform initialization, biases start at zero.
    """

    def __init__(self, sizes, activation: str = "relu", rng: np.random.Generator | None = None,
                 output_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.weights, self.biases = [], []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = math.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-bound, bound, (n_in, n_out))
            if i == len(self.sizes) - 2:
                w *= output_scale
            self.weights.append(parameter(w, name=f"w{i}"))
            self.biases.append(parameter(np.zeros(n_out), name=f"b{i}"))

    def parameters(self) -> list[Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def __call__(self, x) -> Tensor:
        act = relu if self.activation == "relu" else tanh
        h = as_tensor(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), b)
            if i < last:
                h = act(h)
        return h

    def predict(self, x) -> np.ndarray:
        """Forward pass on raw arrays, bypassing tensors entirely."""
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < last:
                h = np.maximum(h, 0.0) if self.activation == "relu" else np.tanh(h)
        return h

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes, clone.activation = self.sizes, self.activation
        clone.weights = [parameter(w.data.copy(), w.name) for w in self.weights]
        clone.biases = [parameter(b.data.copy(), b.name) for b in self.biases]
        return clone

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}{p.name}": p.data for p in self.parameters()}

    def load_state_dict(self, arrays: dict, prefix: str = "") -> None:
        for p in self.parameters():
            key = f"{prefix}{p.name}"
            if key not in arrays:
                raise KeyError(f"missing parameter {key!r}")
            if arrays[key].shape != p.shape:
                raise ValueError(f"shape mismatch for {key!r}: {arrays[key].shape} vs {p.shape}")
            p.data = np.array(arrays[key], dtype=np.float64)


def polyak_update(target: Mlp, online: Mlp, tau: float) -> None:
    """``target <- (1 - tau) * target + tau * online``, in place."""
    for t, o in zip(target.parameters(), online.parameters()):
        t.data *= 1.0 - tau
        t.data += tau * o.data


# ---------------------------------------------------------------- optimizer

class AdamState:
    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(state: AdamState, params, grads):
    """Bias-corrected Adam update applied in place; returns ``params``.

    A ``None`` gradient is treated as zero.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params, grads and optimizer state must have equal length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def minimize(state: AdamState, params, loss_fn) -> float:
    """Record ``loss_fn()``, backpropagate and take one Adam step."""
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    adam_step(state, params, [p.grad for p in params])
    return float(loss.data)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays to a versioned ``.npz`` container."""
    import json

    payload = {f"p/{k}": np.asarray(v) for k, v in arrays.items()}
    payload["__version__"] = np.array(CHECKPOINT_VERSION)
    payload["__meta__"] = np.frombuffer(json.dumps(meta or {}, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    import json

    with np.load(path, allow_pickle=False) as z:
        version = int(z["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        meta = json.loads(bytes(z["__meta__"]).decode())
        arrays = {k[2:]: z[k] for k in z.files if k.startswith("p/")}
    return arrays, meta

import math

import numpy as np
import pytest
from helpers import finite_difference, grad_mismatch

from robotask import autodiff as ad
from robotask.autodiff import Mlp, Tape


def away_from_zero(rng, shape, margin=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def check_gradient(op, *arrays, seed=0):
    """Compare tape gradients of ``sum(op(*params) * W)`` against central differences."""
    params = [ad.parameter(a.copy()) for a in arrays]
    rng = np.random.default_rng(seed)
    out_shape = op(*params).shape
    w = rng.normal(size=out_shape)

    def scalar():
        return float((op(*params).data * w).sum())

    with Tape() as tape:
        loss = ad.sum(ad.mul(op(*params), w))
    tape.backward(loss)
    analytic = [p.grad for p in params]
    numeric = finite_difference(scalar, [p.data for p in params])
    return grad_mismatch(analytic, numeric)


R = np.random.default_rng(7)
CASES = {
    "add_broadcast": (lambda a, b: a + b, R.normal(size=(3, 4)), R.normal(size=(4,))),
    "sub": (lambda a, b: a - b, R.normal(size=(3, 4)), R.normal(size=(3, 1))),
    "mul": (lambda a, b: a * b, R.normal(size=(3, 4)), R.normal(size=(1, 4))),
    "scale": (lambda a: ad.scale(a, -2.5), R.normal(size=(5,))),
    "matmul": (lambda a, b: a @ b, R.normal(size=(3, 4)), R.normal(size=(4, 2))),
    "relu": (ad.relu, away_from_zero(R, (4, 3))),
    "tanh": (ad.tanh, R.normal(size=(4, 3))),
    "exp": (ad.exp, R.normal(size=(6,))),
    "log": (ad.log, R.uniform(0.5, 2.0, size=(6,))),
    "square": (ad.square, R.normal(size=(6,))),
    "sum_axis": (lambda a: ad.sum(a, axis=0), R.normal(size=(3, 4))),
    "mean_keepdims": (lambda a: ad.mean(a, axis=1, keepdims=True), R.normal(size=(3, 4))),
    "concat": (lambda a, b: ad.concat([a, b], axis=-1), R.normal(size=(3, 2)), R.normal(size=(3, 3))),
    "minimum": (ad.minimum, R.normal(size=(8,)), R.normal(size=(8,)) + 0.05),
    "clip": (lambda a: ad.clip(a, -0.5, 0.5), np.array([-1.0, -0.3, 0.0, 0.2, 0.9])),
    "index": (lambda a: ad.index(a, (np.array([0, 2, 0]),)), R.normal(size=(3, 2))),
    "gather_rows": (lambda a: ad.gather_rows(a, [2, 0, 1]), R.normal(size=(3, 3))),
    "gaussian_log_prob": (ad.gaussian_log_prob, R.normal(size=(4, 2)), R.normal(size=(4, 2)) * 0.3,
                          R.normal(size=(4, 2))),
    "tanh_squash_correction": (ad.tanh_squash_correction, R.normal(size=(4, 2))),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients_match_finite_differences(name):
    op, *arrays = CASES[name]
    assert check_gradient(op, *arrays) == []


def test_known_values():
    with Tape() as tape:
        x = ad.parameter(np.zeros(1))
        y = ad.sum(ad.tanh(x))
    tape.backward(y)
    assert y.data == 0.0 and x.grad[0] == 1.0

    lp = ad.gaussian_log_prob(np.zeros(3), np.zeros(3), np.zeros(3))
    assert float(lp.data) == pytest.approx(-0.5 * math.log(2 * math.pi) * 3, abs=1e-12)


def test_identity_and_square_gradients():
    x = ad.parameter(np.array([1.5, -2.0, 0.25]))
    with Tape() as tape:
        y = ad.sum(x)
    tape.backward(y)
    assert np.array_equal(x.grad, np.ones(3))
    with Tape() as tape:
        y = ad.sum(ad.square(x))
    tape.backward(y)
    assert np.array_equal(x.grad, 2 * x.data)


def test_reused_tensor_accumulates():
    x = ad.parameter(np.array([3.0]))
    with Tape() as tape:
        y = ad.sum(x * x + x)
    tape.backward(y)
    assert x.grad[0] == pytest.approx(7.0)


def test_non_scalar_backward_raises():
    x = ad.parameter(np.ones(3))
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ValueError):
        tape.backward(y)


def test_nothing_recorded_outside_tape():
    x = ad.parameter(np.ones(3))
    y = ad.tanh(x)
    assert not y.requires_grad
    with Tape() as tape:
        z = ad.tanh(x)
    assert z.requires_grad and len(tape.nodes) == 1


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_mlp_gradients_match_finite_differences(activation):
    rng = np.random.default_rng(3)
    net = Mlp([4, 6, 5, 2], activation, rng)
    x = away_from_zero(rng, (5, 4))
    target = rng.normal(size=(5, 2))

    def scalar():
        return float(((net.predict(x) - target) ** 2).mean())

    with Tape() as tape:
        loss = ad.mean(ad.square(net(x) - target))
    tape.backward(loss)
    analytic = [p.grad for p in net.parameters()]
    numeric = finite_difference(scalar, [p.data for p in net.parameters()])
    assert grad_mismatch(analytic, numeric) == []
    assert float(loss.data) == pytest.approx(scalar(), rel=1e-12)


def test_mlp_predict_matches_taped_forward():
    net = Mlp([3, 8, 2], "relu", np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(7, 3))
    with Tape():
        taped = net(x).data
    assert np.allclose(taped, net.predict(x), atol=1e-14)


def test_polyak_update_analytic():
    rng = np.random.default_rng(0)
    online, target = Mlp([2, 3, 1], rng=rng), Mlp([2, 3, 1], rng=rng)
    before = [p.data.copy() for p in target.parameters()]
    ad.polyak_update(target, online, 0.1)
    for b, t, o in zip(before, target.parameters(), online.parameters()):
        assert np.allclose(t.data, 0.9 * b + 0.1 * o.data)
    ad.polyak_update(target, online, 1.0)
    for t, o in zip(target.parameters(), online.parameters()):
        assert np.array_equal(t.data, o.data)


def test_adam_zero_gradient_is_a_fixed_point():
    w = ad.parameter(np.array([1.0, -2.0]))
    opt = ad.AdamState([w], lr=0.1)
    for _ in range(5):
        ad.adam_step(opt, [w], [np.zeros(2)])
    assert np.array_equal(w.data, [1.0, -2.0])
    ad.adam_step(opt, [w], [None])
    assert np.array_equal(w.data, [1.0, -2.0])


def test_adam_constant_gradient_steps_by_lr():
    w = ad.parameter(np.array([0.0]))
    opt = ad.AdamState([w], lr=0.01)
    for k in range(1, 6):
        ad.adam_step(opt, [w], [np.array([3.0])])
        assert w.data[0] == pytest.approx(-0.01 * k, rel=1e-6)


def test_adam_converges_on_quadratic():
    w = ad.parameter(np.array([0.0]))
    opt = ad.AdamState([w], lr=0.1)
    for _ in range(200):
        ad.minimize(opt, [w], lambda: ad.sum(ad.square(w - 3.0)))
    assert abs(w.data[0] - 3.0) < 0.05


def test_adam_rejects_shape_mismatch():
    w = ad.parameter(np.zeros(2))
    opt = ad.AdamState([w])
    with pytest.raises(ValueError):
        ad.adam_step(opt, [w], [np.zeros(3)])


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = Mlp([3, 5, 2], "tanh", np.random.default_rng(4))
    path = tmp_path / "c.npz"
    ad.save_checkpoint(path, net.state_dict("actor/"), {"agent": "sac", "step": 12})
    arrays, meta = ad.load_checkpoint(path)
    assert meta == {"agent": "sac", "step": 12}
    other = Mlp([3, 5, 2], "tanh", np.random.default_rng(99))
    other.load_state_dict(arrays, "actor/")
    for a, b in zip(net.parameters(), other.parameters()):
        assert np.array_equal(a.data, b.data)
    x = np.random.default_rng(5).normal(size=(4, 3))
    assert np.array_equal(net.predict(x), other.predict(x))


def test_checkpoint_shape_mismatch_raises(tmp_path):
    path = tmp_path / "c.npz"
    ad.save_checkpoint(path, Mlp([3, 5, 2]).state_dict())
    arrays, _ = ad.load_checkpoint(path)
    with pytest.raises(ValueError):
        Mlp([3, 6, 2]).load_state_dict(arrays)


def test_training_is_deterministic_under_fixed_seed():
    def train(seed):
        rng = np.random.default_rng(seed)
        net = Mlp([2, 8, 1], "relu", rng)
        opt = ad.AdamState(net.parameters(), lr=1e-2)
        x = rng.normal(size=(16, 2))
        y = x[:, :1] * x[:, 1:]
        for _ in range(20):
            ad.minimize(opt, net.parameters(), lambda: ad.mean(ad.square(net(x) - y)))
        return [p.data.copy() for p in net.parameters()]

    for a, b in zip(train(11), train(11)):
        assert np.array_equal(a, b)

import math

import numpy as np
import pytest

from fmricnn.errors import IndivisibleExtent, NonFiniteLoss, ShapeMismatch, UsageError
from fmricnn.nn import (
    LayerSpec, NetworkConfig, build_network, gradient_check, lenet5, small_lenet,
)


def test_default_lenet_shapes():
    net = build_network()
    assert net.shapes == [(1, 28, 28), (20, 24, 24), (20, 12, 12), (50, 8, 8), (50, 4, 4),
                          (500,), (500,), (2,), (2,)]
    assert [l.name for l in net.all_layers] == ["conv1", "pool1", "conv2", "pool2", "fc1", "relu1", "fc2", "loss"]
    assert net.num_parameters() == (20 * 25 + 20) + (50 * 20 * 25 + 50) + (800 * 500 + 500) + (500 * 2 + 2)


@pytest.mark.parametrize("h,w", [(16, 16), (28, 28), (32, 20), (36, 44)])
def test_shape_inference(h, w):
    net = build_network(lenet5((1, h, w)))
    out = net.forward(np.zeros((3, 1, h, w)))
    assert out.shape == (3, 2)
    ch, oh, ow = net.shapes[4]
    assert (oh, ow) == (((h - 4) // 2 - 4) // 2, ((w - 4) // 2 - 4) // 2)


def test_odd_pool_extent_rejected():
    with pytest.raises(IndivisibleExtent):
        build_network(lenet5((1, 45, 54)))


def test_input_shape_checked():
    net = build_network()
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((1, 1, 28, 30)))


def test_must_end_in_loss():
    with pytest.raises(ShapeMismatch):
        build_network(NetworkConfig((LayerSpec("fc", 2),), (1, 4, 4)))


def test_unknown_layer():
    with pytest.raises(UsageError):
        build_network(NetworkConfig((LayerSpec("dropout"), LayerSpec("softmax_xent", 2)), (1, 4, 4)))


def test_init_bounds_and_determinism():
    a, b, c = build_network(seed=5), build_network(seed=5), build_network(seed=6)
    for (name, p, _), (_, q, _), (_, r, _) in zip(a.parameters(), b.parameters(), c.parameters()):
        assert np.array_equal(p, q)
        layer = a.layer(name.split(".")[0])
        if name.endswith("bias"):
            assert not p.any()
        else:
            assert np.abs(p).max() <= math.sqrt(3.0 / layer.fan_in)
            assert not np.array_equal(p, r)


def test_uniform_loss_at_zero_weights():
    net = build_network(seed=0)
    net.layer("fc2").params["weight"][...] = 0.0
    loss = net.loss(np.random.default_rng(0).normal(size=(4, 1, 28, 28)), np.array([0, 1, 1, 0]))
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def test_non_finite_loss():
    net = build_network(seed=0)
    net.layer("fc2").params["bias"][0] = np.inf
    with pytest.raises(NonFiniteLoss), np.errstate(invalid="ignore"):
        net.loss(np.zeros((1, 1, 28, 28)), np.array([1]))


def test_state_dict_round_trip():
    a, b = build_network(seed=1), build_network(seed=2)
    b.load_state_dict(a.state_dict())
    assert all(np.array_equal(p, q) for (_, p, _), (_, q, _) in zip(a.parameters(), b.parameters()))


# -- gradient checks -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_gradcheck_small_lenet(seed):
    rng = np.random.default_rng(seed)
    net = build_network(small_lenet(), seed=seed)
    report = gradient_check(net, rng.normal(size=(4, 1, 12, 12)), rng.integers(0, 2, 4), step=1e-5)
    assert report.passed and report.max_rel_error < 1e-4
    assert [b.name for b in report.blocks] == [
        "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
        "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]


def test_gradcheck_single_fc():
    config = NetworkConfig((LayerSpec("fc", 2), LayerSpec("softmax_xent", 2)), (1, 3, 3))
    rng = np.random.default_rng(0)
    net = build_network(config, seed=0)
    report = gradient_check(net, rng.normal(size=(4, 1, 3, 3)), rng.integers(0, 2, 4))
    assert report.max_rel_error < 1e-7


def test_gradcheck_default_lenet_sampled():
    rng = np.random.default_rng(3)
    net = build_network(seed=3)
    report = gradient_check(net, rng.normal(size=(2, 1, 28, 28)), np.array([0, 1]), max_per_block=15)
    assert report.passed
    assert all(b.checked + b.skipped_kinks == min(15, p.size)
               for b, (_, p, _) in zip(report.blocks, net.parameters()))


def test_gradcheck_restores_parameters():
    rng = np.random.default_rng(1)
    net = build_network(small_lenet(), seed=1)
    before = net.state_dict()
    gradient_check(net, rng.normal(size=(2, 1, 12, 12)), np.array([0, 1]))
    assert all(np.array_equal(before[k], p) for k, p, _ in net.parameters())


def test_gradcheck_detects_wrong_gradient(monkeypatch):
    rng = np.random.default_rng(0)
    net = build_network(small_lenet(), seed=0)
    fc = net.layer("fc2")
    original = fc.backward

    def broken(grad):
        out = original(grad)
        fc.grads["bias"] *= 1.01
        return out

    monkeypatch.setattr(fc, "backward", broken)
    report = gradient_check(net, rng.normal(size=(4, 1, 12, 12)), rng.integers(0, 2, 4))
    assert not report.passed
    assert report.blocks[-1].max_rel_error > 1e-3


def test_gradcheck_kink_is_skipped():
    # zero first layer puts every ReLU pre-activation exactly on the kink
    config = NetworkConfig((LayerSpec("fc", 3), LayerSpec("relu"), LayerSpec("fc", 2),
                            LayerSpec("softmax_xent", 2)), (1, 2, 2))
    net = build_network(config, seed=0)
    for p in net.layer("fc1").params.values():
        p[...] = 0.0
    rng = np.random.default_rng(0)
    report = gradient_check(net, rng.normal(size=(2, 1, 2, 2)), np.array([0, 1]))
    fc1_bias = next(b for b in report.blocks if b.name == "fc1.bias")
    assert fc1_bias.skipped_kinks == 3 and fc1_bias.checked == 0
    assert report.passed


def test_gradcheck_zero_step():
    net = build_network(small_lenet(), seed=0)
    with pytest.raises(UsageError):
        gradient_check(net, np.zeros((1, 1, 12, 12)), np.array([0]), step=0.0)

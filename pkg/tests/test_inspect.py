import numpy as np
import pytest

from fmricnn.dataset import SliceImage
from fmricnn.errors import NoSuchLayer, NotAConvLayer, ShapeMismatch
from fmricnn.inspect import (
    HIST_BINS, STATS_HEADER, dump_filters, filter_to_gray, layer_statistics, read_pgm, stats_csv, tensor_stats,
)
from fmricnn.nn import build_network, lenet5


def test_zero_input_zero_bias_activations():
    net = build_network(seed=0)
    stats = layer_statistics(net, SliceImage(np.zeros((28, 28)), 0))
    acts = [s for s in stats if s.role == "activations"]
    assert [s.layer for s in acts] == ["data", "conv1", "pool1", "conv2", "pool2", "fc1", "relu1", "fc2"]
    for s in acts:
        assert (s.min, s.max, s.mean, s.std) == (0.0, 0.0, 0.0, 0.0)
        assert s.count == int(np.prod(net.shapes[max(0, acts.index(s))]))


def test_stats_match_recount(rng):
    net = build_network(seed=1)
    sample = rng.uniform(size=(28, 28))
    stats = layer_statistics(net, sample)
    acts = dict(zip([l.name for l in net.layers], net.activations(sample[None, None])))
    for s in stats:
        if s.layer == "data":
            values = sample.ravel()
        elif s.role == "weights":
            values = net.layer(s.layer).params["weight"].ravel()
        else:
            values = acts[s.layer].ravel()
        n = values.size
        mean = sum(float(v) for v in values) / n
        var = sum((float(v) - mean) ** 2 for v in values) / n
        assert s.min == min(values) and s.max == max(values)
        assert s.mean == pytest.approx(mean, abs=1e-12)
        assert s.std == pytest.approx(var ** 0.5, abs=1e-12)
        assert s.count == n and len(s.histogram) == HIST_BINS
        assert s.min <= s.mean <= s.max


def test_constant_weights():
    net = build_network(seed=0)
    net.layer("conv1").params["weight"][...] = 0.25
    s = next(s for s in layer_statistics(net, np.zeros((28, 28))) if s.layer == "conv1" and s.role == "weights")
    assert (s.min, s.max, s.mean, s.std) == (0.25, 0.25, 0.25, 0.0)


def test_batch_replication_invariance(rng):
    values = rng.normal(size=(3, 7, 7))
    a = tensor_stats("x", "activations", values)
    b = tensor_stats("x", "activations", np.concatenate([values] * 4))
    assert (a.min, a.max) == (b.min, b.max)
    assert a.mean == pytest.approx(b.mean, abs=1e-12) and a.std == pytest.approx(b.std, abs=1e-12)
    np.testing.assert_array_equal(b.histogram, 4 * a.histogram)


def test_sample_shape_checked():
    with pytest.raises(ShapeMismatch):
        layer_statistics(build_network(), np.zeros((16, 16)))


def test_stats_csv_header(rng):
    text = stats_csv(layer_statistics(build_network(), rng.uniform(size=(28, 28))))
    assert text.splitlines()[0] == ",".join(STATS_HEADER)


def test_dump_conv1_and_conv2(tmp_path):
    net = build_network(seed=0)
    assert dump_filters(net, "conv1", tmp_path) == 20
    img = read_pgm(tmp_path / "conv1_o0_i0.pgm")
    assert img.shape == (5, 5) and img.min() == 0 and img.max() == 255
    assert dump_filters(net, "conv2", tmp_path) == 1000
    assert (tmp_path / "conv2_o49_i19.pgm").exists()
    assert len(list(tmp_path.glob("*.pgm"))) == 1020


def test_pgm_bytes(tmp_path):
    net = build_network(lenet5((1, 16, 16), conv=(1, 1), hidden=4), seed=0)
    dump_filters(net, "conv1", tmp_path)
    raw = (tmp_path / "conv1_o0_i0.pgm").read_bytes()
    assert raw.startswith(b"P5\n5 5\n255\n") and len(raw) == len(b"P5\n5 5\n255\n") + 25


def test_constant_filter_mid_gray():
    assert (filter_to_gray(np.full((5, 5), 3.0)) == 128).all()


def test_filter_errors(tmp_path):
    net = build_network()
    with pytest.raises(NotAConvLayer):
        dump_filters(net, "fc1", tmp_path)
    with pytest.raises(NoSuchLayer):
        dump_filters(net, "conv9", tmp_path)

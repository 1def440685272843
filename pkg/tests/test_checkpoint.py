import struct

import numpy as np
import pytest

from fmricnn.errors import BadMagic, DataError
from fmricnn.nn import build_network, checkpoint, lenet5, small_lenet


def test_round_trip_inference(tmp_path, rng):
    net = build_network(seed=4)
    for _, p, _ in net.parameters():
        p += rng.normal(scale=0.05, size=p.shape)
    checkpoint.save(tmp_path / "m.lnt5", net)
    back = checkpoint.load(tmp_path / "m.lnt5")
    assert back.shapes == net.shapes
    for (name, p, _), (_, q, _) in zip(net.parameters(), back.parameters()):
        assert np.abs(p - q).max() <= 1e-6, name
        assert np.array_equal(q, p.astype(np.float32).astype(np.float64))
    x = rng.normal(size=(16, 1, 28, 28))
    np.testing.assert_allclose(back.predict_proba(x), net.predict_proba(x), rtol=0, atol=1e-6)


def test_layout(rng):
    net = build_network(small_lenet(), seed=0)
    raw = checkpoint.to_bytes(net)
    assert raw[:4] == b"LNT5"
    version, count = struct.unpack_from("<HI", raw, 4)
    assert (version, count) == (1, 8)
    n_params = net.num_parameters()
    header_bytes = 4 + 6 + 6 + sum(2 + 4 * n for n in (4, 2, 4, 2, 2, 0, 2, 1))
    assert len(raw) == header_bytes + 4 * n_params


def test_reserialize_is_identical():
    net = build_network(lenet5((1, 16, 16)), seed=9)
    raw = checkpoint.to_bytes(net)
    assert checkpoint.to_bytes(checkpoint.from_bytes(raw)) == raw


def test_best_state_written(tmp_path):
    net = build_network(small_lenet(), seed=0)
    other = build_network(small_lenet(), seed=1).state_dict()
    checkpoint.save(tmp_path / "b.lnt5", net, other)
    back = checkpoint.load(tmp_path / "b.lnt5")
    np.testing.assert_allclose(back.layer("conv1").params["weight"], other["conv1.weight"], atol=1e-7)


def test_bad_magic():
    with pytest.raises(BadMagic):
        checkpoint.from_bytes(b"XXXX" + b"\x00" * 20)


def test_truncated():
    raw = checkpoint.to_bytes(build_network(small_lenet(), seed=0))
    with pytest.raises(DataError):
        checkpoint.from_bytes(raw[:-3])
    with pytest.raises(DataError):
        checkpoint.from_bytes(raw[:12])

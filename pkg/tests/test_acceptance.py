"""Acceptance criteria 1-10, one test each.

A ``criterion N: PASS|FAIL`` line per criterion is printed in the terminal
summary (see conftest.py). Criteria 6, 7 and 10 train full LeNet-5 models and
take about a minute together on one core.
"""
import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _data import have_mnist, mnist_paths
from oracles import conv_direct
from fmricnn import nifti
from fmricnn.cli import main
from fmricnn.crossval import DISJOINT, PUBLISHED_MEAN, PUBLISHED_RUN_ACCURACIES, run_split, summarize
from fmricnn.dataset import (
    PIXEL_F32, PIXEL_U8, SliceRecordStore, SplitSpec, Split, compute_mean_image, generate_synthetic,
    load_idx_pair, split, split_sizes,
)
from fmricnn.nn import Conv2D, build_network, checkpoint, conv_forward, gradient_check, lenet5, small_lenet
from fmricnn.trainer import TrainConfig, evaluate, iterations_for, lr_at, train


@pytest.mark.criterion(1)
def test_iteration_accounting(record_property):
    n = iterations_for(270_900, 64, 30)
    record_property("detail", f"iterations_for(270900, 64, 30) = {n}")
    assert n == 126_990




@pytest.mark.criterion(2)
def test_split_arithmetic(record_property):
    sizes = split_sizes(451_500, (0.6, 0.2, 0.2))
    store = SliceRecordStore.from_arrays(np.zeros((451_500, 1, 1), np.uint8), np.zeros(451_500, int),
                                         ["s"] * 451_500, pixel_format=PIXEL_U8)
    parts = split(store, SplitSpec((0.6, 0.2, 0.2), seed=0))
    record_property("detail", f"sizes = {tuple(map(len, parts))}")
    assert sizes == (270_900, 90_300, 90_300)
    assert tuple(map(len, parts)) == sizes


@pytest.mark.criterion(3)
def test_lr_schedule(record_property):
    cfg = TrainConfig()
    got = [lr_at(cfg, e) for e in range(30)]
    want = [0.01] * 10 + [0.001] * 10 + [0.0001] * 10
    record_property("detail", f"distinct = {sorted(set(got), reverse=True)}")
    assert got == want


@pytest.mark.criterion(4)
def test_gradient_fidelity(record_property):
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        net = build_network(small_lenet((1, 12, 12)), seed=seed)
        assert net.layer("conv1").params["weight"].shape[0] == 2
        assert net.layer("conv2").params["weight"].shape[0] == 4
        assert net.layer("fc1").params["weight"].shape[0] == 32
        x = rng.normal(size=(4, 1, 12, 12))
        y = rng.integers(0, 2, size=4)
        report = gradient_check(net, x, y, step=1e-5, tolerance=1e-4)
        assert len(report.blocks) == 8
        worst = max(worst, report.max_rel_error)
    record_property("detail", f"max relative error over 5 seeds = {worst:.3e} (< 1e-4)")
    assert worst < 1e-4


@pytest.mark.criterion(5)
def test_convolution_oracle(record_property):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        k = int(rng.choice([1, 3, 5]))
        n, c = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        h, w = (int(v) for v in rng.integers(k, 17, size=2))
        layer = Conv2D(c, int(rng.integers(1, 4)), k)
        layer.params["weight"][...] = rng.normal(size=layer.params["weight"].shape)
        layer.params["bias"][...] = rng.normal(size=layer.params["bias"].shape)
        x = rng.normal(size=(n, c, h, w))
        got = conv_forward(layer, x)
        want = conv_direct(x, layer.params["weight"], layer.params["bias"])
        worst = max(worst, float(np.abs(got - want).max()))
    record_property("detail", f"max |conv - direct| over 100 instances = {worst:.2e} (<= 1e-12)")
    assert worst <= 1e-12


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def synthetic_runs(tmp_path_factory):
    """Two CLI training runs on the 20 x 200 synthetic store with the same seed."""
    root = tmp_path_factory.mktemp("surrogate_a")
    store = root / "synth.fmrc"
    assert main(["synth", "--out", str(store), "--subjects", "20", "--slices", "200", "--seed", "0"]) == 0
    runs = []
    for name in ("run1", "run2"):
        out = root / name
        assert main(["train", "--store", str(store), "--out", str(out), "--epochs", "5", "--seed", "0",
                     "--threads", "1", "--quiet"]) == 0
        runs.append(out)
    return runs


@pytest.mark.slow
@pytest.mark.criterion(6)
def test_surrogate_training_synthetic(synthetic_runs, record_property):
    m1, m2 = (json.loads((r / "run_manifest.json").read_text()) for r in synthetic_runs)
    acc = m1["test_accuracy_best"]
    record_property("detail", f"test accuracy {acc:.3f}% on {m1['n_test']} slices (>= 95), "
                              f"rerun {m2['test_accuracy_best']:.3f}%")
    assert m1["n_train"] + m1["n_val"] + m1["n_test"] == 4000
    assert acc >= 95.0
    assert acc == m2["test_accuracy_best"] and m1["test_accuracy_final"] == m2["test_accuracy_final"]
    assert _digest(synthetic_runs[0] / "model_best.lnt5") == _digest(synthetic_runs[1] / "model_best.lnt5")


@pytest.mark.slow
@pytest.mark.criterion(7)
@pytest.mark.skipif(not have_mnist(), reason="MNIST IDX files not found; set FMRICNN_MNIST_DIR")
def test_surrogate_training_digits(record_property):
    # 10,000 train and 2,000 validation from the training file; 2,000 test from t10k
    pool = load_idx_pair(*mnist_paths("train"), {0: 0, 1: 1}, limit=12_000)
    test = load_idx_pair(*mnist_paths("t10k"), {0: 0, 1: 1}, limit=2_000)
    store = SliceRecordStore.concat([pool, test])
    parts = Split(np.arange(10_000), np.arange(10_000, 12_000), np.arange(12_000, 14_000))
    mean = compute_mean_image(store, parts.train)
    net = build_network(lenet5((1, 28, 28)), seed=0)
    net, log = train(net, store, parts, mean, TrainConfig(epochs=5, seed=0))
    net.load_state_dict(net.best_state)
    _, acc = evaluate(net, store, parts.test, mean)
    record_property("detail", f"test accuracy {acc:.3f}% on 2000 digits (>= 98), "
                              f"{log.iterations} iterations")
    assert log.iterations == 5 * 157
    assert acc >= 98.0


@pytest.mark.criterion(8)
def test_cv_harness(record_property):
    @given(st.integers(0, 2**63))
    @settings(max_examples=50, deadline=None)
    def partition(seed):
        store = SliceRecordStore.from_arrays(np.zeros((1000, 1, 1)), np.zeros(1000, int), ["s"] * 1000)
        runs = [run_split(store, 5, r, seed, DISJOINT) for r in range(5)]
        tests = [r.test for r in runs]
        assert [len(t) for t in tests] == [200] * 5
        assert np.array_equal(np.sort(np.concatenate(tests)), np.arange(1000))
        for r in runs:
            assert tuple(map(len, r)) == (600, 200, 200)
            assert np.array_equal(np.sort(np.concatenate(r)), np.arange(1000))

    partition()
    s = summarize(list(PUBLISHED_RUN_ACCURACIES), reference_mean=PUBLISHED_MEAN)
    record_property("detail", f"mean = {s.mean!r}, reported {PUBLISHED_MEAN}, flagged = {bool(s.flags())}")
    assert abs(s.mean - 96.85816) <= 1e-9
    assert s.flags() and "flag" in s.to_csv()


@pytest.mark.criterion(9)
def test_format_round_trips(tmp_path, record_property):
    rng = np.random.default_rng(9)
    checks = []

    for code, dtype in ((2, np.uint8), (4, np.int16), (8, np.int32), (16, np.float32), (64, np.float64)):
        data = (rng.uniform(0, 100, size=(5, 6, 7, 3))).astype(dtype)
        for order in "<>":
            nifti.save(tmp_path / "v.nii", data, datatype_code=code, byteorder=order)
            vol = nifti.load(tmp_path / "v.nii")
            assert vol.data.dtype == np.float64
            assert np.array_equal(vol.data, data.astype(np.float64))
    checks.append("nifti")

    for fmt in (PIXEL_U8, PIXEL_F32):
        store = generate_synthetic(3, 10, 12, 9, seed=1, pixel_format=fmt)
        store.write(tmp_path / "s.fmrc")
        back = SliceRecordStore.read(tmp_path / "s.fmrc")
        assert back.to_bytes() == store.to_bytes()
        for f in ("label", "subject", "z", "t"):
            assert np.array_equal(back.records[f], store.records[f])
        assert np.array_equal(back.pixels(), store.pixels())
    checks.append("store")

    net = build_network(seed=3)
    checkpoint.save(tmp_path / "m.lnt5", net)
    loaded = checkpoint.load(tmp_path / "m.lnt5")
    worst = 0.0
    for key, value in net.state_dict().items():
        worst = max(worst, float(np.abs(loaded.state_dict()[key] - value).max()))
    assert loaded.input_shape == net.input_shape and worst <= 1e-6
    checks.append("checkpoint")
    record_property("detail", f"{', '.join(checks)} ok; checkpoint max |diff| = {worst:.1e}")


@pytest.mark.slow
@pytest.mark.criterion(10)
def test_determinism(synthetic_runs, record_property):
    a, b = (_digest(r / "metrics.csv") for r in synthetic_runs)
    record_property("detail", f"metrics.csv sha256 {a[:16]} vs {b[:16]}")
    assert a == b

import warnings

import numpy as np
import pytest

from saccadeconv.events import EventStream, make_events
from saccadeconv.skim import (
    RidgeAccumulator,
    SkimConfig,
    SkimNetwork,
    alpha_kernel,
    batch_ridge,
    classify_outputs,
    evaluate_skim,
    read_matrix,
    train,
    write_matrix,
)


def spikes(xs, ys, ts, w=8, h=8, duration=100_000, ps=None):
    ps = [1] * len(xs) if ps is None else ps
    return EventStream(make_events(xs, ys, ps, ts), w, h, duration)


def small_net(hidden=20, **kw):
    return SkimNetwork(8, 8, 2, SkimConfig(hidden=hidden, **kw))


class TestKernel:
    def test_alpha_peak(self):
        h = alpha_kernel(100, 20, 10)
        assert np.argmax(h) == 30 and h[30] == pytest.approx(1.0)
        assert not h[:21].any()

    def test_support_within_max_duration(self):
        net = SkimNetwork(34, 34, 10, SkimConfig(hidden=5000))
        assert (net.delays >= 0).all() and (net.delays <= 200).all()
        assert (net.taus >= 5).all() and (net.taus <= 40).all()
        for d, tau in zip(net.delays, net.taus):
            tail = alpha_kernel(400, d, tau)[316:]
            assert tail.max() < 1e-3

    def test_seeded(self):
        a, b = small_net(seed=4), small_net(seed=4)
        np.testing.assert_array_equal(a.input_weights, b.input_weights)
        np.testing.assert_array_equal(a.kernels, b.kernels)


class TestForward:
    def test_no_input(self):
        act = small_net().forward(EventStream.empty(8, 8, 100_000))
        assert act.shape == (100, 20)
        np.testing.assert_allclose(act, 0.5)

    def test_single_spike_peak(self):
        net = small_net(hidden=3)
        net.delays = np.array([20.0, 50.0, 0.0])
        net.taus = np.array([10.0, 5.0, 30.0])
        net.kernels = np.stack([alpha_kernel(316, d, t) for d, t in zip(net.delays, net.taus)], 1)
        act = net.forward(spikes([3], [2], [0], duration=200_000))
        peaks = np.argmax(np.abs(act - 0.5), axis=0)
        np.testing.assert_array_equal(peaks, [30, 55, 30])

    def test_open_interval(self):
        rng = np.random.default_rng(0)
        n = 3000
        s = spikes(rng.integers(0, 8, n), rng.integers(0, 8, n), np.sort(rng.integers(0, 100_000, n)))
        act = small_net(input_gain=5.0).forward(s)
        assert (act > 0).all() and (act < 1).all()

    def test_gain_monotone(self):
        rng = np.random.default_rng(1)
        s = spikes(rng.integers(0, 8, 300), rng.integers(0, 8, 300), np.sort(rng.integers(0, 100_000, 300)))
        net = small_net()
        a = np.abs(net.forward(s) - 0.5)
        net.input_weights = net.input_weights * 2
        b = np.abs(net.forward(s) - 0.5)
        assert (b >= a - 1e-15).all()

    def test_two_channel_and_downsample(self):
        net = SkimNetwork(8, 8, 2, SkimConfig(hidden=4, two_channel=True, downsample=2))
        assert net.n_inputs == 4 * 4 * 2
        m = net.input_matrix(spikes([0, 7], [0, 7], [0, 5000], ps=[0, 1]))
        assert m[0, 0] == 1 and m[5, 2 * 15 + 1] == 1

    def test_truncation_warns(self):
        net = small_net(max_duration_ms=50)
        with pytest.warns(UserWarning, match="truncated"):
            act = net.forward(spikes([1, 1], [1, 1], [0, 70_000]))
        assert act.shape[0] == 50

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            small_net().forward(EventStream.empty(4, 4, 1000))


def toy_set(n_per_class=5, seed=0):
    """Class 0 fires in the left half early; class 1 in the right half late."""
    rng = np.random.default_rng(seed)
    recs = []
    for label, (x0, t0) in enumerate([(0, 0), (4, 50_000)]):
        for _ in range(n_per_class):
            n = 60
            t = np.sort(rng.integers(t0, t0 + 40_000, n))
            recs.append((spikes(rng.integers(x0, x0 + 4, n), rng.integers(0, 8, n), t), label))
    return recs


class TestTraining:
    def test_zero_targets(self):
        acc = RidgeAccumulator(5, 2)
        acc.add(np.random.default_rng(0).random((30, 5)), np.zeros((30, 2)))
        assert not acc.solve(1e-4).any()

    def test_single_recording_oracle(self):
        net = small_net()
        s, _ = toy_set(1)[0]
        w = train(net, [(s, 0)])
        h = net.forward(s)
        y = net.target(h.shape[0], 0)
        oracle = np.linalg.solve(h.T @ h + 1e-4 * np.eye(20), h.T @ y)
        np.testing.assert_allclose(w, oracle, atol=1e-8)
        # ridge solution never fits worse than the zero map plus the penalty paid
        resid = np.sum((h @ w - y) ** 2)
        assert resid + 1e-4 * np.sum(w**2) <= np.sum(y**2)

    def test_permutation(self):
        recs = toy_set()
        w1 = train(small_net(), recs)
        order = np.random.default_rng(3).permutation(len(recs))
        w2 = train(small_net(), [recs[i] for i in order])
        assert np.abs(w1 - w2).max() <= 1e-6

    def test_incremental_matches_batch(self):
        net = small_net(hidden=50)
        hs, ys = [], []
        acc = RidgeAccumulator(50, 2)
        for s, lab in toy_set():
            h = net.forward(s)
            y = net.target(h.shape[0], lab)
            acc.add(h, y)
            hs.append(h)
            ys.append(y)
        assert np.abs(acc.solve(1e-4) - batch_ridge(hs, ys, 1e-4)).max() <= 1e-6

    def test_singular_escalates(self):
        acc = RidgeAccumulator(3, 1)
        acc.add(np.ones((4, 3)), np.ones((4, 1)))
        with pytest.warns(UserWarning, match="singular"):
            w = acc.solve(0.0)
        assert np.isfinite(w).all()

    def test_too_many_labels(self):
        recs = toy_set(1)
        with pytest.raises(ValueError):
            train(small_net(), recs + [(recs[0][0], 7)])

    def test_memorises_toy_set(self):
        net = small_net(hidden=100, input_gain=3.0)
        recs = toy_set()
        train(net, recs)
        assert evaluate_skim(net, recs).balanced_accuracy == 1.0

    def test_untrained(self):
        with pytest.raises(RuntimeError):
            small_net().outputs(EventStream.empty(8, 8, 1000))


class TestClassify:
    def test_dominant(self):
        out = np.zeros((50, 3))
        out[-10:, 2] = 0.9
        out[-10:, 0] = 0.4
        assert classify_outputs(out, 10) == 2

    def test_tie_lowest(self):
        out = np.zeros((20, 3))
        out[-1, 1] = out[-1, 2] = 1.0
        assert classify_outputs(out, 10) == 1

    def test_only_window_counts(self):
        out = np.zeros((50, 2))
        out[5, 0] = 9.0
        out[-3, 1] = 0.1
        assert classify_outputs(out, 10) == 1


class TestWeightFile:
    def test_round_trip(self, tmp_path):
        m = np.random.default_rng(0).normal(size=(7, 3))
        write_matrix(tmp_path / "w.bin", m)
        np.testing.assert_array_equal(read_matrix(tmp_path / "w.bin"), m)
        assert (tmp_path / "w.bin").stat().st_size == 16 + 7 * 3 * 8

    def test_bad_magic(self, tmp_path):
        (tmp_path / "w.bin").write_bytes(b"x" * 20)
        with pytest.raises(ValueError):
            read_matrix(tmp_path / "w.bin")

    def test_truncated(self, tmp_path):
        write_matrix(tmp_path / "w.bin", np.ones((2, 2)))
        data = (tmp_path / "w.bin").read_bytes()
        (tmp_path / "w.bin").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            read_matrix(tmp_path / "w.bin")

    def test_save_weights(self, tmp_path):
        net = small_net()
        train(net, toy_set(2))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            net.save_weights(tmp_path / "w.bin")
        np.testing.assert_array_equal(read_matrix(tmp_path / "w.bin"), net.output_weights)

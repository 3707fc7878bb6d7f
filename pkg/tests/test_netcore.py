"""Training-core tests: forward pass, backprop, optimizer, snapshots."""

from __future__ import annotations

import numpy as np
import pytest

import morpholab as m
from oracles import central_difference_gradient, slow_forward

RNG_SEED = 42


def random_net(sizes, seed, lo=-1.0, hi=1.0, bias_mode="zero"):
    arch = m.NetworkArch(tuple(sizes), bias_mode=bias_mode)
    return m.init_network(arch, m.TrainConfig(init_low=lo, init_high=hi, seed=seed))


class TestNetworkArch:
    def test_depth_and_features(self):
        arch = m.NetworkArch((3, 5, 4, 1))
        assert arch.depth == 3
        assert arch.n_features == 3
        assert list(arch.hidden_layers()) == [1, 2]

    def test_rejects_short_arch(self):
        with pytest.raises(m.ConfigError):
            m.NetworkArch((3, 1))

    def test_rejects_nonpositive_width(self):
        with pytest.raises(m.ConfigError):
            m.NetworkArch((3, 0, 1))

    def test_rejects_wide_output(self):
        with pytest.raises(m.ConfigError):
            m.NetworkArch((3, 4, 2))

    def test_rejects_unknown_bias_mode(self):
        with pytest.raises(m.ConfigError):
            m.NetworkArch((3, 4, 1), bias_mode="frozen")


class TestInitNetwork:
    def test_shapes_and_bounds(self):
        net = random_net((4, 6, 3, 1), seed=1, lo=-0.05, hi=0.05)
        assert [w.shape for w in net.weights] == [(4, 6), (6, 3), (3, 1)]
        for w in net.weights:
            assert np.all(np.abs(w) <= 0.05)

    def test_deterministic(self):
        a = random_net((3, 4, 1), seed=7)
        b = random_net((3, 4, 1), seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_zero_bias_mode_has_zero_biases(self):
        net = random_net((3, 4, 1), seed=3)
        for b in net.biases:
            assert np.all(b == 0.0)

    def test_bias_mode_does_not_shift_weight_draws(self):
        """Weights are drawn before each layer's bias, so the weight stream is
        identical across bias modes for the same seed."""
        a = random_net((3, 4, 1), seed=11, bias_mode="zero")
        b = random_net((3, 4, 1), seed=11, bias_mode="trainable")
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)


class TestForward:
    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(RNG_SEED)
        for sizes in [(1, 1, 1), (2, 3, 1), (4, 4, 4, 1), (3, 2, 4, 2, 1), (5, 1, 5, 1)]:
            for trial in range(5):
                net = random_net(sizes, seed=int(rng.integers(2**31)))
                x = rng.uniform(-2.0, 2.0, size=sizes[0])
                np.testing.assert_allclose(
                    m.forward(net, x), slow_forward(net.weights, x), rtol=1e-12, atol=1e-14
                )

    def test_bias_shifts_preactivation(self):
        net = random_net((2, 2, 1), seed=5, bias_mode="trainable")
        x = np.array([0.4, -0.3])
        base = m.forward(net, x)
        net.biases[1][0] += 0.25
        assert m.forward(net, x) == pytest.approx(base + 0.25)

    def test_batch_equals_per_sample(self):
        net = random_net((3, 4, 1), seed=9)
        rng = np.random.default_rng(RNG_SEED)
        X = rng.uniform(-1, 1, size=(7, 3))
        batch = m.forward_batch(net, X)
        singles = [m.forward(net, x) for x in X]
        # matmul kernels may round differently per batch shape; ulp-level only
        np.testing.assert_allclose(batch, singles, rtol=0, atol=1e-14)

    def test_rejects_wrong_shape(self):
        net = random_net((3, 4, 1), seed=2)
        with pytest.raises(m.ShapeError):
            m.forward(net, np.zeros(4))
        with pytest.raises(m.ShapeError):
            m.forward(net, np.zeros((2, 3)))

    def test_output_layer_is_linear(self):
        """A negative output must come through unrectified."""
        arch = m.NetworkArch((1, 1, 1))
        net = m.LayeredNetwork(arch, [np.array([[1.0]]), np.array([[-2.0]])], [np.zeros(1), np.zeros(1)])
        assert m.forward(net, np.array([1.0])) == -2.0


class TestLoss:
    def test_halved_convention(self):
        y = np.array([1.0, 2.0])
        p = np.array([1.5, 1.0])
        assert m.loss_mse(y, p) == pytest.approx((0.25 + 1.0) / 2 / 2)
        assert m.loss_mse(y, p, halved=False) == pytest.approx((0.25 + 1.0) / 2)


class TestBackprop:
    def test_matches_central_differences(self):
        """Gradient check away from ReLU kinks, both weight and bias grads."""
        rng = np.random.default_rng(RNG_SEED)
        for sizes in [(2, 3, 1), (3, 4, 2, 1), (4, 3, 3, 1)]:
            net = random_net(sizes, seed=int(rng.integers(2**31)), bias_mode="trainable")
            X = rng.uniform(-1.5, 1.5, size=(6, sizes[0]))
            y = rng.uniform(-1.0, 1.0, size=6)
            data = m.Dataset(X, y)
            grads = m.backprop_gradient(net, data)

            def loss_for(weights):
                probe = m.LayeredNetwork(net.arch, [np.asarray(w) for w in weights], net.biases)
                return m.loss_mse(y, m.forward_batch(probe, X))

            for p in range(1, net.arch.depth + 1):
                for a in range(sizes[p - 1]):
                    for b in range(sizes[p]):
                        fd = central_difference_gradient(loss_for, net.weights, (p, a, b))
                        np.testing.assert_allclose(
                            grads.weights[p - 1][a, b], fd, rtol=1e-6, atol=1e-9
                        )

    def test_bias_gradient_by_difference(self):
        rng = np.random.default_rng(3)
        net = random_net((2, 3, 1), seed=8, bias_mode="trainable")
        X = rng.uniform(-1, 1, size=(5, 2))
        y = rng.uniform(-1, 1, size=5)
        grads = m.backprop_gradient(net, m.Dataset(X, y))
        h = 1e-6
        for p in range(1, 3):
            for j in range(net.biases[p - 1].size):
                saved = net.biases[p - 1][j]
                net.biases[p - 1][j] = saved + h
                up = m.loss_mse(y, m.forward_batch(net, X))
                net.biases[p - 1][j] = saved - h
                dn = m.loss_mse(y, m.forward_batch(net, X))
                net.biases[p - 1][j] = saved
                np.testing.assert_allclose(grads.biases[p - 1][j], (up - dn) / (2 * h), rtol=1e-5, atol=1e-9)

    def test_unhalved_gradient_doubles(self):
        rng = np.random.default_rng(4)
        net = random_net((2, 2, 1), seed=6)
        data = m.Dataset(rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, 4))
        g1 = m.backprop_gradient(net, data, halved=True)
        g2 = m.backprop_gradient(net, data, halved=False)
        for a, b in zip(g1.weights, g2.weights):
            np.testing.assert_allclose(2.0 * a, b, rtol=1e-14)


class TestTrain:
    def test_snapshot_bookkeeping(self):
        data = m.gen_clusters(m.ClusterSpec(n_samples=64, n_clusters=2, n_features=3, seed=1))
        cfg = m.TrainConfig(epochs=4, batch_size=16, seed=5)
        net = m.init_network(m.NetworkArch((3, 4, 1)), cfg)
        series = m.train(net, data, cfg)
        assert series.epoch_indices == [0, 1, 2, 3, 4]
        assert len(series.snapshots) == 5
        assert len(series.loss_history) == 4

    def test_zero_epochs_records_initial_only(self):
        data = m.gen_clusters(m.ClusterSpec(n_samples=16, n_clusters=2, n_features=3, seed=1))
        cfg = m.TrainConfig(epochs=0, seed=5)
        net = m.init_network(m.NetworkArch((3, 4, 1)), cfg)
        series = m.train(net, data, cfg)
        assert series.epoch_indices == [0]
        assert series.loss_history == []
        w0, _ = series.snapshots[0]
        for wa, wb in zip(w0, net.weights):
            assert np.array_equal(wa, wb)

    def test_loss_decreases_on_easy_data(self):
        data = m.gen_clusters(m.ClusterSpec(n_samples=128, n_clusters=2, n_features=4, std=0.02, seed=2))
        cfg = m.TrainConfig(epochs=30, batch_size=32, seed=7)
        net = m.init_network(m.NetworkArch((4, 8, 1)), cfg)
        series = m.train(net, data, cfg)
        assert series.loss_history[-1] < series.loss_history[0] / 5

    def test_deterministic_per_seed(self):
        data = m.gen_clusters(m.ClusterSpec(n_samples=48, n_clusters=3, n_features=3, seed=3))
        cfg = m.TrainConfig(epochs=3, batch_size=16, seed=9)
        out = []
        for _ in range(2):
            net = m.init_network(m.NetworkArch((3, 5, 1)), cfg)
            series = m.train(net, data, cfg)
            out.append(series)
        for (wa, ba), (wb, bb) in zip(out[0].snapshots, out[1].snapshots):
            for x, y in zip(wa, wb):
                assert np.array_equal(x, y)
        assert out[0].loss_history == out[1].loss_history

    def test_divergence_raises(self):
        # trainable biases keep a gradient path alive after the hidden relus
        # die, so the oscillation reaches inf instead of freezing at zero
        data = m.gen_clusters(m.ClusterSpec(n_samples=64, n_clusters=2, n_features=3, seed=4))
        cfg = m.TrainConfig(
            epochs=60, learning_rate=1e4, optimizer="sgd", seed=1,
            init_low=-2.0, init_high=2.0, batch_size=16,
        )
        net = m.init_network(m.NetworkArch((3, 6, 6, 1), bias_mode="trainable"), cfg)
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(m.DivergenceError):
            m.train(net, data, cfg)

    def test_sgd_single_full_batch_step(self):
        """One SGD epoch over one full batch is exactly w - lr * grad."""
        rng = np.random.default_rng(10)
        data = m.Dataset(rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, 8))
        cfg = m.TrainConfig(epochs=1, batch_size=8, learning_rate=0.1, optimizer="sgd", seed=3)
        net = m.init_network(m.NetworkArch((2, 3, 1)), cfg)
        grads = m.backprop_gradient(net, data)
        expect = [w - 0.1 * g for w, g in zip(net.weights, grads.weights)]
        series = m.train(net, data, cfg)
        final, _ = series.snapshots[-1]
        for w, e in zip(final, expect):
            np.testing.assert_allclose(w, e, rtol=0, atol=0)


class TestAccuracy:
    def test_rounded_match(self):
        arch = m.NetworkArch((1, 1, 1))
        net = m.LayeredNetwork(arch, [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
        data = m.Dataset(np.array([[1.0], [2.2], [2.6]]), np.array([1.0, 2.0, 2.0]))
        assert m.accuracy(net, data) == pytest.approx(2.0 / 3.0)


class TestSnapshotIO:
    def test_round_trip(self, tmp_path):
        data = m.gen_clusters(m.ClusterSpec(n_samples=32, n_clusters=2, n_features=3, seed=5))
        cfg = m.TrainConfig(epochs=2, batch_size=16, seed=13)
        net = m.init_network(m.NetworkArch((3, 4, 1), bias_mode="trainable"), cfg)
        series = m.train(net, data, cfg)
        m.save_snapshots(series, tmp_path / "run")
        loaded = m.load_snapshots(tmp_path / "run")
        assert loaded.arch == series.arch
        assert loaded.epoch_indices == series.epoch_indices
        assert loaded.loss_history == series.loss_history
        assert loaded.seed == series.seed
        assert loaded.config == series.config
        for (wa, ba), (wb, bb) in zip(series.snapshots, loaded.snapshots):
            for x, y in zip(wa + ba, wb + bb):
                assert np.array_equal(x, y)

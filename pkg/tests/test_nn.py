import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppp.nn import (
    AdamState,
    ArchitectureError,
    ModelFileError,
    Network,
    NetworkArch,
    Standardizer,
    adam_update,
    conv1d_forward,
    dense_forward,
    destandardize_theta,
    fit_standardizer,
    init_weights,
    load_network,
    maxpool1d,
    mse_loss,
    save_network,
    standardize,
    train,
)


def default_arch(out_dim=3):
    return NetworkArch(out_dim=out_dim)


class TestLayerPrimitives:
    def test_conv_hand_example(self):
        # input [1..8], one all-ones kernel of size 7, zero bias:
        # outputs are the two window sums 1+..+7 = 28 and 2+..+8 = 35
        x = np.arange(1, 9, dtype=float)[None, None, :]
        k = np.ones((1, 1, 7))
        out = conv1d_forward(x, k, np.zeros(1))
        np.testing.assert_array_equal(out, [[[28.0, 35.0]]])

    def test_conv_relu_clips_negative(self):
        x = np.arange(1, 9, dtype=float)[None, None, :]
        k = -np.ones((1, 1, 7))
        out = conv1d_forward(x, k, np.zeros(1))
        np.testing.assert_array_equal(out, 0.0)

    def test_conv_too_short_rejected(self):
        with pytest.raises(ArchitectureError):
            conv1d_forward(np.ones((1, 1, 5)), np.ones((1, 1, 7)), np.zeros(1))

    def test_conv_multichannel_matches_loop(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 12))
        k = rng.normal(size=(4, 3, 5))
        b = rng.normal(size=4)
        got = conv1d_forward(x, k, b)
        for bi in range(2):
            for o in range(4):
                for l in range(8):
                    pre = b[o] + np.sum(x[bi, :, l : l + 5] * k[o])
                    assert got[bi, o, l] == pytest.approx(max(pre, 0.0))

    def test_maxpool_hand_example(self):
        np.testing.assert_array_equal(
            maxpool1d(np.array([1.0, 5.0, 2.0, 0.0, 3.0]), 5), [5.0]
        )

    def test_maxpool_drops_remainder(self):
        x = np.arange(12, dtype=float)
        np.testing.assert_array_equal(maxpool1d(x, 5), [4.0, 9.0])

    def test_maxpool_too_short(self):
        with pytest.raises(ArchitectureError):
            maxpool1d(np.arange(3, dtype=float), 5)

    def test_dense_hand_example(self):
        W = np.array([[1.0, 2.0], [-1.0, 0.0]])
        b = np.array([0.5, 0.25])
        x = np.array([[3.0, 4.0]])
        out = dense_forward(x, W, b)
        np.testing.assert_array_equal(out, [[11.5, 0.0]])  # relu clips -2.75

    def test_dense_linear_mode(self):
        W = np.array([[-1.0, 0.0]])
        out = dense_forward(np.array([[3.0, 4.0]]), W, np.zeros(1), activation="linear")
        np.testing.assert_array_equal(out, [[-3.0]])

    def test_dense_shape_mismatch(self):
        with pytest.raises(ArchitectureError):
            dense_forward(np.ones((1, 3)), np.ones((2, 4)), np.zeros(2))

    def test_mse_hand_example(self):
        assert mse_loss(np.array([[1.0, 2.0]]), np.array([[0.0, 4.0]])) == 2.5

    def test_mse_shape_mismatch(self):
        with pytest.raises(ArchitectureError):
            mse_loss(np.ones((1, 2)), np.ones((1, 3)))


class TestArchitecture:
    def test_shape_trace_default(self):
        # 513 -> conv 507 -> pool 101 -> conv 95 -> pool 19 -> conv 13
        trace = default_arch().shape_trace()
        assert trace == [(1, 513), (64, 101), (64, 19), (64, 13)]
        assert default_arch().flat_size() == 64 * 13

    def test_too_deep_rejected(self):
        with pytest.raises(ArchitectureError):
            NetworkArch(out_dim=3, input_len=20, conv=((8, 7),) * 3,
                        pool_after=(True, True, True))

    def test_json_round_trip(self):
        arch = default_arch(5)
        assert NetworkArch.from_json(arch.to_json()) == arch

    def test_init_weight_shapes(self):
        w = init_weights(default_arch(3), np.random.default_rng(0))
        assert w["conv0_k"].shape == (64, 1, 7)
        assert w["conv1_k"].shape == (64, 64, 7)
        assert w["dense0_W"].shape == (64, 64 * 13 + 1)
        assert w["dense1_W"].shape == (32, 64)
        assert w["out_W"].shape == (3, 32)
        assert np.all(w["conv0_b"] == 0.0)

    def test_glorot_bounds(self):
        w = init_weights(default_arch(3), np.random.default_rng(1))
        k = w["conv0_k"]
        limit = np.sqrt(6.0 / (1 * 7 + 64 * 7))
        assert np.all(np.abs(k) <= limit)
        assert np.abs(k).max() > 0.5 * limit  # actually spread out


class TestGradients:
    def test_finite_differences_small_net(self):
        arch = NetworkArch(
            out_dim=2, input_len=30, conv=((3, 5), (3, 5)), pool_after=(True, False),
            pool_size=2, dense=(6, 4),
        )
        rng = np.random.default_rng(42)
        net = Network.initialize(arch, rng)
        curves = rng.normal(size=(4, 30))
        counts = rng.normal(size=4)
        targets = rng.normal(size=(4, 2))
        _, grads = net.loss_and_gradients(curves, counts, targets)
        eps = 1e-6
        rel_errs = []
        for key in net.weights:
            flat = net.weights[key].ravel()
            g = grads[key].ravel()
            idx = rng.choice(len(flat), size=min(5, len(flat)), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                lp, _ = net.loss_and_gradients(curves, counts, targets)
                flat[i] = orig - eps
                lm, _ = net.loss_and_gradients(curves, counts, targets)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(fd), abs(g[i]), 1e-8)
                rel_errs.append(abs(fd - g[i]) / denom)
        assert max(rel_errs) < 1e-4

    def test_finite_differences_default_arch_sampled(self):
        rng = np.random.default_rng(7)
        net = Network.initialize(default_arch(3), rng)
        curves = rng.normal(size=(2, 513))
        counts = rng.normal(size=2)
        targets = rng.normal(size=(2, 3))
        _, grads = net.loss_and_gradients(curves, counts, targets)
        eps = 1e-6
        for key in ("conv0_k", "conv2_k", "dense0_W", "out_W", "conv1_b"):
            flat = net.weights[key].ravel()
            g = grads[key].ravel()
            for i in rng.choice(len(flat), size=3, replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                lp, _ = net.loss_and_gradients(curves, counts, targets)
                flat[i] = orig - eps
                lm, _ = net.loss_and_gradients(curves, counts, targets)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(fd), abs(g[i]), 1e-8)
                assert abs(fd - g[i]) / denom < 1e-4

    def test_count_input_feeds_first_dense(self):
        rng = np.random.default_rng(3)
        net = Network.initialize(default_arch(2), rng)
        curves = rng.normal(size=(1, 513))
        out1 = net.forward(curves, np.array([0.0]))
        out2 = net.forward(curves, np.array([5.0]))
        assert not np.allclose(out1, out2)


class TestAdam:
    def test_two_step_scalar_recurrence(self):
        # hand-rolled scalar Adam (lr_t convention) with constant gradient 3.0
        w = {"a": np.array([1.0])}
        state = AdamState.for_weights(w, lr=0.1)
        g = {"a": np.array([3.0])}
        b1, b2, eps = state.beta1, state.beta2, state.eps
        adam_update(w, g, state)
        adam_update(w, g, state)
        m = v = 0.0
        x = 1.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * 3.0
            v = b2 * v + (1 - b2) * 9.0
            lr_t = 0.1 * np.sqrt(1 - b2**t) / (1 - b1**t)
            x -= lr_t * m / (np.sqrt(v) + eps)
        assert w["a"][0] == pytest.approx(x, rel=1e-12)

    def test_first_step_size(self):
        # with eps tiny, the first step moves by almost exactly lr
        w = {"a": np.array([1.0])}
        state = AdamState.for_weights(w, lr=0.1)
        adam_update(w, {"a": np.array([3.0])}, state)
        assert w["a"][0] == pytest.approx(1.0 - 0.1, abs=1e-5)

    def test_descends_on_quadratic(self):
        w = {"a": np.array([5.0])}
        state = AdamState.for_weights(w, lr=0.05)
        for _ in range(2000):
            adam_update(w, {"a": 2.0 * w["a"]}, state)
        assert abs(w["a"][0]) < 1e-2

    def test_state_counts_steps(self):
        w = {"a": np.zeros(1)}
        state = AdamState.for_weights(w)
        adam_update(w, {"a": np.ones(1)}, state)
        adam_update(w, {"a": np.ones(1)}, state)
        assert state.t == 2


class TestStandardizer:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        curves = rng.normal(2.0, 3.0, size=(20, 10))
        counts = rng.normal(100, 20, size=20)
        thetas = rng.normal([1, 5], [0.5, 2], size=(20, 2))
        st_ = fit_standardizer(curves, counts, thetas)
        sc, sn, sth = standardize(curves, counts, thetas, st_)
        assert sc.mean() == pytest.approx(0.0, abs=1e-12)
        assert sc.std() == pytest.approx(1.0)
        assert sn.std() == pytest.approx(1.0)
        np.testing.assert_allclose(sth.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(sth.std(axis=0), 1.0)
        np.testing.assert_allclose(destandardize_theta(sth, st_), thetas)

    def test_pooled_curve_scaling(self):
        curves = np.array([[0.0, 2.0], [4.0, 6.0]])
        st_ = fit_standardizer(curves, np.array([1.0, 2.0]), np.array([[0.0], [1.0]]))
        assert st_.curve_mean == 3.0
        assert st_.curve_sd == pytest.approx(np.array([0, 2, 4, 6.0]).std())

    def test_constant_theta_rejected(self):
        with pytest.raises(ValueError):
            fit_standardizer(
                np.random.default_rng(0).normal(size=(5, 4)),
                np.arange(5.0),
                np.full((5, 2), 3.0),
            )

    def test_constant_count_warns(self):
        with pytest.warns(UserWarning):
            st_ = fit_standardizer(
                np.random.default_rng(0).normal(size=(5, 4)),
                np.full(5, 7.0),
                np.random.default_rng(1).normal(size=(5, 2)),
            )
        assert st_.count_sd == 1.0


class TestTraining:
    def test_loss_decreases_on_learnable_problem(self):
        rng = np.random.default_rng(11)
        arch = NetworkArch(
            out_dim=1, input_len=40, conv=((4, 5),), pool_after=(True,),
            pool_size=2, dense=(8,),
        )
        net = Network.initialize(arch, rng)
        curves = rng.normal(size=(200, 40))
        counts = rng.normal(size=200)
        targets = curves.mean(axis=1, keepdims=True) + 0.3 * counts[:, None]
        hist = train(net, curves, counts, targets, epochs=15, batch_size=25, rng=rng)
        assert len(hist["train_mse"]) == 15
        assert hist["train_mse"][-1] < 0.3 * hist["train_mse"][0]

    def test_test_history_recorded(self):
        rng = np.random.default_rng(12)
        arch = NetworkArch(
            out_dim=1, input_len=20, conv=((2, 5),), pool_after=(False,), dense=(4,)
        )
        net = Network.initialize(arch, rng)
        c = rng.normal(size=(30, 20))
        n = rng.normal(size=30)
        t = rng.normal(size=(30, 1))
        hist = train(net, c, n, t, epochs=3, batch_size=10, rng=rng, test=(c, n, t))
        assert len(hist["test_mse"]) == 3

    def test_deterministic_given_rng(self):
        arch = NetworkArch(
            out_dim=1, input_len=20, conv=((2, 5),), pool_after=(False,), dense=(4,)
        )
        data_rng = np.random.default_rng(5)
        c = data_rng.normal(size=(30, 20))
        n = data_rng.normal(size=30)
        t = data_rng.normal(size=(30, 1))
        nets = []
        for _ in range(2):
            net = Network.initialize(arch, np.random.default_rng(1))
            train(net, c, n, t, epochs=2, batch_size=10, rng=np.random.default_rng(2))
            nets.append(net)
        for key in nets[0].weights:
            np.testing.assert_array_equal(nets[0].weights[key], nets[1].weights[key])


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        net = Network.initialize(default_arch(3), rng)
        st_ = Standardizer(1.0, 2.0, 3.0, 4.0, np.array([0.0, 1.0, 2.0]), np.ones(3))
        path = tmp_path / "model.npz"
        save_network(path, net, st_, {"model": "lgcp"})
        net2, st2, extra = load_network(path)
        assert net2.arch == net.arch
        for key in net.weights:
            np.testing.assert_array_equal(net2.weights[key], net.weights[key])
        assert st2.curve_mean == 1.0 and st2.count_sd == 4.0
        np.testing.assert_array_equal(st2.theta_mean, st_.theta_mean)
        assert extra == {"model": "lgcp"}
        rng2 = np.random.default_rng(9)
        x = rng2.normal(size=(2, 513))
        cnt = rng2.normal(size=2)
        np.testing.assert_array_equal(net.forward(x, cnt), net2.forward(x, cnt))

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.npz"
        path.write_bytes(b"not an npz file")
        with pytest.raises(ModelFileError):
            load_network(path)

    def test_wrong_version_rejected(self, tmp_path):
        rng = np.random.default_rng(0)
        net = Network.initialize(default_arch(2), rng)
        st_ = Standardizer(0, 1, 0, 1, np.zeros(2), np.ones(2))
        path = tmp_path / "model.npz"
        save_network(path, net, st_)
        data = dict(np.load(path, allow_pickle=False))
        data["format_version"] = np.array(99)
        np.savez(path, **data)
        with pytest.raises(ModelFileError):
            load_network(path)

    def test_missing_weights_rejected(self, tmp_path):
        rng = np.random.default_rng(0)
        net = Network.initialize(default_arch(2), rng)
        st_ = Standardizer(0, 1, 0, 1, np.zeros(2), np.ones(2))
        path = tmp_path / "model.npz"
        save_network(path, net, st_)
        data = dict(np.load(path, allow_pickle=False))
        del data["w_out_W"]
        np.savez(path, **data)
        with pytest.raises(ModelFileError):
            load_network(path)

import numpy as np
import pytest

from csfair.errors import InvalidArgumentError
from csfair.model import (
    MlpParams,
    backward,
    bce_loss,
    forward,
    init_mlp,
    l2_penalty,
    load_checkpoint,
    save_checkpoint,
)


class TestInit:
    def test_deterministic(self):
        a = init_mlp([4, 3], 2, seed=5)
        b = init_mlp([4, 3], 2, seed=5)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_shapes(self):
        p = init_mlp([4], 3, seed=0)
        assert [w.shape for w in p.weights] == [(4, 3), (1, 4)]
        assert all(np.all(b == 0) for b in p.biases)

    def test_seed_changes_params(self):
        a = init_mlp([4], 3, seed=0)
        b = init_mlp([4], 3, seed=1)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_glorot_bounds(self):
        p = init_mlp([8], 4, seed=2)
        limit = np.sqrt(6.0 / (4 + 8))
        assert np.all(np.abs(p.weights[0]) <= limit)

    def test_zero_layer_rejected(self):
        with pytest.raises(InvalidArgumentError):
            init_mlp([0], 3, seed=0)
        with pytest.raises(InvalidArgumentError):
            init_mlp([4], 0, seed=0)


class TestForward:
    def test_zero_params_give_half(self):
        p = init_mlp([3], 2, seed=0)
        for w in p.weights:
            w[:] = 0.0
        probs = forward(p, np.random.default_rng(0).normal(size=(5, 2))).probs
        assert np.all(probs == 0.5)

    def test_single_linear_unit(self):
        p = MlpParams([np.array([[1.0]])], [np.zeros(1)])
        assert forward(p, [[0.0]]).probs[0] == 0.5

    def test_identical_rows(self):
        p = init_mlp([4], 3, seed=3)
        X = np.tile(np.array([[0.3, -0.2, 1.1]]), (4, 1))
        probs = forward(p, X).probs
        assert np.all(probs == probs[0])

    def test_probs_clipped(self):
        p = MlpParams([np.array([[100.0]])], [np.zeros(1)])
        probs = forward(p, [[10.0], [-10.0]]).probs
        assert probs.max() <= 1 - 1e-7
        assert probs.min() >= 1e-7

    def test_width_mismatch(self):
        p = init_mlp([3], 2, seed=0)
        with pytest.raises(InvalidArgumentError):
            forward(p, np.zeros((2, 3)))

    def test_final_hidden_no_hidden_layer(self):
        p = MlpParams([np.array([[1.0, 1.0]])], [np.zeros(1)])
        X = np.array([[0.5, 0.25]])
        assert np.array_equal(forward(p, X).final_hidden, X)


class TestBceLoss:
    def test_half_prob(self):
        value, _ = bce_loss([0.5], [1])
        assert value == pytest.approx(0.693147, abs=1e-6)

    def test_near_perfect(self):
        value, _ = bce_loss([1.0 - 1e-7], [1])
        assert value == pytest.approx(1e-7, abs=1e-8)

    def test_gradient_fd(self):
        rng = np.random.default_rng(0)
        z = rng.uniform(0.1, 0.9, size=6)
        y = rng.integers(0, 2, size=6)
        _, grad = bce_loss(z, y)
        h = 1e-6
        for i in range(z.size):
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            fd = (bce_loss(zp, y)[0] - bce_loss(zm, y)[0]) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            bce_loss([0.5, 0.5], [1])


class TestBackward:
    def test_zero_injection(self):
        p = init_mlp([3], 2, seed=1)
        cache = forward(p, np.random.default_rng(1).normal(size=(4, 2)))
        gw, gb = backward(p, cache, np.zeros(4))
        assert all(np.all(g == 0) for g in gw + gb)

    def test_full_objective_fd_toy_net(self):
        rng = np.random.default_rng(2)
        p = init_mlp([2], 3, seed=2)
        X = rng.normal(size=(6, 3))
        y = rng.integers(0, 2, size=6)
        beta = 0.3

        def objective(params):
            z = forward(params, X).probs
            value, _ = bce_loss(z, y)
            return value + l2_penalty(params, beta)[0]

        cache = forward(p, X)
        _, dz = bce_loss(cache.probs, y)
        gw, gb = backward(p, cache, dz)
        _, lw, lb = l2_penalty(p, beta)
        h = 1e-6
        for li in range(len(p.weights)):
            for arr, grad in ((p.weights[li], gw[li] + lw[li]),
                              (p.biases[li], gb[li] + lb[li])):
                flat = arr.ravel()
                gflat = np.asarray(grad).ravel()
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + h
                    up = objective(p)
                    flat[j] = orig - h
                    dn = objective(p)
                    flat[j] = orig
                    fd = (up - dn) / (2 * h)
                    assert gflat[j] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_hidden_injection_only(self):
        rng = np.random.default_rng(3)
        p = init_mlp([3], 2, seed=3)
        cache = forward(p, rng.normal(size=(4, 2)))
        dhid = rng.normal(size=cache.final_hidden.shape)
        gw, _ = backward(p, cache, np.zeros(4), dhid)
        assert np.all(gw[-1] == 0)
        assert np.any(gw[0] != 0)

    def test_hidden_injection_fd(self):
        # loss = sum of final hidden activations, routed only through dhidden
        rng = np.random.default_rng(4)
        p = init_mlp([3, 2], 2, seed=4)
        X = rng.normal(size=(5, 2))

        def objective(params):
            return float(forward(params, X).final_hidden.sum())

        cache = forward(p, X)
        gw, gb = backward(p, cache, np.zeros(5), np.ones_like(cache.final_hidden))
        h = 1e-6
        for li in range(len(p.weights) - 1):
            flat = p.weights[li].ravel()
            gflat = gw[li].ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                up = objective(p)
                flat[j] = orig - h
                dn = objective(p)
                flat[j] = orig
                assert gflat[j] == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-9)

    def test_shape_mismatch(self):
        p = init_mlp([3], 2, seed=5)
        cache = forward(p, np.zeros((4, 2)))
        with pytest.raises(InvalidArgumentError):
            backward(p, cache, np.zeros(3))
        with pytest.raises(InvalidArgumentError):
            backward(p, cache, np.zeros(4), np.zeros((4, 5)))


class TestL2Penalty:
    def test_zero_beta(self):
        p = init_mlp([3], 2, seed=6)
        value, gw, _ = l2_penalty(p, 0.0)
        assert value == 0.0
        assert all(np.all(g == 0) for g in gw)

    def test_single_weight(self):
        p = MlpParams([np.array([[2.0]])], [np.zeros(1)])
        value, gw, _ = l2_penalty(p, 1.0)
        assert value == 2.0
        assert gw[0][0, 0] == 2.0

    def test_linearity_in_beta(self):
        p = init_mlp([4], 3, seed=7)
        assert l2_penalty(p, 2.0)[0] == pytest.approx(2 * l2_penalty(p, 1.0)[0])

    def test_biases_excluded(self):
        p = init_mlp([3], 2, seed=8)
        for b in p.biases:
            b[:] = 5.0
        base = 0.5 * sum(np.sum(w**2) for w in p.weights)
        assert l2_penalty(p, 1.0)[0] == pytest.approx(base)

    def test_negative_beta(self):
        with pytest.raises(InvalidArgumentError):
            l2_penalty(init_mlp([2], 2, seed=0), -1.0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = init_mlp([5, 3], 4, seed=9)
        path = str(tmp_path / "model.npz")
        save_checkpoint(p, path)
        q = load_checkpoint(path)
        assert len(q.weights) == len(p.weights)
        for a, b in zip(p.weights + p.biases, q.weights + q.biases):
            assert np.array_equal(a, b)

    def test_version_check(self, tmp_path):
        import json

        path = str(tmp_path / "bad.npz")
        meta = json.dumps({"version": 99, "n_layers": 1})
        np.savez(
            path,
            __meta__=np.frombuffer(meta.encode(), dtype=np.uint8),
            w0=np.zeros((1, 1)),
            b0=np.zeros(1),
        )
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(path)

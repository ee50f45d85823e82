"""Encoder forward/backward tests, including central finite differences."""

import numpy as np
import pytest

from metrovec.encoder import encode, encode_backward, init_encoder
from metrovec.errors import ValidationError


def fd_param_grads(params, feature, grad_output, step=1e-4):
    """Central finite differences of dot(encode(params, feature), grad_output)
    with respect to every parameter entry."""

    def objective(p):
        return float(encode(p, feature) @ grad_output)

    grads_w, grads_b = [], []
    for li in range(len(params.weights)):
        gw = np.zeros_like(params.weights[li])
        for idx in np.ndindex(*gw.shape):
            p = params.copy()
            p.weights[li][idx] += step
            hi = objective(p)
            p.weights[li][idx] -= 2 * step
            lo = objective(p)
            gw[idx] = (hi - lo) / (2 * step)
        grads_w.append(gw)
        gb = np.zeros_like(params.biases[li])
        for idx in np.ndindex(*gb.shape):
            p = params.copy()
            p.biases[li][idx] += step
            hi = objective(p)
            p.biases[li][idx] -= 2 * step
            lo = objective(p)
            gb[idx] = (hi - lo) / (2 * step)
        grads_b.append(gb)
    return grads_w, grads_b


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


class TestInit:
    def test_seed_determinism(self):
        p1 = init_encoder(8, 4, 3, seed=42)
        p2 = init_encoder(8, 4, 3, seed=42)
        for w1, w2 in zip(p1.weights, p2.weights):
            assert np.array_equal(w1, w2)

    def test_linear_shape(self):
        p = init_encoder(6, 0, 4, seed=0)
        assert len(p.weights) == 1
        assert p.weights[0].shape == (6, 4)
        assert p.biases[0].shape == (4,)
        assert p.hidden == 0

    def test_glorot_bound(self):
        p = init_encoder(8, 0, 4, seed=1)
        bound = np.sqrt(6.0 / 12.0)
        assert np.abs(p.weights[0]).max() <= bound
        assert not p.biases[0].any()

    def test_invalid_dims(self):
        with pytest.raises(ValidationError):
            init_encoder(0, 4, 3, seed=0)
        with pytest.raises(ValidationError):
            init_encoder(4, 0, 0, seed=0)


class TestForward:
    def test_zero_params_zero_output(self):
        p = init_encoder(5, 3, 2, seed=0)
        for w in p.weights:
            w[:] = 0.0
        assert not encode(p, np.ones(5)).any()

    def test_identity_linear(self):
        p = init_encoder(4, 0, 4, seed=0)
        p.weights[0][:] = np.eye(4)
        x = np.array([0.5, -1.0, 2.0, 0.0])
        assert np.allclose(encode(p, x), x)

    def test_matches_independent_matmul(self):
        rng = np.random.default_rng(7)
        p = init_encoder(6, 5, 3, seed=7)
        x = rng.normal(size=6)
        manual = np.maximum(x @ p.weights[0] + p.biases[0], 0.0) @ p.weights[1] + p.biases[1]
        assert np.abs(encode(p, x) - manual).max() < 1e-6

    def test_pure(self):
        p = init_encoder(5, 4, 3, seed=3)
        x = np.arange(5.0)
        assert np.array_equal(encode(p, x), encode(p, x))

    def test_length_mismatch(self):
        p = init_encoder(5, 0, 3, seed=0)
        with pytest.raises(ValidationError):
            encode(p, np.ones(4))


class TestBackward:
    def test_zero_grad_output(self):
        p = init_encoder(5, 4, 3, seed=1)
        g = encode_backward(p, np.ones(5), np.zeros(3))
        assert not any(gw.any() for gw in g.weights)
        assert not g.input.any()

    def test_linear_weight_grad_is_outer_product(self):
        p = init_encoder(4, 0, 3, seed=2)
        x = np.array([1.0, -2.0, 0.5, 3.0])
        gout = np.array([0.2, -0.1, 0.7])
        g = encode_backward(p, x, gout)
        assert np.allclose(g.weights[0], np.outer(x, gout))
        assert np.allclose(g.biases[0], gout)
        assert np.allclose(g.input, p.weights[0] @ gout)

    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            d_in = int(rng.integers(2, 17))
            d = int(rng.integers(1, 9))
            hidden = int(rng.integers(0, 7))
            p = init_encoder(d_in, hidden, d, seed=100 + trial)
            x = rng.normal(size=d_in)
            gout = rng.normal(size=d)
            analytic = encode_backward(p, x, gout)
            fd_w, fd_b = fd_param_grads(p, x, gout)
            for a, f in zip(analytic.weights, fd_w):
                assert rel_err(a, f) < 1e-4
            for a, f in zip(analytic.biases, fd_b):
                assert rel_err(a, f) < 1e-4

    def test_shape_mismatch(self):
        p = init_encoder(5, 4, 3, seed=1)
        with pytest.raises(ValidationError):
            encode_backward(p, np.ones(5), np.zeros(4))
        with pytest.raises(ValidationError):
            encode_backward(p, np.ones(6), np.zeros(3))


def test_copy_is_independent():
    p = init_encoder(4, 3, 2, seed=5)
    q = p.copy()
    q.weights[0][0, 0] += 1.0
    assert p.weights[0][0, 0] != q.weights[0][0, 0]

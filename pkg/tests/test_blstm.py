import math

import numpy as np
import pytest

from svocd.models import BLSTMModel, Segment, forward_many, forward_one, sinusoid_data
from svocd.models.blstm import DIM, GATE_BLOCK, HIDDEN

from oracles import central_diff_grad, central_diff_hessian, reference_lstm_output


def seg_of(values):
    return Segment(start=1, values=np.asarray(values, dtype=float))


def test_parameter_count_identity():
    assert DIM == 4 * HIDDEN * (HIDDEN + 2) + HIDDEN + 1 == 64
    assert GATE_BLOCK == 15


def test_empty_segment_outputs_readout_bias():
    theta = np.zeros(DIM)
    theta[-1] = 0.37
    assert forward_one(np.empty(0), theta) == 0.37
    np.testing.assert_array_equal(forward_many(np.empty(0), theta), [0.37])


def test_zero_parameters_output_zero():
    theta = np.zeros(DIM)
    assert forward_one(np.array([1.0, -2.0, 3.0]), theta) == 0.0


def test_forward_matches_scalar_reference():
    rng = np.random.default_rng(21)
    for _ in range(5):
        theta = rng.normal(0.0, 0.6, DIM)
        values = rng.normal(0.0, 1.0, 4)
        assert forward_one(values, theta) == pytest.approx(
            reference_lstm_output(values, theta), abs=1e-12
        )


def test_forward_many_prefix_property():
    rng = np.random.default_rng(4)
    theta = rng.normal(0.0, 0.5, DIM)
    values = rng.normal(0.0, 1.0, 6)
    outputs = forward_many(values, theta)
    assert len(outputs) == len(values) + 1
    for i in range(len(values) + 1):
        assert outputs[i] == forward_one(values[:i], theta)


def test_log_likelihood_closed_forms():
    model = BLSTMModel(sigma=0.4)
    assert model.log_likelihood(seg_of([]), np.zeros(DIM)) == 0.0
    y = 0.9
    expected = -y * y / (2 * 0.4**2) - 0.5 * math.log(2 * math.pi * 0.4**2)
    assert model.log_likelihood(seg_of([y]), np.zeros(DIM)) == pytest.approx(expected, abs=1e-14)


def test_log_likelihood_matches_direct_gaussian():
    from scipy.stats import multivariate_normal

    model = BLSTMModel(sigma=0.25)
    rng = np.random.default_rng(13)
    theta = rng.normal(0.0, 0.4, DIM)
    values = rng.normal(0.0, 1.0, 5)
    means = forward_many(values, theta)[:-1]
    direct = multivariate_normal.logpdf(values, mean=means, cov=0.25**2 * np.eye(5))
    assert model.log_likelihood(seg_of(values), theta) == pytest.approx(direct, abs=1e-12)


def _self_consistent_series(theta, n):
    """Observations equal to the model's own prefix predictions, giving
    exactly zero residuals."""
    values = []
    for _ in range(n):
        values.append(forward_one(np.array(values), theta))
    return np.array(values)


def test_zero_residuals_give_zero_gradient():
    rng = np.random.default_rng(2)
    theta = rng.normal(0.0, 0.5, DIM)
    model = BLSTMModel(sigma=0.1)
    values = _self_consistent_series(theta, 5)
    np.testing.assert_allclose(
        model.grad_log_likelihood(seg_of(values), theta), np.zeros(DIM), atol=1e-12
    )


def test_empty_segment_gradient_and_fisher_are_zero():
    model = BLSTMModel()
    np.testing.assert_array_equal(model.grad_log_likelihood(seg_of([]), np.zeros(DIM)), np.zeros(DIM))
    np.testing.assert_array_equal(
        model.fisher_information(seg_of([]), np.zeros(DIM)), np.zeros((DIM, DIM))
    )


def test_gradient_matches_finite_differences():
    model = BLSTMModel(sigma=0.3)
    rng = np.random.default_rng(99)
    for trial in range(20):
        n = 1 + trial % 8
        theta = rng.normal(0.0, 0.4, DIM)
        seg = seg_of(rng.normal(0.0, 1.0, n))
        grad = model.grad_log_likelihood(seg, theta)
        fd = central_diff_grad(lambda t: model.log_likelihood(seg, t), theta)
        err = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-4


def test_fisher_rank_and_psd():
    model = BLSTMModel(sigma=0.2)
    rng = np.random.default_rng(6)
    theta = rng.normal(0.0, 0.4, DIM)
    single = model.fisher_information(seg_of([0.5]), theta)
    assert np.linalg.matrix_rank(single, tol=1e-10) <= 1
    fisher = model.fisher_information(seg_of(rng.normal(0.0, 1.0, 4)), theta)
    np.testing.assert_allclose(fisher, fisher.T, atol=1e-12)
    assert np.linalg.eigvalsh(fisher).min() >= -1e-10 * np.trace(fisher)


def test_fisher_equals_negative_hessian_at_zero_residuals():
    # with exactly zero residuals the Gauss-Newton curvature is the true one
    model = BLSTMModel(sigma=0.5)
    rng = np.random.default_rng(10)
    theta = rng.normal(0.0, 0.3, DIM)
    seg = seg_of(_self_consistent_series(theta, 3))
    fisher = model.fisher_information(seg, theta)
    numeric = -central_diff_hessian(lambda t: model.log_likelihood(seg, t), theta, h=1e-4)
    scale = max(np.abs(fisher).max(), 1.0)
    assert np.max(np.abs(fisher - numeric)) / scale < 1e-4


def test_sample_predictive():
    model_tiny = BLSTMModel(sigma=1e-9)
    rng = np.random.default_rng(0)
    theta = rng.normal(0.0, 0.4, DIM)
    seg = seg_of([0.3, -0.2])
    draw = model_tiny.sample_predictive(seg, theta, np.random.default_rng(5))
    assert draw == pytest.approx(forward_one(seg.values, theta), abs=1e-7)

    model = BLSTMModel(sigma=0.7)
    draws = np.array([
        model.sample_predictive(seg_of([]), np.zeros(DIM), rng) for _ in range(100_000)
    ])
    assert abs(draws.mean()) < 3 * 0.7 / math.sqrt(len(draws))

    a = model.sample_predictive(seg, theta, np.random.default_rng(3))
    b = model.sample_predictive(seg, theta, np.random.default_rng(3))
    assert a == b


def test_sigma_must_be_positive():
    with pytest.raises(ValueError):
        BLSTMModel(sigma=0.0)


def test_sinusoid_data():
    clean = sinusoid_data(51, 0.0, np.random.default_rng(0))
    np.testing.assert_allclose(clean, np.sin(np.arange(51)), atol=1e-15)
    assert len(sinusoid_data(rng=np.random.default_rng(1))) == 51

    rng = np.random.default_rng(2)
    residuals = np.concatenate([
        sinusoid_data(51, 0.15, rng) - np.sin(np.arange(51)) for _ in range(10_000)
    ])
    assert residuals.std() == pytest.approx(0.15, rel=0.02)

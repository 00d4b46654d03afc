import numpy as np
import pytest

from svocd.samplers.mcmc import ChainConfig, covariance_trace, rw_metropolis


def standard_normal_logpdf(x):
    return -0.5 * float(x @ x)


def test_chain_recovers_standard_normal_moments():
    cfg = ChainConfig(steps=100_000, proposal_scale=2.4, seed=0)
    result = rw_metropolis(standard_normal_logpdf, np.zeros(1), cfg)
    assert result.samples.mean() == pytest.approx(0.0, abs=0.05)
    assert result.samples.var() == pytest.approx(1.0, abs=0.1)
    assert result.warning is None


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(steps=0, proposal_scale=1.0)
    with pytest.raises(ValueError):
        ChainConfig(steps=10, proposal_scale=1e-13)
    with pytest.raises(ValueError):
        ChainConfig(steps=10, proposal_scale=1.0, burn_in_fraction=1.0)


def test_equal_logp_proposals_always_accepted():
    cfg = ChainConfig(steps=2000, proposal_scale=1.0, seed=3, burn_in_fraction=0.0)
    result = rw_metropolis(lambda x: 0.0, np.zeros(2), cfg)
    assert result.acceptance_rate == 1.0
    assert result.warning is not None  # 1.0 lies outside (0.05, 0.8)


def test_requires_finite_start():
    with pytest.raises(ValueError):
        rw_metropolis(lambda x: -np.inf, np.zeros(1), ChainConfig(steps=10, proposal_scale=1.0))


def test_bitwise_reproducibility():
    cfg = ChainConfig(steps=5000, proposal_scale=1.7, seed=11)
    a = rw_metropolis(standard_normal_logpdf, np.ones(2), cfg)
    b = rw_metropolis(standard_normal_logpdf, np.ones(2), cfg)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.acceptance_rate == b.acceptance_rate


def test_burn_in_dropped():
    cfg = ChainConfig(steps=1000, proposal_scale=1.0, seed=0, burn_in_fraction=0.2)
    result = rw_metropolis(standard_normal_logpdf, np.zeros(1), cfg)
    assert len(result.samples) == 800


def test_covariance_trace_closed_forms():
    assert covariance_trace(np.zeros((10, 3))) == 0.0
    assert covariance_trace(np.array([[-1.0], [1.0]])) == pytest.approx(2.0, abs=1e-15)
    assert covariance_trace(np.array([-1.0, 1.0])) == pytest.approx(2.0, abs=1e-15)
    draws = np.random.default_rng(0).standard_normal((100_000, 3))
    assert covariance_trace(draws) == pytest.approx(3.0, abs=0.1)


def test_covariance_trace_invariances():
    rng = np.random.default_rng(5)
    samples = rng.standard_normal((500, 4))
    base = covariance_trace(samples)
    assert covariance_trace(samples[:, ::-1]) == pytest.approx(base, rel=1e-12)
    assert covariance_trace(samples + np.array([5.0, -3.0, 0.5, 100.0])) == pytest.approx(
        base, rel=1e-9
    )


def test_covariance_trace_needs_two_samples():
    with pytest.raises(ValueError):
        covariance_trace(np.array([[1.0, 2.0]]))

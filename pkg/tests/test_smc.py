import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from svocd.models import GaussianMeanModel, HawkesModel, Segment, empty_segment
from svocd.models.base import PredictiveModel
from svocd.models.hawkes import simulate_segment
from svocd.samplers.smc import (
    DegenerateProposalError,
    ess,
    importance_step,
    laplace_fit,
    smc_update,
    systematic_resample,
)
from svocd.samplers.svn import Ensemble


# ---------------------------------------------------------------------------
# Laplace fit


def test_laplace_exact_on_conjugate_gaussian():
    model = GaussianMeanModel(prior_mean=0.5, prior_var=2.0, obs_var=0.8)
    seg = Segment(1, np.array([1.0, 1.4, 0.2]))
    mean, var = model.posterior_params(seg)
    fit = laplace_fit(model, seg, np.array([-3.0]))
    assert fit.mode[0] == pytest.approx(mean, abs=1e-8)
    assert fit.cov[0, 0] == pytest.approx(var, abs=1e-8)
    assert fit.converged


def test_laplace_empty_segment_returns_prior():
    model = GaussianMeanModel(prior_mean=0.7, prior_var=1.3)
    fit = laplace_fit(model, empty_segment(), np.array([5.0]))
    assert fit.mode[0] == pytest.approx(0.7, abs=1e-10)
    assert fit.cov[0, 0] == pytest.approx(1.3, abs=1e-10)


def test_laplace_hawkes_matches_nelder_mead():
    model = HawkesModel(prior_mean=0.0, prior_var=1.0)
    events = simulate_segment(np.array([0.3, 0.0, 0.5]), 0.0, 10, np.random.default_rng(0))
    seg = Segment(1, events)
    fit = laplace_fit(model, seg, np.zeros(3))
    reference = minimize(
        lambda eta: -model.log_posterior(seg, eta),
        np.zeros(3),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 5000},
    )
    np.testing.assert_allclose(fit.mode, reference.x, atol=1e-3)


# ---------------------------------------------------------------------------
# importance step


def test_importance_uniform_when_target_equals_proposal():
    model = GaussianMeanModel(prior_mean=0.0, prior_var=1.0)
    ens = importance_step(
        model, empty_segment(), np.zeros(1), np.eye(1), 64, np.random.default_rng(0)
    )
    weights = ens.weights()
    assert np.all(weights == weights[0])
    assert weights[0] == pytest.approx(1.0 / 64, abs=1e-15)


def test_importance_single_particle_unit_weight():
    model = GaussianMeanModel()
    ens = importance_step(
        model, empty_segment(), np.zeros(1), np.eye(1), 1, np.random.default_rng(1)
    )
    assert ens.weights()[0] == pytest.approx(1.0, abs=1e-15)


def test_importance_corrects_offset_proposal():
    model = GaussianMeanModel(prior_mean=2.0, prior_var=1.0)
    # proposal deliberately offset from the prior-only target
    ens = importance_step(
        model, empty_segment(), np.array([1.0]), np.eye(1) * 1.5, 10_000,
        np.random.default_rng(2),
    )
    w = ens.weights()
    est = float(w @ ens.particles[:, 0])
    second = float(w @ ens.particles[:, 0] ** 2)
    se = math.sqrt(max(second - est**2, 1e-12) / ess(ens.log_weights))
    assert abs(est - 2.0) < 3 * se


def test_importance_degenerate_proposal_raises():
    class ZeroDensity(PredictiveModel):
        dim = 1

        def log_prior(self, theta):
            return -math.inf

        def log_likelihood(self, seg, theta):
            return 0.0

        def log_posterior(self, seg, theta):
            return -math.inf

        def log_posterior_batch(self, seg, thetas):
            return np.full(len(thetas), -math.inf)

    with pytest.raises(DegenerateProposalError):
        importance_step(
            ZeroDensity(), empty_segment(), np.zeros(1), np.eye(1), 8,
            np.random.default_rng(0),
        )


# ---------------------------------------------------------------------------
# effective sample size


def test_ess_closed_forms():
    assert ess(np.log(np.full(4, 0.25))) == pytest.approx(4.0, abs=1e-12)
    one_hot = np.log(np.array([1.0, 1e-300, 1e-300]))
    assert ess(one_hot - np.logaddexp.reduce(one_hot)) == pytest.approx(1.0, abs=1e-9)
    assert ess(np.log(np.array([0.75, 0.25]))) == pytest.approx(1.6, abs=1e-12)


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=12))
@settings(max_examples=60, deadline=None)
def test_ess_permutation_invariant_and_max_at_uniform(raw):
    w = np.array(raw) / np.sum(raw)
    log_w = np.log(w)
    value = ess(log_w)
    assert value == pytest.approx(ess(log_w[::-1].copy()), rel=1e-12)
    assert value <= len(w) + 1e-9
    if np.allclose(w, w[0]):
        assert value == pytest.approx(len(w), rel=1e-9)
    elif np.max(w) - np.min(w) > 1e-6:
        assert value < len(w) - 1e-12


# ---------------------------------------------------------------------------
# systematic resampling


def test_resample_degenerate_weight():
    np.testing.assert_array_equal(
        systematic_resample(np.array([1.0, 0.0]), 2, 0.9), [0, 0]
    )


def test_resample_hand_traces():
    np.testing.assert_array_equal(
        systematic_resample(np.array([0.5, 0.5]), 2, 0.3), [0, 1]
    )
    np.testing.assert_array_equal(
        systematic_resample(np.array([0.2, 0.3, 0.5]), 3, 0.5), [0, 2, 2]
    )


def test_resample_rejects_bad_u():
    with pytest.raises(ValueError):
        systematic_resample(np.array([1.0]), 1, 1.0)


@given(
    raw=st.lists(st.floats(0.001, 1.0), min_size=1, max_size=10),
    u=st.floats(0.0, 0.999999),
    scale=st.integers(1, 4),
)
@settings(max_examples=80, deadline=None)
def test_resample_offspring_counts(raw, u, scale):
    w = np.array(raw) / np.sum(raw)
    n_out = scale * len(w)
    idx = systematic_resample(w, n_out, u)
    assert len(idx) == n_out
    assert np.all(np.diff(idx) >= 0)
    counts = np.bincount(idx, minlength=len(w))
    np.testing.assert_array_less(np.abs(counts - n_out * w), 1.0 + 1e-9)


# ---------------------------------------------------------------------------
# full update


def test_smc_update_tracks_conjugate_posterior():
    model = GaussianMeanModel(prior_mean=0.0, prior_var=1.0, obs_var=0.5)
    seg = Segment(1, np.array([1.0, 1.2, 0.9]))
    mean, var = model.posterior_params(seg)
    prev = Ensemble(particles=model.sample_prior(2000, np.random.default_rng(0)))
    ens = smc_update(model, seg, prev, 2000, np.random.default_rng(1))
    est = float(ens.weights() @ ens.particles[:, 0])
    assert est == pytest.approx(mean, abs=4 * math.sqrt(var / 2000))


def test_smc_update_resamples_on_low_ess():
    # force resampling with a huge ess threshold: weights reset to uniform
    model = GaussianMeanModel()
    prev = Ensemble(particles=model.sample_prior(50, np.random.default_rng(0)))
    ens = smc_update(
        model, Segment(1, np.array([0.4])), prev, 50, np.random.default_rng(1),
        ess_fraction=1.1,
    )
    assert ens.log_weights is None

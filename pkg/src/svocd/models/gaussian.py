"""Conjugate Gaussian model: unknown mean, known observation variance.

This model exists to validate the changepoint engine: the posterior over
the mean, the one-step evidence and posterior sampling are all available
in closed form, so engine output can be compared against exhaustive
ground truth.
"""

from __future__ import annotations

import numpy as np

from .base import ParamVector, PredictiveModel, Segment

_LOG_2PI = np.log(2.0 * np.pi)


def _log_normal_pdf(x, mean, var):
    return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)


class GaussianMeanModel(PredictiveModel):
    """y_i ~ N(theta, obs_var) with prior theta ~ N(prior_mean, prior_var)."""

    dim = 1

    def __init__(self, prior_mean: float = 0.0, prior_var: float = 1.0, obs_var: float = 1.0):
        if prior_var <= 0 or obs_var <= 0:
            raise ValueError("variances must be positive")
        self.prior_mean = float(prior_mean)
        self.prior_var = float(prior_var)
        self.obs_var = float(obs_var)

    # --- prior ---------------------------------------------------------

    def log_prior(self, theta: ParamVector) -> float:
        return float(_log_normal_pdf(theta[0], self.prior_mean, self.prior_var))

    def grad_log_prior(self, theta: ParamVector) -> ParamVector:
        return np.array([-(theta[0] - self.prior_mean) / self.prior_var])

    def prior_precision_diag(self) -> np.ndarray:
        return np.array([1.0 / self.prior_var])

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.prior_mean + np.sqrt(self.prior_var) * rng.standard_normal((n, 1))

    # --- likelihood -----------------------------------------------------

    def log_likelihood(self, seg: Segment, theta: ParamVector) -> float:
        if len(seg) == 0:
            return 0.0
        return float(np.sum(_log_normal_pdf(seg.values, theta[0], self.obs_var)))

    def grad_log_likelihood(self, seg: Segment, theta: ParamVector) -> ParamVector:
        return np.array([np.sum(seg.values - theta[0]) / self.obs_var])

    def fisher_information(self, seg: Segment, theta: ParamVector) -> np.ndarray:
        return np.array([[len(seg) / self.obs_var]])

    # --- predictive -------------------------------------------------------

    def log_predictive(self, y: float, seg: Segment, theta: ParamVector) -> float:
        return float(_log_normal_pdf(y, theta[0], self.obs_var))

    def sample_predictive(self, seg: Segment, theta: ParamVector, rng: np.random.Generator) -> float:
        return float(theta[0] + np.sqrt(self.obs_var) * rng.standard_normal())

    def log_predictive_batch(self, y: float, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        return _log_normal_pdf(y, thetas[:, 0], self.obs_var)

    def log_posterior_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        t = thetas[:, 0]
        out = _log_normal_pdf(t, self.prior_mean, self.prior_var)
        if len(seg) > 0:
            out = out + np.sum(_log_normal_pdf(seg.values[None, :], t[:, None], self.obs_var), axis=1)
        return out

    # --- closed forms (the conjugate oracle surface) ----------------------

    def posterior_params(self, seg: Segment) -> tuple[float, float]:
        """Exact posterior (mean, variance) of theta given the segment."""
        n = len(seg)
        prec = 1.0 / self.prior_var + n / self.obs_var
        var = 1.0 / prec
        mean = var * (self.prior_mean / self.prior_var + np.sum(seg.values) / self.obs_var)
        return float(mean), float(var)

    def exact_log_evidence(self, y: float, seg: Segment) -> float:
        """Exact log p(y | segment): Gaussian with the posterior-predictive
        mean and variance."""
        mean, var = self.posterior_params(seg)
        return float(_log_normal_pdf(y, mean, var + self.obs_var))

    def sample_posterior(self, seg: Segment, n: int, rng: np.random.Generator) -> np.ndarray:
        mean, var = self.posterior_params(seg)
        return mean + np.sqrt(var) * rng.standard_normal((n, 1))

"""Capability contract shared by every predictive model.

The changepoint engine and all samplers are written against this
interface: a model exposes a Gaussian prior over an *unconstrained*
parameter vector, a segment likelihood, and a one-step predictive
density.  Positivity or other constraints are handled inside the model
by its own reparameterization, so samplers never see a transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ParamVector = np.ndarray  # 1-d float array of fixed model dimension


class EvaluationError(RuntimeError):
    """A model evaluation overflowed or produced NaN."""


@dataclass(frozen=True)
class Segment:
    """Observations attributed to one changepoint hypothesis.

    ``start`` is the 1-based index of the first observation after the
    hypothesized changepoint; ``values`` holds those observations in time
    order and may be empty for a hypothesis that just opened.
    ``left_boundary`` is the observation preceding the segment (0.0 when
    start == 1); only arrival-time models use it.
    """

    start: int
    values: np.ndarray
    left_boundary: float = 0.0

    def __len__(self) -> int:
        return len(self.values)


class PredictiveModel:
    """Prior + segment likelihood + one-step predictive density.

    Every operation is pure given its inputs; randomness enters only
    through caller-owned ``numpy.random.Generator`` streams, so shared
    model instances are safe to evaluate concurrently.
    """

    dim: int

    # --- prior over the unconstrained parameter vector -------------------

    def log_prior(self, theta: ParamVector) -> float:
        raise NotImplementedError

    def grad_log_prior(self, theta: ParamVector) -> ParamVector:
        raise NotImplementedError

    def prior_precision_diag(self) -> np.ndarray:
        raise NotImplementedError

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. prior parameter vectors, shape (n, dim)."""
        raise NotImplementedError

    # --- segment likelihood ----------------------------------------------

    def log_likelihood(self, seg: Segment, theta: ParamVector) -> float:
        raise NotImplementedError

    def grad_log_likelihood(self, seg: Segment, theta: ParamVector) -> ParamVector:
        raise NotImplementedError

    def fisher_information(self, seg: Segment, theta: ParamVector) -> np.ndarray:
        """Outer-product (Gauss-Newton style) curvature of the segment
        likelihood; symmetric positive semidefinite, shape (dim, dim)."""
        raise NotImplementedError

    # --- one-step-ahead predictive ----------------------------------------

    def log_predictive(self, y: float, seg: Segment, theta: ParamVector) -> float:
        raise NotImplementedError

    def sample_predictive(
        self, seg: Segment, theta: ParamVector, rng: np.random.Generator
    ) -> float:
        raise NotImplementedError

    # --- derived quantities -------------------------------------------------

    def log_posterior(self, seg: Segment, theta: ParamVector) -> float:
        """Unnormalized log posterior: log prior + segment log likelihood.

        Raises EvaluationError on overflow (NaN or +inf); -inf is a valid
        tail value and passes through.
        """
        value = self.log_prior(theta) + self.log_likelihood(seg, theta)
        if np.isnan(value) or value == np.inf:
            raise EvaluationError(f"non-finite log posterior ({value}) at theta={theta}")
        return value

    def grad_log_posterior(self, seg: Segment, theta: ParamVector) -> ParamVector:
        grad = self.grad_log_prior(theta) + self.grad_log_likelihood(seg, theta)
        if not np.all(np.isfinite(grad)):
            raise EvaluationError(f"non-finite posterior gradient at theta={theta}")
        return grad

    def posterior_hessian(self, seg: Segment, theta: ParamVector) -> np.ndarray:
        """Positive-definite approximation of -d^2 log posterior: the prior
        precision plus the likelihood Fisher information."""
        return np.diag(self.prior_precision_diag()) + self.fisher_information(seg, theta)

    # --- batched helpers (default: loop; models may vectorize) -------------

    def log_predictive_batch(self, y: float, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        return np.array([self.log_predictive(y, seg, t) for t in thetas])

    def log_posterior_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        return np.array([self.log_posterior(seg, t) for t in thetas])

    def grad_log_posterior_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        return np.stack([self.grad_log_posterior(seg, t) for t in thetas])

    def posterior_hessian_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        return np.stack([self.posterior_hessian(seg, t) for t in thetas])

    def grad_and_hessian_batch(self, seg: Segment, thetas: np.ndarray):
        """Score and curvature for a whole particle batch; models override
        this to share work between the two."""
        return self.grad_log_posterior_batch(seg, thetas), self.posterior_hessian_batch(seg, thetas)


class IsotropicGaussianPrior:
    """theta ~ N(prior_mean, prior_var * I) over the unconstrained vector.

    Mixin for models whose prior is isotropic Gaussian; expects ``dim``,
    ``prior_mean`` (scalar) and ``prior_var`` attributes.
    """

    dim: int
    prior_mean: float
    prior_var: float

    def log_prior(self, theta: ParamVector) -> float:
        d = theta - self.prior_mean
        return float(
            -0.5 * np.dot(d, d) / self.prior_var
            - 0.5 * self.dim * np.log(2.0 * np.pi * self.prior_var)
        )

    def grad_log_prior(self, theta: ParamVector) -> ParamVector:
        return -(theta - self.prior_mean) / self.prior_var

    def prior_precision_diag(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.prior_var)

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.prior_mean + np.sqrt(self.prior_var) * rng.standard_normal((n, self.dim))


def empty_segment(start: int = 1, left_boundary: float = 0.0) -> Segment:
    return Segment(start=start, values=np.empty(0), left_boundary=left_boundary)

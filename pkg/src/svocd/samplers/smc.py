"""Sequential Monte Carlo segment-posterior updates.

Baseline alternative to Stein transport: each update refits a Laplace
approximation of the segment posterior (damped Newton on the log
posterior, Gauss-Newton curvature), importance-samples from it, and
applies adaptive systematic resampling when the effective sample size
drops below half the particle count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..models.base import PredictiveModel, Segment
from .svn import Ensemble

_MAX_NEWTON_ITER = 200
_GRAD_TOL = 1e-9
ESS_FRACTION = 0.5


class DegenerateProposalError(RuntimeError):
    """Every importance weight vanished: the proposal misses the target."""


@dataclass
class LaplaceFit:
    """Gaussian approximation at a posterior mode."""

    mode: np.ndarray
    cov: np.ndarray
    converged: bool
    iterations: int


def laplace_fit(model: PredictiveModel, seg: Segment, init: np.ndarray) -> LaplaceFit:
    """Find the MAP by damped Newton and return the Gaussian approximation.

    The curvature is the prior precision plus the likelihood Fisher
    information; steps are halved until the log posterior improves.  After
    200 iterations the best iterate found is returned with
    ``converged=False``.
    """
    theta = np.array(init, dtype=float)
    lp = model.log_posterior(seg, theta)
    converged = False
    it = 0
    for it in range(1, _MAX_NEWTON_ITER + 1):
        grad = model.grad_log_posterior(seg, theta)
        if np.max(np.abs(grad)) < _GRAD_TOL:
            converged = True
            break
        hess = model.posterior_hessian(seg, theta)
        direction = _solve_spd(hess, grad)
        step = 1.0
        improved = False
        for _ in range(30):
            candidate = theta + step * direction
            try:
                lp_new = model.log_posterior(seg, candidate)
            except Exception:
                lp_new = -np.inf
            if lp_new > lp:
                theta, lp = candidate, lp_new
                improved = True
                break
            step *= 0.5
        if not improved:
            # ascent direction exhausted at this resolution; treat as converged
            converged = np.max(np.abs(grad)) < 1e-5
            break
    hess = model.posterior_hessian(seg, theta)
    cov = np.linalg.inv(hess + 0.0)
    cov = 0.5 * (cov + cov.T)
    return LaplaceFit(mode=theta, cov=cov, converged=converged, iterations=it)


def _solve_spd(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    d = len(rhs)
    damp = 0.0
    lam = 1e-6 * np.trace(H) / d
    if lam <= 0 or not np.isfinite(lam):
        lam = 1e-6
    for _ in range(9):
        try:
            sol = np.linalg.solve(H + damp * np.eye(d), rhs)
            if np.all(np.isfinite(sol)):
                return sol
        except np.linalg.LinAlgError:
            pass
        damp = lam if damp == 0.0 else 2.0 * damp
    raise np.linalg.LinAlgError("posterior Hessian stayed singular after damping")


def importance_step(
    model: PredictiveModel,
    seg: Segment,
    mean: np.ndarray,
    cov: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> Ensemble:
    """Draw n particles from N(mean, cov) and weight them by the posterior.

    Weights are normalized in log space; a completely degenerate weight
    vector raises DegenerateProposalError.
    """
    d = len(mean)
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((n, d))
    particles = mean + z @ chol.T
    log_proposal = (
        -0.5 * np.sum(z * z, axis=1)
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * d * np.log(2.0 * np.pi)
    )
    log_target = model.log_posterior_batch(seg, particles)
    if np.any(np.isnan(log_target)) or np.any(log_target == np.inf):
        raise DegenerateProposalError("non-finite posterior values under the proposal")
    log_w = log_target - log_proposal
    norm = logsumexp(log_w)
    if not np.isfinite(norm):
        raise DegenerateProposalError("all importance weights vanished")
    return Ensemble(particles=particles, log_weights=log_w - norm)


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    return float(np.exp(-logsumexp(2.0 * np.asarray(log_weights))))


def systematic_resample(weights: np.ndarray, n_out: int, u: float) -> np.ndarray:
    """Systematic resampling with a single uniform draw.

    Position k is (u + k) / n_out; its index is the smallest i whose
    cumulative weight strictly exceeds the position.  Output indices are
    nondecreasing and deterministic given u.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    cumulative = np.cumsum(weights)
    positions = (u + np.arange(n_out)) / n_out
    idx = np.searchsorted(cumulative, positions, side="right")
    return np.minimum(idx, len(weights) - 1)


def smc_update(
    model: PredictiveModel,
    seg: Segment,
    previous: Ensemble,
    n: int,
    rng: np.random.Generator,
    ess_fraction: float = ESS_FRACTION,
) -> Ensemble:
    """One SMC refresh of a segment posterior.

    The Laplace fit is warm-started at the previous ensemble mean; after
    the importance step, resampling is triggered when ESS < ess_fraction*n
    and resets the weights to uniform.
    """
    fit = laplace_fit(model, seg, previous.mean())
    ensemble = importance_step(model, seg, fit.mode, fit.cov, n, rng)
    if ess(ensemble.log_weights) < ess_fraction * n:
        idx = systematic_resample(ensemble.weights(), n, rng.uniform())
        return Ensemble(particles=ensemble.particles[idx], log_weights=None)
    return ensemble

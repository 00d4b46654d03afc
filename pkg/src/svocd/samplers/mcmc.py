"""Random-walk Metropolis sampler.

Used as the ground-truth oracle for posterior covariance traces in the
benchmark study: slow but unbiased, with isotropic Gaussian proposals and
bit-reproducible output given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MIN_PROPOSAL_SCALE = 1e-12


@dataclass(frozen=True)
class ChainConfig:
    steps: int
    proposal_scale: float
    seed: int = 0
    burn_in_fraction: float = 0.2

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.proposal_scale <= _MIN_PROPOSAL_SCALE:
            raise ValueError("proposal_scale is degenerate")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")


@dataclass
class ChainResult:
    samples: np.ndarray
    acceptance_rate: float
    warning: str | None = None


def rw_metropolis(log_target, init: np.ndarray, cfg: ChainConfig) -> ChainResult:
    """Run a random-walk Metropolis chain and drop the burn-in prefix.

    ``log_target`` may return -inf in the tails; it must be finite at
    ``init``.  An acceptance rate outside (0.05, 0.8) is reported as a
    warning on the result, not an error.
    """
    x = np.array(init, dtype=float)
    lp = float(log_target(x))
    if not np.isfinite(lp):
        raise ValueError("log_target must be finite at the initial point")
    rng = np.random.default_rng(cfg.seed)
    d = len(x)
    samples = np.empty((cfg.steps, d))
    accepted = 0
    for t in range(cfg.steps):
        proposal = x + cfg.proposal_scale * rng.standard_normal(d)
        lp_prop = float(log_target(proposal))
        if np.log(rng.uniform()) < lp_prop - lp:
            x, lp = proposal, lp_prop
            accepted += 1
        samples[t] = x
    rate = accepted / cfg.steps
    warning = None
    if not 0.05 < rate < 0.8:
        warning = f"acceptance rate {rate:.3f} outside (0.05, 0.8)"
    burn = int(cfg.burn_in_fraction * cfg.steps)
    return ChainResult(samples=samples[burn:], acceptance_rate=rate, warning=warning)


def covariance_trace(samples: np.ndarray) -> float:
    """Trace of the unbiased sample covariance matrix; rows are samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    centered = samples - samples.mean(axis=0)
    return float(np.sum(centered * centered) / (samples.shape[0] - 1))

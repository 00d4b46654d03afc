from .mcmc import ChainConfig, ChainResult, covariance_trace, rw_metropolis
from .smc import (
    DegenerateProposalError,
    LaplaceFit,
    ess,
    importance_step,
    laplace_fit,
    smc_update,
    systematic_resample,
)
from .svn import (
    Ensemble,
    HessianSolveError,
    KernelSpec,
    kernel_eval,
    median_heuristic_scale,
    svgd_direction,
    svn_direction,
    svn_run,
)

__all__ = [
    "ChainConfig",
    "ChainResult",
    "DegenerateProposalError",
    "Ensemble",
    "HessianSolveError",
    "KernelSpec",
    "LaplaceFit",
    "covariance_trace",
    "ess",
    "importance_step",
    "kernel_eval",
    "laplace_fit",
    "median_heuristic_scale",
    "rw_metropolis",
    "smc_update",
    "svgd_direction",
    "svn_direction",
    "svn_run",
    "systematic_resample",
]

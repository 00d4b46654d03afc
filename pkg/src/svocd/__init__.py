"""Stein variational online changepoint detection.

Online Bayesian changepoint detection whose per-segment parameter
posteriors are tracked by Stein variational Newton particle transport,
with Hawkes-process and Bayesian-LSTM predictive models plus SMC and
MCMC baselines.
"""

from .engine import (
    DeadHypothesesError,
    Detector,
    DetectorConfig,
    Hypothesis,
    PredictiveSummary,
    StepRecord,
    detect,
    evidence_mc,
    prune_hypotheses,
    record_to_json,
    recursion_update,
    summarize,
)
from .estimator import SteinChangepointDetector, build_model
from .models import (
    BLSTMModel,
    EvaluationError,
    GaussianMeanModel,
    HawkesModel,
    PredictiveModel,
    Segment,
)
from .samplers import Ensemble, KernelSpec

__version__ = "0.1.0"

__all__ = [
    "BLSTMModel",
    "DeadHypothesesError",
    "Detector",
    "DetectorConfig",
    "Ensemble",
    "EvaluationError",
    "GaussianMeanModel",
    "HawkesModel",
    "Hypothesis",
    "KernelSpec",
    "PredictiveModel",
    "PredictiveSummary",
    "Segment",
    "SteinChangepointDetector",
    "StepRecord",
    "build_model",
    "detect",
    "evidence_mc",
    "prune_hypotheses",
    "record_to_json",
    "recursion_update",
    "summarize",
]

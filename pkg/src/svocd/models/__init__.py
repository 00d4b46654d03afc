from .base import EvaluationError, ParamVector, PredictiveModel, Segment, empty_segment
from .blstm import BLSTMModel, forward_many, forward_one, sinusoid_data
from .gaussian import GaussianMeanModel
from .hawkes import HawkesModel, compensator, intensity, sample_next_event, synth_benchmark

__all__ = [
    "BLSTMModel",
    "EvaluationError",
    "GaussianMeanModel",
    "HawkesModel",
    "ParamVector",
    "PredictiveModel",
    "Segment",
    "compensator",
    "empty_segment",
    "forward_many",
    "forward_one",
    "intensity",
    "sample_next_event",
    "sinusoid_data",
    "synth_benchmark",
]

"""scikit-learn style front end for the online changepoint detector.

``SteinChangepointDetector`` exposes the engine through the familiar
estimator surface (``fit`` / ``predict`` / ``get_params``) so it plugs
into pipelines and grid searches; the heavy lifting stays in
:mod:`svocd.engine`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import Detector, DetectorConfig
from .models import BLSTMModel, GaussianMeanModel, HawkesModel, PredictiveModel

_MODEL_NAMES = ("hawkes", "blstm", "gaussian-test")


def build_model(name_or_model, prior_mean=0.0, prior_var=None, sigma=0.1) -> PredictiveModel:
    """Construct a predictive model from its CLI name (or pass one through)."""
    if isinstance(name_or_model, PredictiveModel):
        return name_or_model
    if name_or_model == "hawkes":
        return HawkesModel(prior_mean=prior_mean,
                           prior_var=10.0 if prior_var is None else prior_var)
    if name_or_model == "blstm":
        return BLSTMModel(sigma=sigma, prior_mean=prior_mean,
                          prior_var=1.0 if prior_var is None else prior_var)
    if name_or_model == "gaussian-test":
        return GaussianMeanModel(prior_mean=prior_mean,
                                 prior_var=1.0 if prior_var is None else prior_var,
                                 obs_var=sigma**2)
    raise ValueError(f"unknown model {name_or_model!r}; choose from {_MODEL_NAMES}")


class SteinChangepointDetector(BaseEstimator):
    """Online Bayesian changepoint detection with particle posteriors.

    Parameters mirror :class:`svocd.engine.DetectorConfig`; ``model`` is a
    model name or a :class:`PredictiveModel` instance.  ``fit(X)`` streams
    the 1-d series X through the detector; ``predict(X)`` returns the
    per-observation alert flags of a fresh online pass over X.

    Attributes (after fit): ``alerts_`` boolean flags per observation,
    ``changepoints_`` alerted time indices (1-based), ``records_`` the full
    step records, ``detector_`` the underlying engine with its final state.
    """

    def __init__(self, model="hawkes", sampler="svn", n_particles=100,
                 n_pred_samples=100, n_iterations=30, step_size=0.5, hazard=100.0,
                 levels=(0.05, 0.95), mode="one_sided_upper", prune_max=50,
                 prune_floor=1e-6, min_segment=5, seed=0, n_workers=1,
                 prior_mean=0.0, prior_var=None, sigma=0.1):
        self.model = model
        self.sampler = sampler
        self.n_particles = n_particles
        self.n_pred_samples = n_pred_samples
        self.n_iterations = n_iterations
        self.step_size = step_size
        self.hazard = hazard
        self.levels = levels
        self.mode = mode
        self.prune_max = prune_max
        self.prune_floor = prune_floor
        self.min_segment = min_segment
        self.seed = seed
        self.n_workers = n_workers
        self.prior_mean = prior_mean
        self.prior_var = prior_var
        self.sigma = sigma

    def _config(self) -> DetectorConfig:
        return DetectorConfig(
            hazard=self.hazard, n_particles=self.n_particles,
            n_pred_samples=self.n_pred_samples, sampler=self.sampler,
            n_iterations=self.n_iterations, step_size=self.step_size,
            levels=tuple(self.levels), mode=self.mode, prune_max=self.prune_max,
            prune_floor=self.prune_floor, min_segment=self.min_segment,
            seed=self.seed, n_workers=self.n_workers,
        )

    def _validate_series(self, X) -> np.ndarray:
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("expected a 1-d series or a single-column matrix")
            X = X[:, 0]
        if X.ndim != 1 or len(X) == 0:
            raise ValueError("expected a non-empty 1-d series")
        return X

    def fit(self, X, y=None):
        """Stream the series through the detector and keep the results."""
        X = self._validate_series(X)
        model = build_model(self.model, self.prior_mean, self.prior_var, self.sigma)
        detector = Detector(model, self._config())
        try:
            records = detector.run(X)
        finally:
            detector.close()
        self.detector_ = detector
        self.records_ = records
        self.alerts_ = np.array([r.alert for r in records])
        self.changepoints_ = [r.time for r in records if r.alert]
        self.n_features_in_ = 1
        return self

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).alerts_

    def predict(self, X) -> np.ndarray:
        """Alert flags for a fresh online pass over X (online semantics:
        each flag uses only earlier observations)."""
        return self.fit_predict(X)

    def update(self, y: float):
        """Absorb one more observation into a fitted detector."""
        check_is_fitted(self, "detector_")
        record = self.detector_.step(y)
        self.records_.append(record)
        self.alerts_ = np.append(self.alerts_, record.alert)
        if record.alert:
            self.changepoints_.append(record.time)
        return record

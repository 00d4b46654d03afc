import numpy as np
import pytest
from sklearn.base import clone

from svocd import GaussianMeanModel, SteinChangepointDetector
from svocd.estimator import build_model
from svocd.models import BLSTMModel, HawkesModel


def small_detector(**kwargs):
    defaults = dict(
        model="gaussian-test", sampler="exact", n_particles=8, n_pred_samples=40,
        hazard=10.0, min_segment=0, mode="two_sided", levels=(0.025, 0.975), seed=0,
        sigma=1.0,
    )
    defaults.update(kwargs)
    return SteinChangepointDetector(**defaults)


SERIES = np.concatenate([np.zeros(8), np.full(8, 6.0)]) + 0.1 * np.sin(np.arange(16))


def test_build_model_dispatch():
    assert isinstance(build_model("hawkes"), HawkesModel)
    assert isinstance(build_model("blstm", sigma=0.2), BLSTMModel)
    gaussian = build_model("gaussian-test", prior_var=2.0, sigma=0.5)
    assert isinstance(gaussian, GaussianMeanModel)
    assert gaussian.obs_var == pytest.approx(0.25)
    passthrough = HawkesModel()
    assert build_model(passthrough) is passthrough
    with pytest.raises(ValueError):
        build_model("nope")


def test_get_params_set_params_roundtrip():
    detector = small_detector()
    params = detector.get_params()
    assert params["sampler"] == "exact"
    detector.set_params(n_particles=5)
    assert detector.n_particles == 5
    cloned = clone(detector)
    assert cloned.get_params() == detector.get_params()


def test_fit_exposes_results():
    detector = small_detector().fit(SERIES)
    assert detector.alerts_.shape == (len(SERIES),)
    assert detector.alerts_.dtype == bool
    assert len(detector.records_) == len(SERIES)
    assert 9 in detector.changepoints_  # the jump to 6.0 at index 9 (1-based)


def test_fit_predict_matches_fit():
    flags = small_detector().fit_predict(SERIES)
    np.testing.assert_array_equal(flags, small_detector().fit(SERIES).alerts_)
    np.testing.assert_array_equal(flags, small_detector().predict(SERIES))


def test_fit_accepts_column_matrix():
    detector = small_detector().fit(SERIES[:, None])
    assert len(detector.records_) == len(SERIES)
    with pytest.raises(ValueError):
        small_detector().fit(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        small_detector().fit(np.empty(0))


def test_streaming_update_extends_fit():
    detector = small_detector().fit(SERIES[:10])
    record = detector.update(SERIES[10])
    assert record.time == 11
    assert len(detector.records_) == 11
    assert detector.alerts_.shape == (11,)


def test_update_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        small_detector().update(0.0)


def test_seed_changes_nothing_with_exact_sampler_but_is_plumbed():
    a = small_detector(seed=1).fit(SERIES).alerts_
    b = small_detector(seed=1).fit(SERIES).alerts_
    np.testing.assert_array_equal(a, b)

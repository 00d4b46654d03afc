"""Model-generic Bayesian online changepoint engine.

Maintains one hypothesis per candidate "time of the most recent change";
each observation updates the hypothesis joints by a forward recursion
(Monte Carlo evidence times hazard prior), refreshes every hypothesis's
particle posterior with the configured sampler, prunes the hypothesis
set, and predicts the next observation for credible-interval alerting.
All mass bookkeeping happens in log space.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .models.base import EvaluationError, PredictiveModel, Segment
from .samplers.smc import smc_update
from .samplers.svn import Ensemble, svn_run

logger = logging.getLogger(__name__)

SAMPLERS = ("svn", "svgd", "smc", "exact")
DETECT_MODES = ("one_sided_upper", "two_sided")

# stream tags for deterministic per-purpose RNG derivation
_STREAM_PRIOR = 0
_STREAM_PREDICT = 1
_STREAM_SAMPLER = 2


class DeadHypothesesError(RuntimeError):
    """Every hypothesis lost all posterior mass."""


@dataclass(frozen=True)
class DetectorConfig:
    """Engine settings; ``hazard`` is the expected run length H, so the
    per-step changepoint prior probability is 1/H."""

    hazard: float = 100.0
    n_particles: int = 100
    n_pred_samples: int = 100
    sampler: str = "svn"
    n_iterations: int = 30
    step_size: float = 0.5
    levels: tuple[float, float] = (0.05, 0.95)
    mode: str = "one_sided_upper"
    prune_max: int = 50
    prune_floor: float = 1e-6
    min_segment: int = 5
    seed: int = 0
    n_workers: int = 1
    record_top_k: int = 5

    def __post_init__(self):
        if not self.hazard > 1:
            raise ValueError("hazard (expected run length) must exceed 1")
        if self.n_particles < 1 or self.n_pred_samples < 1 or self.prune_max < 1:
            raise ValueError("counts must be >= 1")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {SAMPLERS}")
        if self.mode not in DETECT_MODES:
            raise ValueError(f"unknown detect mode {self.mode!r}")
        lo, hi = self.levels
        if not (0.0 < lo < 1.0 and 0.0 < hi < 1.0 and lo < hi):
            raise ValueError("quantile levels must be in (0, 1) with lower < upper")
        if self.min_segment < 0:
            raise ValueError("min_segment must be >= 0")

    @property
    def cp_log_prior(self) -> tuple[float, float]:
        """(log p_cp, log(1 - p_cp)) for the constant hazard."""
        p = 1.0 / self.hazard
        return (math.log(p) if p > 0 else -math.inf), math.log1p(-p)


@dataclass
class Hypothesis:
    """One candidate last-changepoint time with its particle posterior."""

    tau: int
    log_joint: float
    ensemble: Ensemble


@dataclass
class PredictiveSummary:
    mean: float
    lower: float
    upper: float
    levels: tuple[float, float]
    samples: np.ndarray | None = None


@dataclass
class StepRecord:
    """Everything the detector produced when absorbing one observation.

    ``summary`` is the prediction the incoming observation was tested
    against (made before it was seen); ``posterior`` is the full
    changepoint posterior after absorbing it.
    """

    time: int
    observation: float
    alert: bool
    summary: PredictiveSummary
    posterior: list[tuple[int, float]]
    timings_ms: dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# pure per-phase operations


def evidence_mc(model: PredictiveModel, seg: Segment, ensemble: Ensemble, y_new: float) -> float:
    """Log Monte Carlo evidence: log of the (weighted) particle average of
    the one-step predictive density."""
    lp = model.log_predictive_batch(y_new, seg, ensemble.particles)
    if np.any(np.isnan(lp)) or np.any(lp == np.inf):
        raise EvaluationError("non-finite predictive density during evidence estimation")
    with np.errstate(divide="ignore"):
        if ensemble.log_weights is None:
            return float(logsumexp(lp) - math.log(len(lp)))
        return float(logsumexp(lp + ensemble.log_weights))


def recursion_update(log_joints: np.ndarray, log_evidences: np.ndarray, log_pcp: float,
                     log_1mpcp: float) -> tuple[np.ndarray, float]:
    """One forward step of the changepoint recursion.

    Returns the continuation joints (same hypothesis order) and the joint
    mass of the newly spawned hypothesis.
    """
    weighted = log_joints + log_evidences
    continued = weighted + log_1mpcp
    with np.errstate(invalid="ignore"):
        spawned = float(logsumexp(weighted + log_pcp)) if log_pcp > -math.inf else -math.inf
    return continued, spawned


def prune_hypotheses(hypotheses: list[Hypothesis], max_keep: int, mass_floor: float) -> list[Hypothesis]:
    """Keep the top-``max_keep`` hypotheses by posterior mass, dropping any
    below ``mass_floor``; the newest hypothesis always survives.  The
    survivors' joints are renormalized to a log posterior."""
    log_joints = np.array([h.log_joint for h in hypotheses])
    total = logsumexp(log_joints)
    if total == -math.inf:
        raise DeadHypothesesError("all hypotheses have zero mass")
    masses = np.exp(log_joints - total)
    newest = max(h.tau for h in hypotheses)
    order = np.argsort(-masses, kind="stable")
    keep = set()
    for rank, idx in enumerate(order):
        if rank >= max_keep:
            break
        if masses[idx] >= mass_floor:
            keep.add(int(idx))
    keep.add(next(i for i, h in enumerate(hypotheses) if h.tau == newest))
    kept = [hypotheses[i] for i in sorted(keep)]
    norm = logsumexp(np.array([h.log_joint for h in kept]))
    for h in kept:
        h.log_joint -= norm
    return kept


def summarize(samples: np.ndarray, levels: tuple[float, float],
              retain_samples: bool = True) -> PredictiveSummary:
    """Mean and nearest-rank quantiles of a predictive sample set."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1:
        raise ValueError("need at least one predictive sample")
    ordered = np.sort(samples)
    return PredictiveSummary(
        mean=float(samples.mean()),
        lower=float(_nearest_rank(ordered, levels[0])),
        upper=float(_nearest_rank(ordered, levels[1])),
        levels=levels,
        samples=samples if retain_samples else None,
    )


def _nearest_rank(ordered: np.ndarray, q: float) -> float:
    idx = max(int(math.ceil(q * len(ordered))), 1) - 1
    return ordered[idx]


def detect(y_obs: float, summary: PredictiveSummary, mode: str) -> bool:
    """Credible-interval alert rule; boundaries never alert."""
    if mode == "one_sided_upper":
        return y_obs > summary.upper
    if mode == "two_sided":
        return y_obs < summary.lower or y_obs > summary.upper
    raise ValueError(f"unknown detect mode {mode!r}")


# ---------------------------------------------------------------------------
# parallel transport worker (module level so it pickles)


def _transport_task(args):
    tau, model, seg, particles, sampler, iterations, step, n, seed_key = args
    try:
        if sampler == "svn":
            moved = svn_run(particles, lambda x: model.grad_and_hessian_batch(seg, x),
                            iterations, step)
            return tau, Ensemble(particles=moved), None
        if sampler == "svgd":
            moved = svn_run(particles, lambda x: (model.grad_log_posterior_batch(seg, x), None),
                            iterations, step)
            return tau, Ensemble(particles=moved), None
        if sampler == "smc":
            rng = np.random.default_rng(np.random.SeedSequence(seed_key))
            ens = smc_update(model, seg, Ensemble(particles=particles), n, rng)
            return tau, ens, None
        raise ValueError(f"no transport for sampler {sampler!r}")
    except Exception as exc:  # demoted by the caller
        return tau, None, f"{type(exc).__name__}: {exc}"


class Detector:
    """Online changepoint detector bound to one model and config.

    Owns the observation history, the live hypotheses and the RNG streams;
    per-purpose streams are derived from (seed, stream tag, time) so runs
    are reproducible regardless of pruning or worker count.
    """

    def __init__(self, model: PredictiveModel, config: DetectorConfig | None = None):
        self.model = model
        self.config = config or DetectorConfig()
        if self.config.sampler == "exact" and not hasattr(model, "sample_posterior"):
            raise ValueError("the 'exact' sampler needs a model with closed-form posteriors")
        self.observations: list[float] = []
        self.hypotheses: list[Hypothesis] = [
            Hypothesis(tau=1, log_joint=0.0, ensemble=self._prior_ensemble(0))
        ]
        self._next_summary: PredictiveSummary | None = None
        self._executor: ProcessPoolExecutor | None = None

    # --- plumbing ------------------------------------------------------

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _rng(self, stream: int, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.config.seed, stream, *key]))

    def _prior_ensemble(self, t: int) -> Ensemble:
        rng = self._rng(_STREAM_PRIOR, t)
        particles = self.model.sample_prior(self.config.n_particles, rng)
        return Ensemble(particles=particles, seed=t)

    def segment(self, tau: int) -> Segment:
        obs = self.observations
        left = float(obs[tau - 2]) if tau >= 2 else 0.0
        return Segment(start=tau, values=np.asarray(obs[tau - 1 :], dtype=float), left_boundary=left)

    @property
    def time(self) -> int:
        return len(self.observations)

    def posterior(self) -> list[tuple[int, float]]:
        """Normalized changepoint posterior as (tau, probability) pairs."""
        log_joints = np.array([h.log_joint for h in self.hypotheses])
        probs = np.exp(log_joints - logsumexp(log_joints))
        return [(h.tau, float(p)) for h, p in zip(self.hypotheses, probs)]

    # --- per-phase internals ----------------------------------------------

    def _evidences(self, y_new: float) -> np.ndarray:
        exact = self.config.sampler == "exact"
        out = np.empty(len(self.hypotheses))
        for i, hyp in enumerate(self.hypotheses):
            seg = self.segment(hyp.tau)
            try:
                if exact:
                    out[i] = self.model.exact_log_evidence(y_new, seg)
                else:
                    out[i] = evidence_mc(self.model, seg, hyp.ensemble, y_new)
            except EvaluationError as exc:
                logger.warning("evidence failed for tau=%d: %s", hyp.tau, exc)
                out[i] = -math.inf
        return out

    def _transport_args(self, hyp: Hypothesis, t: int):
        cfg = self.config
        seed_key = [cfg.seed, _STREAM_SAMPLER, t, hyp.tau]
        return (hyp.tau, self.model, self.segment(hyp.tau), hyp.ensemble.particles,
                cfg.sampler, cfg.n_iterations, cfg.step_size, cfg.n_particles, seed_key)

    def _samples_update(self, continuing: list[Hypothesis]):
        cfg = self.config
        t = self.time
        if cfg.sampler == "exact":
            for hyp in continuing:
                rng = self._rng(_STREAM_SAMPLER, t, hyp.tau)
                hyp.ensemble = Ensemble(
                    particles=self.model.sample_posterior(self.segment(hyp.tau),
                                                          cfg.n_particles, rng))
            return
        tasks = [self._transport_args(h, t) for h in continuing]
        if cfg.n_workers > 1 and len(tasks) > 1:
            if self._executor is None:
                self._executor = ProcessPoolExecutor(max_workers=cfg.n_workers)
            chunk = max(1, len(tasks) // (4 * cfg.n_workers))
            results = list(self._executor.map(_transport_task, tasks, chunksize=chunk))
        else:
            results = [_transport_task(task) for task in tasks]
        by_tau = {h.tau: h for h in continuing}
        for tau, ensemble, error in results:
            if error is not None:
                logger.warning("samples update failed for tau=%d: %s", tau, error)
                by_tau[tau].log_joint = -math.inf
            else:
                by_tau[tau].ensemble = ensemble

    def predictive_draw(self, rng: np.random.Generator) -> float:
        """One draw from the predictive posterior: sample a hypothesis from
        the changepoint posterior, a particle from its ensemble, then an
        observation from the model."""
        pairs = self.posterior()
        probs = np.array([p for _, p in pairs])
        hyp = self.hypotheses[rng.choice(len(probs), p=probs / probs.sum())]
        k = rng.choice(len(hyp.ensemble), p=hyp.ensemble.weights()
                       if hyp.ensemble.log_weights is not None else None)
        return self.model.sample_predictive(self.segment(hyp.tau), hyp.ensemble.particles[k], rng)

    def _predictive_summary(self) -> PredictiveSummary:
        cfg = self.config
        rng = self._rng(_STREAM_PREDICT, self.time)
        pairs = self.posterior()
        probs = np.array([p for _, p in pairs])
        counts = rng.multinomial(cfg.n_pred_samples, probs / probs.sum())
        draws = np.empty(cfg.n_pred_samples)
        pos = 0
        for hyp, count in zip(self.hypotheses, counts):
            if count == 0:
                continue
            seg = self.segment(hyp.tau)
            weights = hyp.ensemble.weights() if hyp.ensemble.log_weights is not None else None
            picks = rng.choice(len(hyp.ensemble), size=count, p=weights)
            for k in picks:
                draws[pos] = self.model.sample_predictive(seg, hyp.ensemble.particles[k], rng)
                pos += 1
        return summarize(draws, cfg.levels)

    # --- the main loop ----------------------------------------------------------

    def step(self, y_new: float) -> StepRecord:
        """Absorb one observation and return the step record.

        Phases: Monte Carlo evidence per hypothesis, changepoint recursion,
        per-hypothesis samples update (plus a fresh prior hypothesis),
        pruning, predictive sampling for the next observation, and the
        credible-interval alert for ``y_new`` against the prediction made
        before it arrived.
        """
        cfg = self.config
        y_new = float(y_new)
        timings: dict[str, float] = {}
        if self._next_summary is None:
            self._next_summary = self._predictive_summary()
        prediction = self._next_summary

        t0 = time.perf_counter()
        log_evidences = self._evidences(y_new)
        timings["evidence"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        log_pcp, log_1mpcp = cfg.cp_log_prior
        log_joints = np.array([h.log_joint for h in self.hypotheses])
        continued, spawned = recursion_update(log_joints, log_evidences, log_pcp, log_1mpcp)
        if logsumexp(np.append(continued, spawned)) == -math.inf:
            raise DeadHypothesesError(f"all hypotheses died at time {self.time + 1}")
        for hyp, lj in zip(self.hypotheses, continued):
            hyp.log_joint = lj
        self.observations.append(y_new)
        new_tau = self.time + 1
        spawned_hyp = Hypothesis(tau=new_tau, log_joint=spawned,
                                 ensemble=self._prior_ensemble(self.time))
        timings["recursion"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        live = [h for h in self.hypotheses if h.log_joint > -math.inf]
        dead = [h for h in self.hypotheses if h.log_joint == -math.inf]
        self._samples_update(live)
        self.hypotheses = sorted(live + dead + [spawned_hyp], key=lambda h: h.tau)
        timings["samples"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        self.hypotheses = prune_hypotheses(self.hypotheses, cfg.prune_max, cfg.prune_floor)
        timings["prune"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        self._next_summary = self._predictive_summary()
        timings["predictive"] = (time.perf_counter() - t0) * 1e3

        alert = self.time > cfg.min_segment and detect(y_new, prediction, cfg.mode)
        return StepRecord(
            time=self.time,
            observation=y_new,
            alert=bool(alert),
            summary=prediction,
            posterior=self.posterior(),
            timings_ms=timings,
        )

    def run(self, observations) -> list[StepRecord]:
        return [self.step(y) for y in observations]


def record_to_json(record: StepRecord, top_k: int = 5, include_timings: bool = False) -> str:
    """One JSON line per step: time, alert, prediction summary and the
    top-k changepoint posterior pairs (timings opt-in so identical seeds
    produce identical files)."""
    posterior = sorted(record.posterior, key=lambda p: -p[1])[:top_k]
    payload = {
        "time": record.time,
        "observation": record.observation,
        "alert": record.alert,
        "mean": record.summary.mean,
        "lower": record.summary.lower,
        "upper": record.summary.upper,
        "levels": list(record.summary.levels),
        "posterior": [[int(tau), prob] for tau, prob in posterior],
    }
    if include_timings:
        payload["timings_ms"] = record.timings_ms
    return json.dumps(payload, sort_keys=True)

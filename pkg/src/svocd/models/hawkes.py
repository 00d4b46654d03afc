"""Self-exciting (Hawkes) point-process predictive model.

Intensity lambda(t) = mu + gamma * sum_{y_k < t} exp(-delta (t - y_k)),
restricted to the events of the current segment: history is reset at each
changepoint.  The model parameterizes theta = (ln mu, ln gamma, ln delta)
so that samplers work in unconstrained space with a Gaussian prior.

All segment quantities (likelihood, score, Fisher information) are
evaluated for whole particle batches at once; the per-event excitation
sums are shared between the score and the Fisher outer products.
"""

from __future__ import annotations

import math

import numpy as np

from .base import IsotropicGaussianPrior, ParamVector, PredictiveModel, Segment

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

# ---------------------------------------------------------------------------
# natural-parameter core


def intensity(t: float, events: np.ndarray, mu: float, gamma: float, delta: float) -> float:
    """Conditional intensity at time t; only events strictly before t excite."""
    past = events[events < t]
    if len(past) == 0:
        return mu
    return mu + gamma * float(np.sum(np.exp(-delta * (t - past))))


def compensator(
    a: float, b: float, events: np.ndarray, mu: float, gamma: float, delta: float
) -> float:
    """Integral of the intensity over (a, b], in closed form.

    Events at or after b contribute nothing; events inside (a, b) are
    integrated from their own arrival time.
    """
    if b < a:
        raise ValueError("interval must satisfy a <= b")
    base = mu * (b - a)
    past = events[events < b]
    if len(past) == 0 or gamma == 0.0:
        return base
    u = np.maximum(a, past)
    # gamma/delta * (exp(-delta(u-y)) - exp(-delta(b-y))), written with expm1
    # so the delta -> 0 limit stays accurate.
    terms = np.exp(-delta * (u - past)) * (-np.expm1(-delta * (b - u)) / delta)
    return base + gamma * float(np.sum(terms))


def sample_next_event(
    events: np.ndarray,
    current_time: float,
    mu: float,
    gamma: float,
    delta: float,
    rng: np.random.Generator,
) -> float:
    """Draw the next arrival after ``current_time`` by Ogata thinning.

    The intensity is non-increasing between events, so the intensity just
    after the current time dominates; each rejection tightens the bound.
    """
    t = current_time
    past = events[events <= t]
    lam_bar = mu + gamma * float(np.sum(np.exp(-delta * (t - past)))) if len(past) else mu
    while True:
        t += rng.exponential(1.0 / lam_bar)
        lam_t = intensity(t, events, mu, gamma, delta)
        if rng.uniform() * lam_bar <= lam_t:
            return t
        lam_bar = lam_t


# generating parameters of the synthetic benchmark, in log space
SYNTH_ETA_1 = np.array([-1.0, -2.0, 1.0])
SYNTH_ETA_2 = np.array([2.0, 4.0, 0.0])
SYNTH_SEGMENT_LENGTH = 10
SYNTH_N_SEGMENTS = 6


def simulate_segment(
    eta: np.ndarray, start_time: float, n_events: int, rng: np.random.Generator
) -> np.ndarray:
    """Simulate one segment of ``n_events`` arrivals after ``start_time``
    with history reset: only the segment's own events excite."""
    mu, gamma, delta = np.exp(eta)
    t = start_time
    events: list[float] = []
    for _ in range(n_events):
        t = sample_next_event(np.array(events), t, mu, gamma, delta, rng)
        events.append(t)
    return np.array(events)


def synth_benchmark(rng: np.random.Generator):
    """Synthetic arrival stream with a regime switch every 10 events.

    Returns (events, changepoints, segment_params): 60 strictly increasing
    arrival times, the changepoint labels {10, 20, ..., 60} (a label c
    means the regime switches after observation c), and the per-segment
    log-parameter vectors, alternating between the two generating states.
    """
    events: list[float] = []
    segment_params = []
    t = 0.0
    for s in range(SYNTH_N_SEGMENTS):
        eta = SYNTH_ETA_1 if s % 2 == 0 else SYNTH_ETA_2
        segment_params.append(eta.copy())
        seg_events = simulate_segment(eta, t, SYNTH_SEGMENT_LENGTH, rng)
        events.extend(seg_events)
        t = seg_events[-1]
    changepoints = [SYNTH_SEGMENT_LENGTH * (s + 1) for s in range(SYNTH_N_SEGMENTS)]
    return np.array(events), changepoints, segment_params


# ---------------------------------------------------------------------------
# batched segment machinery


def _segment_eval_numpy(events, left, mu, gamma, delta, want_grad=False, want_fisher=False):
    """Pure-numpy batched segment evaluation (fallback and test reference).

    S[p, i] = sum_{k<i} exp(-delta_p (y_i - y_k)) and T is the matching
    time-weighted sum; both feed the per-event intensities, the eta-score
    and the Fisher outer products.
    """
    npart = len(mu)
    loglik = np.zeros(npart)
    grad = np.zeros((npart, 3))
    fisher = np.zeros((npart, 3, 3))
    n = len(events)
    if n == 0:
        return loglik, grad, fisher

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        S = np.zeros((npart, n))
        T = np.zeros((npart, n))
        for i in range(1, n):
            dt = events[i] - events[i - 1]
            decay = np.exp(-delta * dt)
            S[:, i] = decay * (S[:, i - 1] + 1.0)
            T[:, i] = decay * (T[:, i - 1] + dt * (S[:, i - 1] + 1.0))
        lam = mu[:, None] + gamma[:, None] * S  # (npart, n)
        d_end = events[-1] - events  # (n,)
        B = np.exp(-delta[:, None] * d_end[None, :])
        # excitation part of the compensator over (left, last event]
        exc = gamma * np.sum(-np.expm1(-delta[:, None] * d_end[None, :]), axis=1) / delta
        base = mu * (events[-1] - left)
        loglik = np.sum(np.log(lam), axis=1) - base - exc

        if want_grad:
            inv = 1.0 / lam
            # d/d ln mu, d/d ln gamma, d/d ln delta of the log likelihood
            grad[:, 0] = mu * np.sum(inv, axis=1) - base
            grad[:, 1] = gamma * np.sum(S * inv, axis=1) - exc
            grad[:, 2] = (
                -gamma * delta * np.sum(T * inv, axis=1)
                - gamma * np.sum(d_end[None, :] * B, axis=1)
                + exc
            )
        if want_fisher:
            inv = 1.0 / lam
            v = np.empty((npart, n, 3))
            v[:, :, 0] = mu[:, None] * inv
            v[:, :, 1] = gamma[:, None] * S * inv
            v[:, :, 2] = -(gamma * delta)[:, None] * T * inv
            fisher = np.einsum("pni,pnj->pij", v, v)
    return loglik, grad, fisher


if _HAVE_NUMBA:

    @njit(cache=True, error_model="numpy")
    def _segment_eval_jit(events, left, nat, want_grad, want_fisher):
        npart = nat.shape[0]
        n = events.shape[0]
        loglik = np.zeros(npart)
        grad = np.zeros((npart, 3))
        fisher = np.zeros((npart, 3, 3))
        if n == 0:
            return loglik, grad, fisher
        last = events[n - 1]
        for p in range(npart):
            m_, g_, d_ = nat[p, 0], nat[p, 1], nat[p, 2]
            S = 0.0
            T = 0.0
            ll = 0.0
            s_inv = 0.0
            s_big_s = 0.0
            s_big_t = 0.0
            f00 = f01 = f02 = f11 = f12 = f22 = 0.0
            for i in range(n):
                if i > 0:
                    dt = events[i] - events[i - 1]
                    decay = math.exp(-d_ * dt)
                    T = decay * (T + dt * (S + 1.0))
                    S = decay * (S + 1.0)
                lam = m_ + g_ * S
                ll += math.log(lam)
                if want_grad or want_fisher:
                    inv = 1.0 / lam
                    s_inv += inv
                    s_big_s += S * inv
                    s_big_t += T * inv
                    if want_fisher:
                        v0 = m_ * inv
                        v1 = g_ * S * inv
                        v2 = -g_ * d_ * T * inv
                        f00 += v0 * v0
                        f01 += v0 * v1
                        f02 += v0 * v2
                        f11 += v1 * v1
                        f12 += v1 * v2
                        f22 += v2 * v2
            exc_sum = 0.0
            decayed = 0.0
            for i in range(n):
                de = last - events[i]
                exc_sum += -math.expm1(-d_ * de)
                if want_grad:
                    decayed += de * math.exp(-d_ * de)
            exc = g_ * exc_sum / d_
            base = m_ * (last - left)
            loglik[p] = ll - base - exc
            if want_grad:
                grad[p, 0] = m_ * s_inv - base
                grad[p, 1] = g_ * s_big_s - exc
                grad[p, 2] = -g_ * d_ * s_big_t - g_ * decayed + exc
            if want_fisher:
                fisher[p, 0, 0] = f00
                fisher[p, 0, 1] = f01
                fisher[p, 0, 2] = f02
                fisher[p, 1, 0] = f01
                fisher[p, 1, 1] = f11
                fisher[p, 1, 2] = f12
                fisher[p, 2, 0] = f02
                fisher[p, 2, 1] = f12
                fisher[p, 2, 2] = f22
        return loglik, grad, fisher


def _segment_eval(events, left, nat, want_grad=False, want_fisher=False):
    """Batched segment evaluation for an (n_particles, 3) matrix of natural
    parameters (mu, gamma, delta); returns (loglik, eta_score, fisher)."""
    nat = np.asarray(nat, dtype=np.float64)
    if _HAVE_NUMBA:
        if not nat.flags.c_contiguous:
            nat = np.ascontiguousarray(nat)
        events = np.asarray(events, dtype=np.float64)
        if not events.flags.c_contiguous:
            events = np.ascontiguousarray(events)
        return _segment_eval_jit(events, float(left), nat, want_grad, want_fisher)
    return _segment_eval_numpy(events, left, nat[:, 0], nat[:, 1], nat[:, 2],
                               want_grad, want_fisher)


class HawkesModel(IsotropicGaussianPrior, PredictiveModel):
    """Hawkes predictive model over log-parameters (ln mu, ln gamma, ln delta).

    The prior is ln theta ~ N(prior_mean, prior_var * I), i.e. a log-normal
    prior on the natural parameters.
    """

    dim = 3

    def __init__(self, prior_mean: float = 0.0, prior_var: float = 10.0):
        if prior_var <= 0:
            raise ValueError("prior_var must be positive")
        self.prior_mean = float(prior_mean)
        self.prior_var = float(prior_var)

    # --- likelihood --------------------------------------------------------

    def log_likelihood(self, seg: Segment, theta: ParamVector) -> float:
        ll, _, _ = _segment_eval(seg.values, seg.left_boundary, np.exp(theta)[None, :])
        return float(ll[0])

    def grad_log_likelihood(self, seg: Segment, theta: ParamVector) -> ParamVector:
        _, grad, _ = _segment_eval(seg.values, seg.left_boundary, np.exp(theta)[None, :],
                                   want_grad=True)
        return grad[0]

    def fisher_information(self, seg: Segment, theta: ParamVector) -> np.ndarray:
        _, _, fisher = _segment_eval(seg.values, seg.left_boundary, np.exp(theta)[None, :],
                                     want_fisher=True)
        return fisher[0]

    # --- predictive ---------------------------------------------------------

    def _last_time(self, seg: Segment) -> float:
        return float(seg.values[-1]) if len(seg) else seg.left_boundary

    def log_predictive(self, y: float, seg: Segment, theta: ParamVector) -> float:
        return float(self.log_predictive_batch(y, seg, theta[None, :])[0])

    def sample_predictive(self, seg: Segment, theta: ParamVector, rng: np.random.Generator) -> float:
        mu, gamma, delta = np.exp(theta)
        return sample_next_event(seg.values, self._last_time(seg), mu, gamma, delta, rng)

    # --- batched evaluations -------------------------------------------------

    def log_predictive_batch(self, y: float, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        last = self._last_time(seg)
        if y <= last:
            raise ValueError("next arrival must come after the last segment event")
        with np.errstate(over="ignore", invalid="ignore"):
            nat = np.exp(thetas)
            mu, gamma, delta = nat[:, 0], nat[:, 1], nat[:, 2]
            if len(seg):
                dl = last - seg.values  # >= 0
                decay_last = np.exp(-delta[:, None] * dl[None, :])
                extra = np.sum(decay_last * np.exp(-delta[:, None] * (y - last)), axis=1)
                lam = mu + gamma * extra
                exc = gamma * np.sum(decay_last, axis=1) * (-np.expm1(-delta * (y - last))) / delta
            else:
                lam = mu
                exc = 0.0
            with np.errstate(divide="ignore"):
                out = np.log(lam) - mu * (y - last) - exc
        return out

    def log_posterior_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        d = thetas - self.prior_mean
        prior = -0.5 * np.sum(d * d, axis=1) / self.prior_var - 0.5 * self.dim * math.log(
            2.0 * math.pi * self.prior_var
        )
        with np.errstate(over="ignore"):
            nat = np.exp(thetas)
        ll, _, _ = _segment_eval(seg.values, seg.left_boundary, nat)
        return prior + ll

    def grad_log_posterior_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            nat = np.exp(thetas)
        _, grad, _ = _segment_eval(seg.values, seg.left_boundary, nat, want_grad=True)
        return grad - (thetas - self.prior_mean) / self.prior_var

    def posterior_hessian_batch(self, seg: Segment, thetas: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            nat = np.exp(thetas)
        _, _, fisher = _segment_eval(seg.values, seg.left_boundary, nat, want_fisher=True)
        return fisher + np.eye(self.dim) / self.prior_var

    def grad_and_hessian_batch(self, seg: Segment, thetas: np.ndarray):
        with np.errstate(over="ignore"):
            nat = np.exp(thetas)
        _, grad, fisher = _segment_eval(seg.values, seg.left_boundary, nat,
                                        want_grad=True, want_fisher=True)
        grad = grad - (thetas - self.prior_mean) / self.prior_var
        hess = fisher + np.eye(self.dim) / self.prior_var
        return grad, hess

"""Independent oracles used across the test suite.

Everything here deliberately avoids the library's own code paths: the
exhaustive changepoint posterior enumerates segmentations against a
direct multivariate-normal marginal likelihood, the LSTM reference is a
scalar pure-Python recurrence, and gradients come from central finite
differences.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal


def central_diff_grad(f, x, h: float = 1e-5):
    """Central finite differences with per-coordinate scaled steps."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for j in range(len(x)):
        hj = h * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = hj
        grad[j] = (f(x + e) - f(x - e)) / (2.0 * hj)
    return grad


def central_diff_hessian(f, x, h: float = 1e-4):
    x = np.asarray(x, dtype=float)
    d = len(x)
    H = np.zeros((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        for j in range(i, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h * h)
            H[j, i] = H[i, j]
    return H


def gaussian_segment_marginal(values, prior_mean, prior_var, obs_var) -> float:
    """log p(values) for the conjugate Gaussian-mean model, evaluated as one
    multivariate normal density (no sequential factorization)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return 0.0
    cov = obs_var * np.eye(n) + prior_var * np.ones((n, n))
    return float(multivariate_normal.logpdf(values, mean=np.full(n, prior_mean), cov=cov))


def exhaustive_changepoint_posterior(values, hazard, prior_mean, prior_var, obs_var):
    """Changepoint posterior p(tau_{m+1} | y_{1:m}) by brute-force
    enumeration of every segmentation of y_{1:m}.

    A segmentation places changepoints at a subset of times 2..m; its prior
    weight multiplies one hazard factor per step, and its likelihood is the
    product of per-segment marginals.  The transition after y_m adds the
    final hazard factor that splits mass between "continue" and "new
    changepoint at m+1".  Returns {tau: probability}.
    """
    values = np.asarray(values, dtype=float)
    m = len(values)
    p = 1.0 / hazard
    log_p = -math.inf if p == 0 else math.log(p)
    log_1mp = math.log1p(-p)
    acc: dict[int, list[float]] = {}
    for bits in itertools.product((0, 1), repeat=m - 1):
        starts = [1] + [t for t, b in zip(range(2, m + 1), bits) if b]
        log_w = sum(log_p if b else log_1mp for b in bits)
        bounds = starts + [m + 1]
        for a, b in zip(bounds[:-1], bounds[1:]):
            log_w += gaussian_segment_marginal(values[a - 1 : b - 1], prior_mean, prior_var, obs_var)
        acc.setdefault(starts[-1], []).append(log_w + log_1mp)
        acc.setdefault(m + 1, []).append(log_w + log_p)
    log_joint = {tau: logsumexp(v) for tau, v in acc.items()}
    total = logsumexp(list(log_joint.values()))
    return {tau: math.exp(lj - total) for tau, lj in log_joint.items()}


def reference_lstm_output(values, theta) -> float:
    """Scalar pure-Python LSTM forward pass over the fixed 64-entry layout;
    written independently of the library's vectorized recurrence."""

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    def gate_pre(base, x, h):
        out = []
        for r in range(3):
            z = theta[base + r] * x
            for j in range(3):
                z += theta[base + 3 + 3 * r + j] * h[j]
            z += theta[base + 12 + r]
            out.append(z)
        return out

    h = [0.0, 0.0, 0.0]
    c = [0.0, 0.0, 0.0]
    for x in values:
        zi = gate_pre(0, x, h)
        zf = gate_pre(15, x, h)
        zg = gate_pre(30, x, h)
        zo = gate_pre(45, x, h)
        i = [sig(z) for z in zi]
        f = [sig(z) for z in zf]
        g = [math.tanh(z) for z in zg]
        o = [sig(z) for z in zo]
        c = [f[r] * c[r] + i[r] * g[r] for r in range(3)]
        h = [o[r] * math.tanh(c[r]) for r in range(3)]
    return sum(theta[60 + r] * h[r] for r in range(3)) + theta[63]


def quadrature_cdf(log_density, lower: float, grid: np.ndarray):
    """Cumulative integral of exp(log_density) from ``lower`` over a grid,
    via piecewise adaptive quadrature; returns an interpolator for F(t)."""
    from scipy.integrate import quad
    from scipy.interpolate import PchipInterpolator

    nodes = np.concatenate([[lower], grid])
    masses = np.zeros(len(nodes))
    for i in range(1, len(nodes)):
        val, _ = quad(lambda t: math.exp(log_density(t)), nodes[i - 1], nodes[i], limit=200)
        masses[i] = masses[i - 1] + val
    return PchipInterpolator(nodes, np.clip(masses, 0.0, 1.0))

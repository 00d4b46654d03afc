"""Bayesian LSTM predictive model with hand-written backpropagation.

A single-layer LSTM with hidden size 3, scalar input and a scalar affine
readout; the flat parameter vector has exactly 64 entries.  The network
maps a segment prefix to a one-step-ahead mean; observations are the mean
plus Gaussian noise of fixed scale ``sigma``.

Parameter layout (fixed):
    for each gate in (input, forget, cell, output):
        W_x (3,), W_h (3, 3) row-major, b (3,)      -> 4 x 15 = 60 entries
    readout weight (3,), readout bias (1,)           -> 4 entries
"""

from __future__ import annotations

import numpy as np

from .base import IsotropicGaussianPrior, ParamVector, PredictiveModel, Segment

HIDDEN = 3
N_GATES = 4
GATE_BLOCK = HIDDEN + HIDDEN * HIDDEN + HIDDEN  # W_x, W_h, b per gate
DIM = N_GATES * GATE_BLOCK + HIDDEN + 1  # 64

_WOUT = slice(N_GATES * GATE_BLOCK, N_GATES * GATE_BLOCK + HIDDEN)
_BOUT = N_GATES * GATE_BLOCK + HIDDEN


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _unpack(theta: np.ndarray):
    """Views of the flat vector: (W_x, W_h, b) per gate, readout (w, b)."""
    gates = []
    for q in range(N_GATES):
        base = q * GATE_BLOCK
        w_x = theta[base : base + HIDDEN]
        w_h = theta[base + HIDDEN : base + HIDDEN + HIDDEN * HIDDEN].reshape(HIDDEN, HIDDEN)
        b = theta[base + HIDDEN + HIDDEN * HIDDEN : base + GATE_BLOCK]
        gates.append((w_x, w_h, b))
    return gates, theta[_WOUT], theta[_BOUT]


def _forward(values: np.ndarray, theta: np.ndarray):
    """Run the recurrence over a segment, keeping every activation.

    Returns (outputs, cache): outputs[i] is the readout after i steps
    (length ``len(values) + 1``; outputs[0] is the readout bias applied to
    the zero initial state).
    """
    (gi, gf, gc, go), w_out, b_out = _unpack(theta)
    n = len(values)
    H = np.zeros((n + 1, HIDDEN))
    C = np.zeros((n + 1, HIDDEN))
    I = np.zeros((n, HIDDEN))
    F = np.zeros((n, HIDDEN))
    G = np.zeros((n, HIDDEN))
    O = np.zeros((n, HIDDEN))
    for t in range(1, n + 1):
        x = values[t - 1]
        h_prev = H[t - 1]
        I[t - 1] = _sigmoid(gi[0] * x + gi[1] @ h_prev + gi[2])
        F[t - 1] = _sigmoid(gf[0] * x + gf[1] @ h_prev + gf[2])
        G[t - 1] = np.tanh(gc[0] * x + gc[1] @ h_prev + gc[2])
        O[t - 1] = _sigmoid(go[0] * x + go[1] @ h_prev + go[2])
        C[t] = F[t - 1] * C[t - 1] + I[t - 1] * G[t - 1]
        H[t] = O[t - 1] * np.tanh(C[t])
    outputs = H @ w_out + b_out
    cache = (values, H, C, I, F, G, O)
    return outputs, cache


def _prefix_jacobians(theta: np.ndarray, cache, n_prefixes: int) -> np.ndarray:
    """Jacobians d(output after i steps)/d(theta) for i = 0..n_prefixes-1.

    All prefixes share one forward pass; the reverse sweep carries one
    adjoint row per prefix, each seeded at its own final step, so a single
    backward loop produces the whole (n_prefixes, 64) matrix.
    """
    values, H, C, I, F, G, O = cache
    (gi, gf, gc, go), w_out, _ = _unpack(theta)
    P = n_prefixes
    J = np.zeros((P, DIM))
    J[:, _WOUT] = H[:P]
    J[:, _BOUT] = 1.0
    if P <= 1:
        return J
    DH = np.zeros((P, HIDDEN))
    DC = np.zeros((P, HIDDEN))
    w_h_all = (gi[1], gf[1], gc[1], go[1])
    for t in range(P - 1, 0, -1):
        DH[t] += w_out  # prefix i = t starts its backward pass here
        i_t, f_t, g_t, o_t = I[t - 1], F[t - 1], G[t - 1], O[t - 1]
        tanh_c = np.tanh(C[t])
        d_o = DH * tanh_c
        dc = DC + DH * o_t * (1.0 - tanh_c * tanh_c)
        d_i = dc * g_t
        d_f = dc * C[t - 1]
        d_g = dc * i_t
        dpre = (
            d_i * i_t * (1.0 - i_t),
            d_f * f_t * (1.0 - f_t),
            d_g * (1.0 - g_t * g_t),
            d_o * o_t * (1.0 - o_t),
        )
        x = values[t - 1]
        h_prev = H[t - 1]
        for q in range(N_GATES):
            base = q * GATE_BLOCK
            J[:, base : base + HIDDEN] += dpre[q] * x
            J[:, base + HIDDEN : base + HIDDEN + HIDDEN * HIDDEN] += (
                dpre[q][:, :, None] * h_prev[None, None, :]
            ).reshape(P, HIDDEN * HIDDEN)
            J[:, base + HIDDEN + HIDDEN * HIDDEN : base + GATE_BLOCK] += dpre[q]
        DH = sum(dpre[q] @ w_h_all[q] for q in range(N_GATES))
        DC = dc * f_t
    return J


def forward_one(values: np.ndarray, theta: np.ndarray) -> float:
    """Readout after consuming the whole segment (the one-step-ahead mean)."""
    outputs, _ = _forward(np.asarray(values, dtype=float), theta)
    return float(outputs[-1])


def forward_many(values: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """All prefix readouts [F_empty, F_1, ..., F_n] in one sweep."""
    outputs, _ = _forward(np.asarray(values, dtype=float), theta)
    return outputs


def sinusoid_data(n: int = 51, noise_sd: float = 0.15, rng: np.random.Generator | None = None):
    """Noisy sinusoid y_j = sin(j) + noise, j = 0..n-1."""
    if rng is None:
        rng = np.random.default_rng()
    j = np.arange(n)
    return np.sin(j) + noise_sd * rng.standard_normal(n)


class BLSTMModel(IsotropicGaussianPrior, PredictiveModel):
    """LSTM one-step-ahead regression with N(0, sigma^2) observation noise."""

    dim = DIM

    def __init__(self, sigma: float = 0.1, prior_mean: float = 0.0, prior_var: float = 1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if prior_var <= 0:
            raise ValueError("prior_var must be positive")
        self.sigma = float(sigma)
        self.prior_mean = float(prior_mean)
        self.prior_var = float(prior_var)

    # --- likelihood -------------------------------------------------------

    def _residuals(self, seg: Segment, theta: ParamVector):
        """Prefix predictions minus their next observation: F_i - y_{i+1}."""
        outputs, cache = _forward(seg.values, theta)
        return outputs[: len(seg)] - seg.values, cache

    def log_likelihood(self, seg: Segment, theta: ParamVector) -> float:
        n = len(seg)
        if n == 0:
            return 0.0
        res, _ = self._residuals(seg, theta)
        var = self.sigma**2
        return float(-0.5 * np.sum(res * res) / var - 0.5 * n * np.log(2.0 * np.pi * var))

    def grad_log_likelihood(self, seg: Segment, theta: ParamVector) -> ParamVector:
        n = len(seg)
        if n == 0:
            return np.zeros(self.dim)
        res, cache = self._residuals(seg, theta)
        J = _prefix_jacobians(theta, cache, n)
        return -(J.T @ res) / self.sigma**2

    def fisher_information(self, seg: Segment, theta: ParamVector) -> np.ndarray:
        n = len(seg)
        if n == 0:
            return np.zeros((self.dim, self.dim))
        _, cache = _forward(seg.values, theta)
        J = _prefix_jacobians(theta, cache, n)
        return (J.T @ J) / self.sigma**2

    def grad_and_fisher(self, seg: Segment, theta: ParamVector):
        """Score and Fisher information from one shared set of prefix Jacobians."""
        n = len(seg)
        if n == 0:
            return np.zeros(self.dim), np.zeros((self.dim, self.dim))
        res, cache = self._residuals(seg, theta)
        J = _prefix_jacobians(theta, cache, n)
        var = self.sigma**2
        return -(J.T @ res) / var, (J.T @ J) / var

    # --- predictive -----------------------------------------------------------

    def log_predictive(self, y: float, seg: Segment, theta: ParamVector) -> float:
        mean = forward_one(seg.values, theta)
        var = self.sigma**2
        return float(-0.5 * (y - mean) ** 2 / var - 0.5 * np.log(2.0 * np.pi * var))

    def sample_predictive(self, seg: Segment, theta: ParamVector, rng: np.random.Generator) -> float:
        return forward_one(seg.values, theta) + self.sigma * rng.standard_normal()

    # --- batched helpers ---------------------------------------------------------

    def grad_and_hessian_batch(self, seg: Segment, thetas: np.ndarray):
        grads = np.empty_like(thetas)
        hessians = np.empty((len(thetas), self.dim, self.dim))
        prior_prec = np.eye(self.dim) / self.prior_var
        for k, theta in enumerate(thetas):
            g, fisher = self.grad_and_fisher(seg, theta)
            grads[k] = g - (theta - self.prior_mean) / self.prior_var
            hessians[k] = prior_prec + fisher
        return grads, hessians

"""Stein variational particle transport: Newton (SVN) and first-order (SVGD).

Both samplers move a set of particles toward a target density along
directions in a Gaussian-kernel RKHS.  The empirical update for particle k
combines an attraction term (kernel-weighted score average) with a
repulsion term (kernel gradients); SVN additionally preconditions each
particle's direction with a kernel-weighted curvature average, solved as
an independent d x d system per particle (block-diagonal coupling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEDIAN_SCALE_FLOOR = 1e-8
_DAMPING_DOUBLINGS = 8


class HessianSolveError(RuntimeError):
    """A per-particle Newton system stayed singular after damping."""


@dataclass
class Ensemble:
    """A particle approximation of one segment posterior.

    ``log_weights`` is None for an equally weighted ensemble, otherwise it
    holds normalized log importance weights.  ``seed`` records the RNG
    stream that created the particles.
    """

    particles: np.ndarray
    log_weights: np.ndarray | None = None
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        if self.log_weights is None:
            n = len(self.particles)
            return np.full(n, 1.0 / n)
        return np.exp(self.log_weights)

    def mean(self) -> np.ndarray:
        return self.weights() @ self.particles


@dataclass(frozen=True)
class KernelSpec:
    """Anisotropic Gaussian kernel exp(-(x-y)' M (x-y) / (2 scale))."""

    metric: np.ndarray
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("kernel scale must be positive")
        m = np.asarray(self.metric, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.allclose(m, m.T):
            raise ValueError("kernel metric must be a symmetric matrix")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise ValueError("kernel metric must be positive definite") from exc


def kernel_eval(x: np.ndarray, y: np.ndarray, spec: KernelSpec):
    """Kernel value and its gradient with respect to the first argument."""
    diff = x - y
    md = spec.metric @ diff
    value = float(np.exp(-0.5 * diff @ md / spec.scale))
    return value, -value * md / spec.scale


def _kernel_statistics(particles: np.ndarray, metric: np.ndarray, scale: float):
    """Kernel matrix K[j, k] = k(theta_j, theta_k) and the metric-mapped
    particles P = particles @ metric, from which all kernel-gradient sums
    follow without materializing any (n, n, d) tensor."""
    P = particles @ metric
    q = np.einsum("nd,nd->n", particles, P)
    sq = q[:, None] + q[None, :] - 2.0 * (particles @ P.T)
    np.maximum(sq, 0.0, out=sq)
    K = np.exp(-0.5 * sq / scale)
    return K, P


def _repulsion_sum(K: np.ndarray, P: np.ndarray, scale: float) -> np.ndarray:
    """sum_j grad_{theta_j} k(theta_j, theta_k), for every k."""
    return -(K.T @ P - K.sum(axis=0)[:, None] * P) / scale


def svgd_direction(particles: np.ndarray, grads: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """First-order transport direction per particle (attraction + repulsion)."""
    K, P = _kernel_statistics(particles, spec.metric, spec.scale)
    return (K.T @ grads + _repulsion_sum(K, P, spec.scale)) / len(particles)


def _svn_systems(particles, grads, hessians, metric, scale):
    n, d = particles.shape
    K, P = _kernel_statistics(particles, metric, scale)
    rhs = (K.T @ grads + _repulsion_sum(K, P, scale)) / n  # = -functional gradient
    W = K * K
    H = (W.T @ hessians.reshape(n, d * d)).reshape(n, d, d)
    # sum_j W_jk (P_j - P_k)(P_j - P_k)^T, expanded so every term is a GEMM
    PP = (P[:, :, None] * P[:, None, :]).reshape(n, d * d)
    A = (W.T @ PP).reshape(n, d, d)
    b = W.T @ P
    s2 = W.sum(axis=0)
    cross = P[:, :, None] * b[:, None, :]
    self_term = s2[:, None, None] * (P[:, :, None] * P[:, None, :])
    H += (A - cross - cross.transpose(0, 2, 1) + self_term) / (scale * scale)
    H /= n
    H = 0.5 * (H + H.transpose(0, 2, 1))
    return H, rhs


def _solve_damped(H: np.ndarray, rhs: np.ndarray):
    """Solve each particle's system, escalating Levenberg damping on failure.

    Returns (solutions, ok) where ok flags particles whose system could be
    solved; rows with ok == False are left zero.
    """
    n, d = rhs.shape
    out = np.zeros_like(rhs)
    ok = np.ones(n, dtype=bool)
    try:
        candidate = np.linalg.solve(H, rhs[..., None])[..., 0]
        if np.all(np.isfinite(candidate)):
            return candidate, ok
    except np.linalg.LinAlgError:
        pass
    for k in range(n):
        lam = 1e-6 * np.trace(H[k]) / d
        if lam <= 0 or not np.isfinite(lam):
            lam = 1e-6
        solved = False
        damp = 0.0
        for _ in range(_DAMPING_DOUBLINGS + 1):
            try:
                sol = np.linalg.solve(H[k] + damp * np.eye(d), rhs[k])
                if np.all(np.isfinite(sol)):
                    out[k] = sol
                    solved = True
                    break
            except np.linalg.LinAlgError:
                pass
            damp = lam if damp == 0.0 else 2.0 * damp
        ok[k] = solved
    return out, ok


def svn_direction(
    particles: np.ndarray, grads: np.ndarray, hessians: np.ndarray, spec: KernelSpec
) -> np.ndarray:
    """Newton transport direction per particle.

    Raises HessianSolveError if any particle's system stays singular after
    the damping schedule is exhausted.
    """
    H, rhs = _svn_systems(particles, grads, hessians, spec.metric, spec.scale)
    directions, ok = _solve_damped(H, rhs)
    if not np.all(ok):
        raise HessianSolveError(f"unsolvable Newton systems for particles {np.where(~ok)[0]}")
    return directions


def median_heuristic_scale(particles: np.ndarray, floor: float = MEDIAN_SCALE_FLOOR) -> float:
    """Median of pairwise squared distances, floored away from zero."""
    n = len(particles)
    if n < 2:
        return floor
    diffs = particles[:, None, :] - particles[None, :, :]
    sq = np.einsum("jkd,jkd->jk", diffs, diffs)
    med = float(np.median(sq[np.triu_indices(n, 1)]))
    return max(med, floor)


def _capped(move: np.ndarray, max_move: float) -> np.ndarray:
    norms = np.linalg.norm(move, axis=1)
    factor = np.minimum(1.0, max_move / np.maximum(norms, 1e-300))
    return move * factor[:, None]


def svn_run(
    particles: np.ndarray,
    grad_and_hess_fn,
    iterations: int,
    step: float = 1.0,
    max_move: float = 10.0,
) -> np.ndarray:
    """Transport an ensemble toward a target for a fixed number of iterations.

    ``grad_and_hess_fn(particles)`` returns per-particle score vectors and
    positive-definite curvature approximations of -d^2 log target; when the
    curvature entry is None the update falls back to plain SVGD with an
    identity-metric, median-bandwidth kernel.  The kernel is refreshed from
    the current particles every iteration.  Particles whose Newton system
    cannot be solved after damping take the SVGD direction that iteration.

    Per-iteration displacements are capped at ``max_move`` (L2): the
    Gauss-Newton curvature can badly underestimate the true curvature far
    from the posterior mass, and an uncapped step would overflow the model.
    Near convergence moves are tiny, so the cap never binds there.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not 0.0 < step <= 1.0:
        raise ValueError("step must lie in (0, 1]")
    x = np.array(particles, dtype=float)
    n, d = x.shape
    eye = np.eye(d)
    for _ in range(iterations):
        grads, hessians = grad_and_hess_fn(x)
        if not np.all(np.isfinite(grads)):
            raise HessianSolveError("non-finite gradients during transport")
        if hessians is None:
            scale = median_heuristic_scale(x)
            K, P = _kernel_statistics(x, eye, scale)
            direction = (K.T @ grads + _repulsion_sum(K, P, scale)) / n
            x = x + _capped(step * direction, max_move)
            continue
        if not np.all(np.isfinite(hessians)):
            raise HessianSolveError("non-finite curvature during transport")
        metric = hessians.mean(axis=0)
        metric = 0.5 * (metric + metric.T)
        H, rhs = _svn_systems(x, grads, hessians, metric, float(d))
        directions, ok = _solve_damped(H, rhs)
        if not np.all(ok):
            directions[~ok] = rhs[~ok]  # rhs is exactly the SVGD direction
        x = x + _capped(step * directions, max_move)
    return x

"""Exact Gaussian process regression with Cholesky inference.

The model is a zero-mean GP over centered targets: fitting subtracts the
training mean and prediction adds it back. Training maximizes the log
marginal likelihood of the centered targets over the three log
hyperparameters with a multi-start quasi-Newton ascent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from .errors import SingularMatrixError, TrainingError
from .frame import Prediction
from .kernel import KernelHyperparams, kernel_matrix, matern32_grad

_LOG_2PI = math.log(2.0 * math.pi)
_JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6)
_LOG_BOUND = 20.0
_FAILED_OBJECTIVE = 1e25


def cholesky_psd(A):
    """Lower Cholesky factor with an escalating jitter ladder.

    Tries jitter 0, then 1e-10, 1e-8 and 1e-6 times the mean diagonal,
    added to the diagonal, until the factorization succeeds.

    Returns
    -------
    (L, jitter) : lower-triangular factor and the jitter that was used.

    Raises
    ------
    SingularMatrixError
        If the factorization fails at every rung.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    scale = float(np.mean(np.diag(A)))
    if not math.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    n = A.shape[0]
    for step in _JITTER_STEPS:
        jitter = step * scale
        target = A if jitter == 0.0 else A + jitter * np.eye(n)
        try:
            L = cholesky(target, lower=True)
        except np.linalg.LinAlgError:
            continue
        return L, jitter
    raise SingularMatrixError(
        f"matrix of shape {A.shape} is not positive definite even with jitter "
        f"{_JITTER_STEPS[-1] * scale:g}"
    )


@dataclass(frozen=True)
class GprModel:
    """A fitted GP: training inputs, hyperparameters and cached solves."""

    train_X: np.ndarray
    train_y: np.ndarray
    y_offset: float
    hyperparams: KernelHyperparams
    chol_factor: np.ndarray
    alpha_vec: np.ndarray
    jitter: float


@dataclass(frozen=True)
class LmlReport:
    """Log marginal likelihood value and its gradient in log-parameter space."""

    value: float
    grad: np.ndarray


def _as_training_set(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("training inputs must form a 2-D matrix")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(
            f"got {X.shape[0]} input rows but {y.shape[0]} target values"
        )
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("training data contain non-finite values")
    return X, y


def fit(X, y, hp: KernelHyperparams) -> GprModel:
    """Factorize the training covariance and cache the solve against y.

    Targets are centered on their mean; predictions restore the offset.
    """
    X, y = _as_training_set(X, y)
    n = X.shape[0]
    if n < 1:
        raise ValueError("fit needs at least one training point")
    K = kernel_matrix(X, X, hp)
    K_noisy = K + hp.noise_var * np.eye(n)
    L, jitter = cholesky_psd(K_noisy)
    offset = float(np.mean(y))
    alpha = cho_solve((L, True), y - offset)
    return GprModel(X, y.copy(), offset, hp, L, alpha, jitter)


def predict(model: GprModel, x_star) -> Prediction:
    """Posterior mean and variance at a single query point.

    The returned variance includes the observation-noise term, so even an
    exactly interpolated point keeps variance of about noise_var.
    """
    x = np.asarray(x_star, dtype=float).ravel()
    if x.shape[0] != model.train_X.shape[1]:
        raise ValueError(
            f"query has {x.shape[0]} features, model was fit with "
            f"{model.train_X.shape[1]}"
        )
    hp = model.hyperparams
    k = kernel_matrix(model.train_X, x[None, :], hp).ravel()
    mean = float(k @ model.alpha_vec) + model.y_offset
    v = solve_triangular(model.chol_factor, k, lower=True)
    var = hp.signal_var - float(v @ v) + hp.noise_var
    return Prediction(mean=mean, variance=max(var, 0.0))


def log_marginal_likelihood(X, y, hp: KernelHyperparams) -> LmlReport:
    """Log marginal likelihood of y under a zero-mean GP, with gradient.

    The gradient is taken with respect to the log parameters in the order
    (log_lengthscale, log_signal_var, log_noise_var), via the usual trace
    identity against each parameter's kernel-matrix derivative.
    """
    X, y = _as_training_set(X, y)
    n = X.shape[0]
    if n < 2:
        raise ValueError("log marginal likelihood needs at least two points")
    noise = hp.noise_var
    K = kernel_matrix(X, X, hp)
    L, _ = cholesky_psd(K + noise * np.eye(n))
    alpha = cho_solve((L, True), y)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.log(np.diag(L)).sum())
        - 0.5 * n * _LOG_2PI
    )
    K_inv = cho_solve((L, True), np.eye(n))
    outer = np.outer(alpha, alpha) - K_inv
    d_log_ell, d_log_signal = matern32_grad(X, hp)
    grad = 0.5 * np.array(
        [
            float((outer * d_log_ell).sum()),
            float((outer * d_log_signal).sum()),
            noise * float(np.trace(outer)),
        ]
    )
    return LmlReport(value, grad)


def _initial_points(X, y_centered, restarts, seed, warm_start):
    """Standard multi-start grid, optionally preceded by a warm start."""
    var_y = max(float(np.var(y_centered)), 1e-10)
    if X.shape[0] > 1:
        dists = pdist(X)
        median_dist = float(np.median(dists)) if dists.size else 0.0
    else:
        median_dist = 0.0
    if not math.isfinite(median_dist) or median_dist <= 0.0:
        median_dist = 1.0
    base = np.array([math.log(median_dist), math.log(var_y), math.log(0.1 * var_y)])
    starts = [base, base + np.array([1.0, 0.0, 0.0]), base + np.array([-1.0, 0.0, 0.0])]
    if restarts < 3:
        starts = starts[:restarts]
    elif restarts > 3:
        rng = np.random.default_rng(seed)
        for _ in range(restarts - 3):
            starts.append(base + rng.normal(0.0, 1.0, size=3))
    if warm_start is not None:
        starts.insert(0, warm_start.as_array())
    return [np.clip(s, -_LOG_BOUND, _LOG_BOUND) for s in starts]


def train(
    X,
    y,
    restarts: int = 3,
    *,
    seed: int = 0,
    warm_start: KernelHyperparams | None = None,
    max_iter: int = 200,
    grad_tol: float = 1e-6,
) -> KernelHyperparams:
    """Maximize the log marginal likelihood over the log hyperparameters.

    Runs a bounded quasi-Newton ascent (L-BFGS-B on the negated objective,
    analytic gradients) from every start point and keeps the best result.
    Start points: the warm start if given, then length-scale at the log
    median pairwise distance and one unit above and below it (capped by
    ``restarts``), signal variance at var(y) and noise at a tenth of it.
    Restarts beyond three add seeded random perturbations, so the result
    is deterministic for a given seed.

    The returned optimum is never worse than any start point.
    """
    X, y = _as_training_set(X, y)
    if X.shape[0] < 2:
        raise ValueError("training needs at least two points")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    y_centered = y - float(np.mean(y))
    starts = _initial_points(X, y_centered, restarts, seed, warm_start)
    bounds = [(-_LOG_BOUND, _LOG_BOUND)] * 3

    def objective(theta):
        try:
            report = log_marginal_likelihood(
                X, y_centered, KernelHyperparams.from_array(theta)
            )
        except SingularMatrixError:
            return _FAILED_OBJECTIVE, np.zeros(3)
        if not math.isfinite(report.value) or not np.all(np.isfinite(report.grad)):
            return _FAILED_OBJECTIVE, np.zeros(3)
        return -report.value, -report.grad

    best_value = math.inf
    best_theta = None
    for theta0 in starts:
        f0, _ = objective(theta0)
        if f0 < best_value:
            best_value, best_theta = f0, theta0
        result = minimize(
            objective,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter, "gtol": grad_tol, "ftol": 1e-12},
        )
        if math.isfinite(result.fun) and result.fun < best_value:
            best_value = float(result.fun)
            best_theta = np.asarray(result.x, dtype=float)
    if best_theta is None or best_value >= _FAILED_OBJECTIVE:
        raise TrainingError(
            "no optimizer start produced a finite log marginal likelihood"
        )
    return KernelHyperparams.from_array(best_theta)

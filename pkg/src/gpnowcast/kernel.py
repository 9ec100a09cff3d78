"""Matern covariance with smoothness 3/2 over d-dimensional inputs.

One isotropic length-scale is shared by all input dimensions and distances
are plain Euclidean. The signal variance scales the whole kernel; the
observation-noise variance is carried alongside so the three numbers travel
together through training code, even though the noise never enters the
kernel value itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class KernelHyperparams:
    """Length-scale, signal variance and noise variance, stored as logs.

    Log storage makes every quantity structurally positive, so optimizers
    can treat hyperparameters as an unconstrained 3-vector in the order
    (log_lengthscale, log_signal_var, log_noise_var).
    """

    log_lengthscale: float
    log_signal_var: float
    log_noise_var: float

    def __post_init__(self):
        for name in ("log_lengthscale", "log_signal_var", "log_noise_var"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")

    @classmethod
    def from_values(
        cls, lengthscale: float, signal_var: float, noise_var: float
    ) -> "KernelHyperparams":
        """Build from raw (positive) parameter values."""
        if min(lengthscale, signal_var, noise_var) <= 0.0:
            raise ValueError("lengthscale, signal_var and noise_var must be positive")
        return cls(math.log(lengthscale), math.log(signal_var), math.log(noise_var))

    @classmethod
    def from_array(cls, theta) -> "KernelHyperparams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (3,):
            raise ValueError(f"expected 3 log-parameters, got shape {theta.shape}")
        return cls(float(theta[0]), float(theta[1]), float(theta[2]))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.log_lengthscale, self.log_signal_var, self.log_noise_var]
        )

    @property
    def lengthscale(self) -> float:
        return math.exp(self.log_lengthscale)

    @property
    def signal_var(self) -> float:
        return math.exp(self.log_signal_var)

    @property
    def noise_var(self) -> float:
        return math.exp(self.log_noise_var)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"inputs must form a 2-D matrix, got ndim={X.ndim}")
    return X


def matern32(x, x_prime, hp: KernelHyperparams) -> float:
    """Kernel value between two points.

    k(x, x') = signal_var * (1 + sqrt(3) r / ell) * exp(-sqrt(3) r / ell)
    with r the Euclidean distance between x and x'.
    """
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(x_prime, dtype=float).ravel()
    if x.shape != xp.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {xp.shape[0]}")
    r = float(np.linalg.norm(x - xp))
    s = _SQRT3 * r / hp.lengthscale
    return hp.signal_var * (1.0 + s) * math.exp(-s)


def kernel_matrix(X, X_prime, hp: KernelHyperparams) -> np.ndarray:
    """Cross-covariance matrix between two point sets.

    Parameters
    ----------
    X : array-like, shape (n, d)
    X_prime : array-like, shape (m, d)
    hp : KernelHyperparams

    Returns
    -------
    ndarray, shape (n, m)
    """
    A = _as_matrix(X)
    B = _as_matrix(X_prime)
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"dimension mismatch: {A.shape[1]}-d inputs vs {B.shape[1]}-d inputs"
        )
    s = cdist(A, B) * (_SQRT3 / hp.lengthscale)
    return hp.signal_var * (1.0 + s) * np.exp(-s)


def matern32_grad(X, hp: KernelHyperparams):
    """Analytic kernel-matrix gradients on a training set.

    Returns the pair (dK/d log_lengthscale, dK/d log_signal_var), each of
    shape (n, n). In closed form, with s = sqrt(3) r / ell:

        dK/d log ell        = signal_var * s^2 * exp(-s)
        dK/d log signal_var = K
    """
    A = _as_matrix(X)
    s = cdist(A, A) * (_SQRT3 / hp.lengthscale)
    decay = np.exp(-s)
    d_log_ell = hp.signal_var * (s * s) * decay
    d_log_signal = hp.signal_var * (1.0 + s) * decay
    return d_log_ell, d_log_signal

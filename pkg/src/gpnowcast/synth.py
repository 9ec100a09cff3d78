"""Synthetic worlds and reference predictors for desk-scale verification.

The generator builds frames whose ground truth is known by construction:
covariates follow per-feature AR(1) walks and the target mixes its own
lagged value with a link function of the covariates. ``oracle_predict``
re-evaluates the GP posterior by explicit matrix inversion; it shares no
code path with the Cholesky implementation and exists purely as a check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError
from .frame import Prediction, TimeSeriesFrame
from .gpr import cholesky_psd
from .kernel import KernelHyperparams, kernel_matrix

_ORACLE_MAX_POINTS = 200
_LINKS = ("affine", "nonlinear")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic world.

    length, n_features
        Frame size.
    link
        "affine" maps the covariate projection straight through;
        "nonlinear" runs it through a smooth squashing mix.
    phi
        Target autocorrelation: y_t = phi * y_{t-1} + (1 - phi) * level_t + noise.
    noise_std
        Standard deviation of the target innovation.
    covariate_rho
        AR(1) coefficient of each covariate walk (0 gives white covariates).
    level, amplitude
        Base level of the target and the swing the link contributes.
    n_noise_features
        Trailing covariate columns excluded from the link; they carry no
        signal about the target.
    link_drift
        Scale of a slow random walk on the link weights, for worlds where
        the covariate-target relation is not stationary.
    """

    length: int
    n_features: int = 3
    link: str = "affine"
    phi: float = 0.8
    noise_std: float = 1.0
    seed: int = 0
    covariate_rho: float = 0.9
    level: float = 85.0
    amplitude: float = 5.0
    n_noise_features: int = 0
    link_drift: float = 0.0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.link not in _LINKS:
            raise ValueError(f"link must be one of {_LINKS}, got {self.link!r}")
        if not 0.0 <= self.phi < 1.0:
            raise ValueError("phi must lie in [0, 1)")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be >= 0")
        if not 0.0 <= self.covariate_rho < 1.0:
            raise ValueError("covariate_rho must lie in [0, 1)")
        if not 0 <= self.n_noise_features < self.n_features:
            raise ValueError(
                "n_noise_features must leave at least one informative feature"
            )
        if self.link_drift < 0.0:
            raise ValueError("link_drift must be >= 0")
        for name in ("level", "amplitude"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def generate(spec: SynthSpec) -> TimeSeriesFrame:
    """Sample one world. Identical specs (same seed) give identical frames."""
    rng = np.random.default_rng(spec.seed)
    T, d = spec.length, spec.n_features
    rho = spec.covariate_rho
    X = np.empty((T, d))
    X[0] = rng.standard_normal(d)
    innovation = math.sqrt(1.0 - rho * rho)
    for t in range(1, T):
        X[t] = rho * X[t - 1] + innovation * rng.standard_normal(d)

    d_info = d - spec.n_noise_features
    beta = rng.standard_normal(d_info)
    norm = float(np.linalg.norm(beta))
    beta = beta / norm if norm > 0 else np.full(d_info, 1.0 / math.sqrt(d_info))

    projection = np.empty(T)
    for t in range(T):
        if spec.link_drift > 0.0 and t > 0:
            beta = beta + spec.link_drift * rng.standard_normal(d_info)
            norm = float(np.linalg.norm(beta))
            if norm > 0:
                beta = beta / norm
        projection[t] = float(X[t, :d_info] @ beta)

    if spec.link == "affine":
        driver = projection
    else:
        driver = np.tanh(projection) + 0.5 * np.sin(2.0 * projection)

    y = np.empty(T)
    previous = spec.level
    for t in range(T):
        level_t = spec.level + spec.amplitude * driver[t]
        y[t] = (
            spec.phi * previous
            + (1.0 - spec.phi) * level_t
            + spec.noise_std * rng.standard_normal()
        )
        previous = y[t]

    return TimeSeriesFrame(
        timestamps=np.arange(T),
        covariates=X,
        targets=y,
        availability_mask=np.ones(T, dtype=bool),
    )


def gp_sample(X, hp: KernelHyperparams, seed: int = 0) -> np.ndarray:
    """Draw one vector from the GP prior at the given inputs, noise included."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    K = kernel_matrix(X, X, hp) + hp.noise_var * np.eye(n)
    L, _ = cholesky_psd(K)
    z = np.random.default_rng(seed).standard_normal(n)
    return L @ z


def oracle_predict(X_train, y_train, hp: KernelHyperparams, x_star) -> Prediction:
    """GP posterior at one point by explicit dense inversion.

    Deliberately naive: builds the full inverse of the noisy kernel matrix
    with no Cholesky and no caching, so it exercises a different numerical
    path than the production predictor. Centered on the same training-mean
    offset convention. Capped at 200 training points.
    """
    X = np.asarray(X_train, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y_train, dtype=float).ravel()
    n = X.shape[0]
    if n > _ORACLE_MAX_POINTS:
        raise ValueError(f"oracle handles at most {_ORACLE_MAX_POINTS} points, got {n}")
    if y.shape[0] != n:
        raise ValueError("training inputs and targets disagree in length")
    x = np.asarray(x_star, dtype=float).ravel()
    K_noisy = kernel_matrix(X, X, hp) + hp.noise_var * np.eye(n)
    if np.linalg.cond(K_noisy) > 1e14:
        raise SingularMatrixError("noisy kernel matrix is numerically singular")
    try:
        K_inv = np.linalg.inv(K_noisy)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    k = kernel_matrix(X, x[None, :], hp).ravel()
    offset = float(np.mean(y))
    mean = float(k @ K_inv @ (y - offset)) + offset
    var = hp.signal_var - float(k @ K_inv @ k) + hp.noise_var
    return Prediction(mean=mean, variance=max(var, 0.0))

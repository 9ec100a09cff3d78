"""Covariate construction from per-post features.

The steps compose in the order a preparation run applies them: score users
and weight their posts, drop unwanted clusters, average posts into one
vector per time interval, smooth with a trailing window, and optionally
project onto the leading principal components. Every step is deterministic
under its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateDataError,
    DegenerateLabelsError,
    InsufficientDataError,
)

_DEFAULT_CALIBRATION_RATE = 3.0


@dataclass(frozen=True)
class PostRecord:
    """One post: when it happened, who wrote it, and its feature vector."""

    time_index: int
    user_id: str
    features: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        if features.ndim != 1:
            raise ValueError("post features must be a flat vector")
        if not np.all(np.isfinite(features)):
            raise ValueError("post features contain non-finite values")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _fit_logistic(Z, labels, l2, iterations):
    """Full-batch gradient descent on L2-regularized cross-entropy.

    The step size comes from the smoothness bound of the loss, so the
    descent is monotone without a line search. The intercept is the last
    coefficient and is left unpenalized.
    """
    n = Z.shape[0]
    design = np.column_stack([Z, np.ones(n)])
    y01 = labels.astype(float)
    lipschitz = np.linalg.norm(design, 2) ** 2 / (4.0 * n) + l2
    step = 1.0 / lipschitz
    coef = np.zeros(design.shape[1])
    penalty_mask = np.ones_like(coef)
    penalty_mask[-1] = 0.0
    for _ in range(iterations):
        residual = _sigmoid(design @ coef) - y01
        grad = design.T @ residual / n + l2 * penalty_mask * coef
        coef = coef - step * grad
    return coef[:-1], float(coef[-1])


@dataclass(frozen=True)
class ExponentialCalibration:
    """Monotone map from classifier probability to a post weight.

    A probability is ranked against the stored training probabilities and
    the weight decays exponentially as the rank drops from the top:
    weight = exp(-rate * (1 - quantile)). Weights live in (0, 1].
    """

    sorted_probs: np.ndarray
    rate: float

    def weight(self, probability: float) -> float:
        n = self.sorted_probs.shape[0]
        quantile = float(
            np.searchsorted(self.sorted_probs, probability, side="right")
        ) / n
        return math.exp(-self.rate * (1.0 - quantile))


def calibrate_exponential(probabilities, rate: float = _DEFAULT_CALIBRATION_RATE):
    """Turn classifier probabilities into rank-based exponential weights.

    Each probability maps to exp(-rate * (1 - q)) where q is its empirical
    quantile within the batch, counting ties together, so tied inputs share
    a weight and the ordering of weights matches the ordering of inputs.
    """
    p = np.asarray(probabilities, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("no probabilities to calibrate")
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    order = np.sort(p)
    quantile = np.searchsorted(order, p, side="right") / p.size
    return np.exp(-rate * (1.0 - quantile))


@dataclass(frozen=True)
class UserTrustModel:
    """Logistic scorer plus the calibration that turns scores into weights."""

    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    calibration: ExponentialCalibration

    def predict_proba(self, features) -> np.ndarray:
        F = np.atleast_2d(np.asarray(features, dtype=float))
        if F.shape[1] != self.weights.shape[0]:
            raise ValueError(
                f"expected {self.weights.shape[0]} features, got {F.shape[1]}"
            )
        Z = (F - self.feature_mean) / self.feature_scale
        return _sigmoid(Z @ self.weights + self.bias)

    def weight_for(self, features) -> np.ndarray:
        probs = self.predict_proba(features)
        return np.array([self.calibration.weight(p) for p in probs])


def _standardize_columns(F):
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return (F - mean) / scale, mean, scale


def train_trust(
    features,
    labels,
    folds: int = 10,
    *,
    l2: float = 1e-4,
    iterations: int = 3000,
    calibration_rate: float = _DEFAULT_CALIBRATION_RATE,
):
    """Fit the trust classifier and report stratified cross-validation accuracy.

    Parameters
    ----------
    features : array-like, shape (n, k)
    labels : array-like of bool, shape (n,)
    folds : number of stratified folds; must not exceed the smaller class.

    Returns
    -------
    (UserTrustModel, float)
        The model fit on all rows, and the pooled CV accuracy (fraction of
        rows classified correctly while held out).
    """
    F = np.asarray(features, dtype=float)
    if F.ndim != 2:
        raise ValueError("features must form a 2-D matrix")
    labels = np.asarray(labels, dtype=bool).ravel()
    n = F.shape[0]
    if labels.shape[0] != n:
        raise ValueError("features and labels disagree in length")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == n:
        raise DegenerateLabelsError("both classes must be present")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > min(n_pos, n - n_pos):
        raise ValueError(
            f"folds={folds} exceeds the smaller class ({min(n_pos, n - n_pos)} rows)"
        )

    fold_of = np.empty(n, dtype=int)
    for cls in (False, True):
        idx = np.flatnonzero(labels == cls)
        fold_of[idx] = np.arange(idx.size) % folds

    correct = 0
    for f in range(folds):
        held = fold_of == f
        Z_train, mean, scale = _standardize_columns(F[~held])
        w, b = _fit_logistic(Z_train, labels[~held], l2, iterations)
        Z_held = (F[held] - mean) / scale
        predicted = _sigmoid(Z_held @ w + b) >= 0.5
        correct += int((predicted == labels[held]).sum())
    cv_accuracy = correct / n

    Z_all, mean, scale = _standardize_columns(F)
    w, b = _fit_logistic(Z_all, labels, l2, iterations)
    probs = _sigmoid(Z_all @ w + b)
    probs = np.clip(probs, 1e-12, 1.0 - 1e-12)
    calibration = ExponentialCalibration(np.sort(probs), calibration_rate)
    model = UserTrustModel(w, b, mean, scale, calibration)
    return model, cv_accuracy


def aggregate(posts, scores, interval):
    """Weighted average of post features inside the half-open interval.

    Returns the covariate vector, or None when no post falls inside the
    interval; the caller decides how to handle the gap (the series
    aggregator carries the previous vector forward).
    """
    t0, t1 = interval
    if t0 >= t1:
        raise ValueError(f"empty interval ({t0}, {t1})")
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.shape[0] != len(posts):
        raise ValueError("scores must align with posts")
    if np.any(scores <= 0.0) or not np.all(np.isfinite(scores)):
        raise ValueError("scores must be positive and finite")
    chosen = [i for i, post in enumerate(posts) if t0 <= post.time_index < t1]
    if not chosen:
        return None
    stacked = np.stack([posts[i].features for i in chosen])
    weights = scores[chosen]
    return (stacked * weights[:, None]).sum(axis=0) / weights.sum()


def aggregate_series(posts, scores, *, start=None, stop=None, bucket: int = 1):
    """Aggregate posts into one covariate row per consecutive bucket.

    Buckets are ``bucket`` time units wide; bucket b covers raw time
    indices [b * bucket, (b + 1) * bucket). Empty buckets repeat the
    previous row and are flagged stale.

    Returns
    -------
    (bucket_indices, matrix, stale) : int array (B,), float array (B, d),
        bool array (B,) flagging carried-forward rows.
    """
    if bucket < 1:
        raise ValueError("bucket must be >= 1")
    if not posts:
        raise ValueError("no posts to aggregate")
    raw_times = np.array([p.time_index for p in posts])
    first = int(raw_times.min()) // bucket if start is None else int(start)
    last = int(raw_times.max()) // bucket if stop is None else int(stop) - 1
    if last < first:
        raise ValueError("empty bucket range")
    rows = []
    stale = []
    previous = None
    for b in range(first, last + 1):
        vector = aggregate(posts, scores, (b * bucket, (b + 1) * bucket))
        if vector is None:
            if previous is None:
                raise ValueError(f"first bucket {b} is empty; nothing to carry forward")
            rows.append(previous)
            stale.append(True)
        else:
            rows.append(vector)
            stale.append(False)
            previous = vector
    return (
        np.arange(first, last + 1),
        np.vstack(rows),
        np.array(stale, dtype=bool),
    )


@dataclass(frozen=True)
class KmeansResult:
    """Clustering output plus the inertia trajectory of the Lloyd loop."""

    assignments: np.ndarray
    centroids: np.ndarray
    inertia_path: tuple
    n_iter: int


def kmeans_cluster(
    embeddings,
    k: int = 10,
    seed: int = 0,
    *,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> KmeansResult:
    """Lloyd's algorithm with distance-weighted (k-means++ style) seeding.

    Deterministic under the seed. Ties in assignment go to the lowest
    centroid index; a centroid that loses all members is re-seeded on the
    currently worst-fit point.
    """
    X = np.asarray(embeddings, dtype=float)
    if X.ndim != 2:
        raise ValueError("embeddings must form a 2-D matrix")
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise InsufficientDataError(f"{n} points cannot support k={k} clusters")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    closest = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0.0:
            probs = closest / total
        else:
            probs = np.full(n, 1.0 / n)
        centroids[j] = X[rng.choice(n, p=probs)]
        closest = np.minimum(closest, ((X - centroids[j]) ** 2).sum(axis=1))

    inertia_path = []
    assignments = np.zeros(n, dtype=int)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        dist2 = cdist(X, centroids, "sqeuclidean")
        assignments = dist2.argmin(axis=1)
        point_cost = dist2[np.arange(n), assignments]
        inertia_path.append(float(point_cost.sum()))
        updated = centroids.copy()
        for j in range(k):
            members = assignments == j
            if members.any():
                updated[j] = X[members].mean(axis=0)
            else:
                updated[j] = X[point_cost.argmax()]
        shift = float(np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max())
        centroids = updated
        if shift < tol:
            break
    dist2 = cdist(X, centroids, "sqeuclidean")
    assignments = dist2.argmin(axis=1)
    inertia_path.append(float(dist2[np.arange(n), assignments].sum()))
    return KmeansResult(assignments, centroids, tuple(inertia_path), iteration)


def filter_clusters(posts, assignments, drop_ids):
    """Drop every post assigned to one of the given cluster ids, keeping order."""
    assignments = np.asarray(assignments, dtype=int).ravel()
    if assignments.shape[0] != len(posts):
        raise ValueError("assignments must align with posts")
    drop = set(int(i) for i in drop_ids)
    if assignments.size:
        valid = set(range(int(assignments.max()) + 1))
        unknown = drop - valid
        if unknown:
            raise ValueError(f"unknown cluster ids: {sorted(unknown)}")
    return [post for post, a in zip(posts, assignments) if int(a) not in drop]


def smooth(series, window: int):
    """Trailing moving average; the first window - 1 rows are dropped.

    Works on a vector or a (T, d) matrix, smoothing each column. Row i of
    the output averages input rows i .. i + window - 1, so output row i
    is aligned with input time i + window - 1.
    """
    X = np.asarray(series, dtype=float)
    if X.ndim not in (1, 2):
        raise ValueError("series must be a vector or a 2-D matrix")
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > X.shape[0]:
        raise ValueError(
            f"window {window} exceeds series length {X.shape[0]}"
        )
    if window == 1:
        return X.copy()
    return sliding_window_view(X, window, axis=0).mean(axis=-1)


@dataclass(frozen=True)
class PcaProjection:
    """Mean vector plus orthonormal components, largest variance first."""

    mean_vector: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def explained_fraction(self) -> float:
        return float(self.explained_variance.sum() / self.total_variance)


def pca_fit(X, variance_fraction: float = 0.90) -> PcaProjection:
    """Eigendecompose the sample covariance and keep the smallest number of
    components whose variance share reaches the requested fraction.

    Component signs are fixed so each row's largest-magnitude entry is
    positive, keeping results reproducible across linear-algebra backends.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must form a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two rows to estimate covariance")
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    total = float(eigenvalues.sum())
    scale = max(1.0, float(np.abs(X).max()))
    if total <= 1e-15 * scale * scale:
        raise DegenerateDataError("data has no variance to decompose")
    target = variance_fraction * total * (1.0 - 1e-12)
    k = int(np.searchsorted(np.cumsum(eigenvalues), target, side="left")) + 1
    k = min(k, d)
    components = eigenvectors[:, :k].T.copy()
    for row in components:
        anchor = int(np.argmax(np.abs(row)))
        if row[anchor] < 0.0:
            row *= -1.0
    return PcaProjection(mean, components, eigenvalues[:k].copy(), total)


def pca_transform(projection: PcaProjection, X) -> np.ndarray:
    """Project rows onto the stored components: (X - mean) @ components.T."""
    X = np.asarray(X, dtype=float)
    flat = X.ndim == 1
    if flat:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != projection.mean_vector.shape[0]:
        raise ValueError(
            f"expected {projection.mean_vector.shape[0]} features, got shape {X.shape}"
        )
    Z = (X - projection.mean_vector) @ projection.components.T
    return Z[0] if flat else Z


def pca_inverse_transform(projection: PcaProjection, Z) -> np.ndarray:
    """Map projected rows back into the original feature space."""
    Z = np.asarray(Z, dtype=float)
    flat = Z.ndim == 1
    if flat:
        Z = Z[None, :]
    if Z.shape[1] != projection.n_components:
        raise ValueError(
            f"expected {projection.n_components} projected coordinates, got {Z.shape[1]}"
        )
    X = Z @ projection.components + projection.mean_vector
    return X[0] if flat else X

"""Error and co-movement metrics for prediction series.

Besides the pointwise errors this module carries a detrended
cross-correlation coefficient: both series are integrated after demeaning,
split into overlapping boxes of a fixed length (stride one), linearly
detrended inside each box, and the ratio of mean residual cross-products to
the two residual scales gives a correlation-like number in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyEvaluationError, UndefinedCorrelationError
from .frame import Prediction

_DEFAULT_MAX_BOX = 28
_MIN_BOX = 4


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise ValueError("empty series")
    return a, b


def rmse(predictions, targets) -> float:
    """Root mean squared error."""
    p, t = _pair(predictions, targets)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(predictions, targets) -> float:
    """Mean absolute error."""
    p, t = _pair(predictions, targets)
    return float(np.mean(np.abs(p - t)))


def pearson(a, b) -> float:
    """Pearson correlation; rejects constant inputs instead of returning NaN."""
    a, b = _pair(a, b)
    if a.size < 2:
        raise UndefinedCorrelationError("correlation needs at least two points")
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.sqrt((da * da).sum()))
    sb = float(np.sqrt((db * db).sum()))
    if sa == 0.0 or sb == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant series")
    return float((da * db).sum() / (sa * sb))


def _detrender(box_len: int) -> np.ndarray:
    """Symmetric projector onto residuals of an in-box linear fit."""
    x = np.arange(box_len, dtype=float)
    design = np.column_stack([np.ones(box_len), x])
    gram_inv = np.linalg.inv(design.T @ design)
    hat = design @ gram_inv @ design.T
    M = np.eye(box_len) - hat
    return (M + M.T) / 2.0


def dcca(a, b, box_len: int) -> float:
    """Detrended cross-correlation coefficient at one box length.

    Parameters
    ----------
    a, b : array-like, equal length n with n >= 2 * box_len
    box_len : int, at least 4

    Raises
    ------
    UndefinedCorrelationError
        If either series has zero detrended variance at this scale.
    """
    a, b = _pair(a, b)
    if box_len < _MIN_BOX:
        raise ValueError(f"box_len must be >= {_MIN_BOX}, got {box_len}")
    if a.size < 2 * box_len:
        raise ValueError(
            f"need at least {2 * box_len} points for box_len={box_len}, got {a.size}"
        )
    profile_a = np.cumsum(a - a.mean())
    profile_b = np.cumsum(b - b.mean())
    boxes_a = sliding_window_view(profile_a, box_len)
    boxes_b = sliding_window_view(profile_b, box_len)
    M = _detrender(box_len)
    resid_a = boxes_a @ M
    resid_b = boxes_b @ M
    f2_ab = float((resid_a * resid_b).mean(axis=1).mean())
    f2_aa = float((resid_a * resid_a).mean(axis=1).mean())
    f2_bb = float((resid_b * resid_b).mean(axis=1).mean())
    if f2_aa <= 0.0 or f2_bb <= 0.0:
        raise UndefinedCorrelationError(
            "detrended variance vanishes at this box length"
        )
    return f2_ab / math.sqrt(f2_aa * f2_bb)


@dataclass(frozen=True)
class MetricsRecord:
    """Bundle of evaluation metrics; correlations are None when undefined."""

    rmse: float
    mae: float
    pearson: float | None
    dcca: float | None
    mean_variance: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if not (self.rmse >= 0.0 and self.mae >= 0.0):
            raise ValueError("error metrics must be non-negative")
        if self.rmse < self.mae - 1e-12:
            raise ValueError(f"rmse {self.rmse} below mae {self.mae}")
        for name in ("pearson", "dcca"):
            value = getattr(self, name)
            if value is not None and abs(value) > 1.0 + 1e-9:
                raise ValueError(f"{name} out of range: {value}")

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "pearson": self.pearson,
            "dcca": self.dcca,
            "mean_variance": self.mean_variance,
            "n_points": self.n_points,
        }


def evaluate(
    predictions,
    targets,
    subset=None,
    *,
    dcca_box_len: int | None = None,
) -> MetricsRecord:
    """Score a list of predictions against the target series.

    Parameters
    ----------
    predictions : sequence of Prediction
        Each must carry a valid ``time_index`` into ``targets``.
    targets : array-like
        Full target series; only the predicted positions are read.
    subset : optional boolean sequence aligned with ``predictions``
        Restricts scoring, e.g. to imputed points only.
    dcca_box_len : optional int
        Box length for the detrended cross-correlation. Defaults to the
        largest of 4 and min(28, half the number of scored points); when
        the series is too short the dcca field comes back None.

    Correlations that are undefined on the scored subset (single point,
    constant series) are reported as None rather than raising.
    """
    preds = list(predictions)
    if subset is not None:
        subset = np.asarray(subset, dtype=bool)
        if subset.shape[0] != len(preds):
            raise ValueError("subset mask must align with predictions")
        preds = [p for p, keep in zip(preds, subset) if keep]
    if not preds:
        raise EmptyEvaluationError("no predictions selected for evaluation")
    targets = np.asarray(targets, dtype=float).ravel()
    indices = np.array([p.time_index for p in preds])
    if indices.min() < 0 or indices.max() >= targets.shape[0]:
        raise IndexError("prediction time_index outside the target series")
    y_true = targets[indices]
    if not np.all(np.isfinite(y_true)):
        raise ValueError("targets are not finite at the scored positions")
    y_hat = np.array([p.mean for p in preds])
    variances = np.array([p.variance for p in preds])

    n = y_hat.shape[0]
    record_pearson = None
    if n >= 2:
        try:
            record_pearson = pearson(y_hat, y_true)
        except UndefinedCorrelationError:
            record_pearson = None
    box = dcca_box_len if dcca_box_len is not None else max(_MIN_BOX, min(_DEFAULT_MAX_BOX, n // 2))
    record_dcca = None
    if box >= _MIN_BOX and n >= 2 * box:
        try:
            record_dcca = dcca(y_hat, y_true, box)
        except UndefinedCorrelationError:
            record_dcca = None
    return MetricsRecord(
        rmse=rmse(y_hat, y_true),
        mae=mae(y_hat, y_true),
        pearson=record_pearson,
        dcca=record_dcca,
        mean_variance=float(variances.mean()),
        n_points=n,
    )

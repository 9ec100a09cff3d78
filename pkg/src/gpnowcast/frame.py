"""Immutable time-series containers and the experiment configuration.

A frame holds unit-spaced integer timestamps, a covariate matrix, a target
series and an availability mask. All window arithmetic elsewhere in the
package is position-based: row p of a frame is position p, and slices are
half-open ``[t1, t2)`` exactly like Python slicing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeriesFrame:
    """Covariates, targets and an availability mask over a shared time axis.

    Parameters
    ----------
    timestamps : array of int, shape (T,)
        Strictly increasing, unit-spaced time indices.
    covariates : array of float, shape (T, d)
        One feature vector per time step. Must be finite everywhere.
    targets : array of float, shape (T,)
        Survey values. Entries where the mask is False are treated as
        unobserved; they are stored as 0.0 and must never be read.
    availability_mask : array of bool, shape (T,)
        True where the target is observed.
    """

    timestamps: np.ndarray
    covariates: np.ndarray
    targets: np.ndarray
    availability_mask: np.ndarray

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64)
        X = np.array(self.covariates, dtype=float)
        y = np.array(self.targets, dtype=float)
        mask = np.array(self.availability_mask, dtype=bool)
        if ts.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if X.ndim != 2:
            raise ValueError("covariates must be a 2-D matrix of shape (T, d)")
        if y.ndim != 1 or mask.ndim != 1:
            raise ValueError("targets and availability_mask must be one-dimensional")
        T = ts.shape[0]
        if T == 0:
            raise ValueError("frame must contain at least one row")
        if not (X.shape[0] == y.shape[0] == mask.shape[0] == T):
            raise ValueError(
                f"length mismatch: timestamps={T}, covariates={X.shape[0]}, "
                f"targets={y.shape[0]}, mask={mask.shape[0]}"
            )
        if T > 1 and not np.all(np.diff(ts) == 1):
            raise ValueError("timestamps must be strictly increasing and unit-spaced")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates contain non-finite values")
        if not np.all(np.isfinite(y[mask])):
            raise ValueError("observed targets contain non-finite values")
        # Unobserved slots get a harmless constant so no NaN can leak into
        # linear algebra; the mask is the single source of truth.
        y = np.where(mask, y, 0.0)
        object.__setattr__(self, "timestamps", _frozen(ts, np.int64))
        object.__setattr__(self, "covariates", _frozen(X, float))
        object.__setattr__(self, "targets", _frozen(y, float))
        object.__setattr__(self, "availability_mask", _frozen(mask, bool))

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    def slice(self, t1: int, t2: int) -> "TimeSeriesFrame":
        """Return the sub-frame of rows ``[t1, t2)``.

        Bounds must satisfy ``0 <= t1 < t2 <= len(self)``; in particular an
        empty slice is rejected.
        """
        if not (0 <= t1 < t2 <= len(self)):
            raise IndexError(
                f"slice bounds ({t1}, {t2}) invalid for frame of length {len(self)}"
            )
        return TimeSeriesFrame(
            self.timestamps[t1:t2],
            self.covariates[t1:t2],
            self.targets[t1:t2],
            self.availability_mask[t1:t2],
        )

    def equals(self, other: "TimeSeriesFrame") -> bool:
        """Exact equality of all four arrays."""
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.availability_mask, other.availability_mask)
        )

    @staticmethod
    def concat(first: "TimeSeriesFrame", second: "TimeSeriesFrame") -> "TimeSeriesFrame":
        """Concatenate two frames whose time axes are contiguous."""
        if second.timestamps[0] != first.timestamps[-1] + 1:
            raise ValueError("frames are not contiguous in time")
        return TimeSeriesFrame(
            np.concatenate([first.timestamps, second.timestamps]),
            np.vstack([first.covariates, second.covariates]),
            np.concatenate([first.targets, second.targets]),
            np.concatenate([first.availability_mask, second.availability_mask]),
        )


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and variance, optionally tied to a frame position.

    ``time_index`` is the 0-based row the prediction targets; -1 marks a
    free-standing prediction that is not tied to a series position.
    """

    mean: float
    variance: float
    time_index: int = -1

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ValueError(f"prediction mean must be finite, got {self.mean!r}")
        if not (math.isfinite(self.variance) and self.variance >= 0.0):
            raise ValueError(f"prediction variance must be >= 0, got {self.variance!r}")


_GRANULARITY_DEFAULTS = {
    # granularity: (window_w, smoothing_len, survey_cadence)
    "daily": (730, 28, 28),
    "monthly": (48, 1, 1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for windowed monitoring runs.

    window_w
        Training window length, in time steps.
    prediction_step_delta
        How many steps before the predicted point the target window ends.
    correspondence_lag_alpha
        Shift of the covariate window against the target window. Positive
        values pair each target with later covariates.
    smoothing_len
        Trailing moving-average window applied during preparation.
    survey_cadence
        Length of one survey release period, used by reduction runs.
    """

    window_w: int
    prediction_step_delta: int = 1
    correspondence_lag_alpha: int = 0
    smoothing_len: int = 1
    granularity: str = "monthly"
    survey_cadence: int = 1

    def __post_init__(self):
        if self.granularity not in _GRANULARITY_DEFAULTS:
            raise ConfigError(f"unknown granularity {self.granularity!r}")
        if self.window_w < 2:
            raise ConfigError(f"window_w must be >= 2, got {self.window_w}")
        if self.prediction_step_delta < 0:
            raise ConfigError("prediction_step_delta must be >= 0")
        if self.smoothing_len < 1:
            raise ConfigError("smoothing_len must be >= 1")
        if self.survey_cadence < 1:
            raise ConfigError("survey_cadence must be >= 1")

    @classmethod
    def defaults(cls, granularity: str = "monthly", **overrides) -> "ExperimentConfig":
        """Stock configuration for a granularity, with keyword overrides."""
        if granularity not in _GRANULARITY_DEFAULTS:
            raise ConfigError(f"unknown granularity {granularity!r}")
        w, smooth, cadence = _GRANULARITY_DEFAULTS[granularity]
        cfg = cls(
            window_w=w,
            smoothing_len=smooth,
            granularity=granularity,
            survey_cadence=cadence,
        )
        return replace(cfg, **overrides) if overrides else cfg

    def validate_for_length(self, length: int) -> None:
        """Check that a frame of the given length supports at least one window."""
        needed = (
            self.window_w
            + self.prediction_step_delta
            + abs(self.correspondence_lag_alpha)
        )
        if needed >= length:
            raise ConfigError(
                f"frame of length {length} is too short: window_w + delta + |alpha| "
                f"= {needed} must be smaller than the frame length"
            )

"""Rolling-window prediction and missing-target imputation.

Every predicted point gets its own freshly trained GP on a fixed-length
window. Window placement is position-based and half-open, matching Python
slicing. For a prediction at position p with window length w, step delta
and covariate lag alpha:

    training covariates   X[p - delta - w + alpha + 1 : p - delta + alpha + 1]
    training targets      y[p - delta - w + 1 : p - delta + 1]
    query covariate       X[p + alpha]

so the target window ends delta steps before p and the covariate window is
shifted alpha steps against it. Predictions run from the first position
where every slice is in range through the last; with alpha = 0 that is
p = w + delta .. T - 1, which gives T - (w + delta) predictions.

Imputation scans forward with delta = 1, alpha = 0 windows and writes each
posterior mean back into the working series, so later windows may train on
earlier imputed values. That feedback makes the scan inherently sequential.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    InsufficientHistoryError,
    MissingDataError,
)
from .frame import ExperimentConfig, Prediction, TimeSeriesFrame
from .gpr import fit as gpr_fit
from .gpr import predict as gpr_predict
from .gpr import train as gpr_train
from .kernel import KernelHyperparams
from .metrics import MetricsRecord, evaluate
from .pipeline import pca_fit, pca_transform


@dataclass(frozen=True)
class WindowSpec:
    """Slice bounds used for one prediction; doubles as the data-access log."""

    pred_index: int
    cov_start: int
    cov_stop: int
    tgt_start: int
    tgt_stop: int
    query_index: int


@dataclass(frozen=True)
class MonitorResult:
    """Rolling-run output: one prediction per window, in time order."""

    predictions: tuple
    config_used: ExperimentConfig
    hyperparams: tuple
    windows: tuple

    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.predictions])

    def variances(self) -> np.ndarray:
        return np.array([p.variance for p in self.predictions])

    def time_indices(self) -> np.ndarray:
        return np.array([p.time_index for p in self.predictions], dtype=int)


@dataclass(frozen=True)
class ReductionResult:
    """Imputation output: the filled series and per-imputed-point detail."""

    filled_targets: np.ndarray
    imputed_mask: np.ndarray
    metrics_on_imputed: MetricsRecord | None
    predictions: tuple
    hyperparams: tuple
    config_used: ExperimentConfig


def window_plan(length: int, cfg: ExperimentConfig) -> list:
    """Enumerate every window the frame supports under this configuration."""
    cfg.validate_for_length(length)
    w = cfg.window_w
    delta = cfg.prediction_step_delta
    alpha = cfg.correspondence_lag_alpha
    first = w + delta + max(-alpha, 0)
    last = length - 1 - max(alpha, 0)
    plan = []
    for p in range(first, last + 1):
        plan.append(
            WindowSpec(
                pred_index=p,
                cov_start=p - delta - w + alpha + 1,
                cov_stop=p - delta + alpha + 1,
                tgt_start=p - delta - w + 1,
                tgt_stop=p - delta + 1,
                query_index=p + alpha,
            )
        )
    return plan


def _train_predict(
    X_window,
    y_window,
    x_query,
    *,
    restarts: int,
    seed: int,
    warm_start: KernelHyperparams | None,
    standardize: bool,
    pca_fraction: float | None,
):
    """Shared per-window routine: project, scale, train, fit, predict."""
    Xw = np.asarray(X_window, dtype=float)
    if Xw.ndim == 1:
        Xw = Xw[:, None]
    xq = np.asarray(x_query, dtype=float).ravel()
    if pca_fraction is not None:
        projection = pca_fit(Xw, pca_fraction)
        Xw = pca_transform(projection, Xw)
        xq = pca_transform(projection, xq)
    if standardize:
        mean = Xw.mean(axis=0)
        scale = Xw.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        Xw = (Xw - mean) / scale
        xq = (xq - mean) / scale
    hp = gpr_train(Xw, y_window, restarts, seed=seed, warm_start=warm_start)
    model = gpr_fit(Xw, y_window, hp)
    return gpr_predict(model, xq), hp


def gprm(
    x_query,
    X_train,
    y_train,
    *,
    restarts: int = 3,
    seed: int = 0,
    warm_start: KernelHyperparams | None = None,
    standardize: bool = True,
) -> Prediction:
    """Train hyperparameters on one window, then predict at the query point.

    Covariates are z-scored per feature with the window's own statistics
    before any kernel evaluation (the query point is scaled with the same
    statistics); pass ``standardize=False`` for raw-scale behavior.
    """
    prediction, _ = _train_predict(
        X_train,
        y_train,
        x_query,
        restarts=restarts,
        seed=seed,
        warm_start=warm_start,
        standardize=standardize,
        pca_fraction=None,
    )
    return prediction


def _fit_window(covariates, targets, spec, **kwargs):
    prediction, hp = _train_predict(
        covariates[spec.cov_start : spec.cov_stop],
        targets[spec.tgt_start : spec.tgt_stop],
        covariates[spec.query_index],
        **kwargs,
    )
    return Prediction(prediction.mean, prediction.variance, spec.pred_index), hp


def run_monitor(
    frame: TimeSeriesFrame,
    cfg: ExperimentConfig,
    *,
    restarts: int = 3,
    seed: int = 0,
    threads: int = 1,
    standardize: bool = True,
    pca_fraction: float | None = None,
) -> MonitorResult:
    """Slide the training window across the frame, one prediction per step.

    With a single thread each window warm-starts its optimizer from the
    previous window's hyperparameters in addition to the standard restart
    grid. With ``threads > 1`` the steps run independently (no warm start)
    but output ordering and values stay deterministic for a given thread
    count.

    Raises MissingDataError if any training window would touch an
    unobserved target; imputation is run_with_missing's job.
    """
    plan = window_plan(len(frame), cfg)
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    tgt_lo = plan[0].tgt_start
    tgt_hi = plan[-1].tgt_stop
    if not frame.availability_mask[tgt_lo:tgt_hi].all():
        missing = tgt_lo + int(
            np.flatnonzero(~frame.availability_mask[tgt_lo:tgt_hi])[0]
        )
        raise MissingDataError(
            f"target at position {missing} is unobserved but falls inside a "
            "training window; use run_with_missing for gappy targets"
        )
    common = dict(
        restarts=restarts,
        seed=seed,
        standardize=standardize,
        pca_fraction=pca_fraction,
    )
    predictions = []
    hyperparams = []
    if threads == 1:
        warm = None
        for spec in plan:
            pred, hp = _fit_window(
                frame.covariates, frame.targets, spec, warm_start=warm, **common
            )
            predictions.append(pred)
            hyperparams.append(hp)
            warm = hp
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    lambda spec: _fit_window(
                        frame.covariates,
                        frame.targets,
                        spec,
                        warm_start=None,
                        **common,
                    ),
                    plan,
                )
            )
        predictions = [pred for pred, _ in results]
        hyperparams = [hp for _, hp in results]
    return MonitorResult(
        predictions=tuple(predictions),
        config_used=cfg,
        hyperparams=tuple(hyperparams),
        windows=tuple(plan),
    )


def run_with_missing(
    frame: TimeSeriesFrame,
    cfg: ExperimentConfig,
    mask=None,
    *,
    restarts: int = 3,
    seed: int = 0,
    standardize: bool = True,
) -> ReductionResult:
    """Impute unobserved targets left to right, feeding estimates forward.

    ``mask`` marks which targets this run may read (default: the frame's
    own availability). The first window_w positions must be observed. Each
    missing position p is predicted from the window ending at p - 1 of the
    working series, then the posterior mean is written back so later
    windows can train on it. Unread true values stay untouched, and with
    nothing missing the output equals the input targets exactly.

    Metrics are computed on imputed points only, against the frame's
    targets wherever those are actually observed.
    """
    T = len(frame)
    w = cfg.window_w
    if w >= T:
        raise ConfigError(f"window_w={w} needs a frame longer than {T}")
    if mask is None:
        mask = frame.availability_mask
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.shape[0] != T:
        raise ValueError(f"mask length {mask.shape[0]} does not match frame {T}")
    observed = mask & frame.availability_mask
    if not observed[:w].all():
        first_gap = int(np.flatnonzero(~observed[:w])[0])
        raise InsufficientHistoryError(
            f"position {first_gap} inside the initial window of {w} is unobserved"
        )
    working = frame.targets.astype(float).copy()
    working[~observed] = np.nan
    predictions = []
    hyperparams = []
    warm = None
    for p in range(w, T):
        if observed[p]:
            continue
        spec = WindowSpec(p, p - w, p, p - w, p, p)
        pred, hp = _fit_window(
            frame.covariates,
            working,
            spec,
            restarts=restarts,
            seed=seed,
            warm_start=warm,
            standardize=standardize,
            pca_fraction=None,
        )
        working[p] = pred.mean
        predictions.append(pred)
        hyperparams.append(hp)
        warm = hp
    scoreable = [p for p in predictions if frame.availability_mask[p.time_index]]
    metrics = evaluate(scoreable, frame.targets) if scoreable else None
    return ReductionResult(
        filled_targets=working,
        imputed_mask=~observed,
        metrics_on_imputed=metrics,
        predictions=tuple(predictions),
        hyperparams=tuple(hyperparams),
        config_used=cfg,
    )


def reduction_mask(
    length: int, warmup: int, period: int, step: int
) -> np.ndarray:
    """Availability pattern for a reduced survey cadence.

    Everything before ``warmup`` is observed. After it, time splits into
    cycles of ``step`` periods of ``period`` steps each: the first
    step - 1 periods of every cycle are missing and the last one is
    observed, mimicking a survey that only publishes one period out of
    every ``step``.
    """
    observed = np.ones(length, dtype=bool)
    cycle = step * period
    gap = (step - 1) * period
    for offset in range(length - warmup):
        observed[warmup + offset] = (offset % cycle) >= gap
    return observed


def run_survey_reduction(
    frame: TimeSeriesFrame,
    cfg: ExperimentConfig,
    period: int | None = None,
    step: int = 2,
    *,
    warmup: int | None = None,
    restarts: int = 3,
    seed: int = 0,
    standardize: bool = True,
) -> ReductionResult:
    """Simulate a thinned survey release schedule and impute the gaps.

    ``period`` defaults to the configured survey cadence; ``warmup``
    defaults to the window length (the minimum observed prefix the
    imputation scan needs).
    """
    if step < 2:
        raise ConfigError("step must be >= 2; step=1 leaves nothing missing")
    period = cfg.survey_cadence if period is None else period
    if period < 1:
        raise ConfigError("period must be >= 1")
    T = len(frame)
    warmup = cfg.window_w if warmup is None else warmup
    if warmup < cfg.window_w:
        raise ConfigError(
            f"warmup={warmup} is shorter than the training window {cfg.window_w}"
        )
    if warmup >= T:
        raise ConfigError(f"warmup={warmup} leaves no positions to impute")
    mask = reduction_mask(T, warmup, period, step)
    return run_with_missing(
        frame, cfg, mask, restarts=restarts, seed=seed, standardize=standardize
    )


def baseline_time_only(frame: TimeSeriesFrame, cfg: ExperimentConfig, **kwargs) -> MonitorResult:
    """Monitor run whose only covariate is the time index itself.

    A pure elapsed-time regressor: any predictive skill comes from trend
    and autocorrelation, none from the covariates, which are ignored.
    """
    derived = TimeSeriesFrame(
        frame.timestamps,
        frame.timestamps.astype(float)[:, None],
        frame.targets,
        frame.availability_mask,
    )
    return run_monitor(derived, cfg, **kwargs)


def baseline_single_feature(
    frame: TimeSeriesFrame, cfg: ExperimentConfig, column: int, **kwargs
) -> MonitorResult:
    """Monitor run restricted to a single covariate column."""
    if not 0 <= column < frame.n_features:
        raise IndexError(
            f"column {column} out of range for {frame.n_features} features"
        )
    derived = TimeSeriesFrame(
        frame.timestamps,
        frame.covariates[:, [column]],
        frame.targets,
        frame.availability_mask,
    )
    return run_monitor(derived, cfg, **kwargs)

"""Command-line interface.

Subcommands:

    synth     sample a synthetic frame from a key=value spec file or flags
    prepare   build a covariate frame from per-post features
    monitor   rolling-window nowcast over a frame
    reduce    thin the survey cadence and impute the gaps
    baseline  time-only or single-feature reference runs
    rerun     re-execute a previous run from its manifest

Every command writes a ``manifest.json`` beside its outputs capturing the
resolved parameters and input paths; ``rerun`` replays it byte-for-byte.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    ensure_outdir,
    parse_kv_file,
    read_frame,
    read_json,
    read_posts,
    read_user_table,
    write_frame,
    write_json,
    write_metrics_json,
    write_monitor_csv,
    write_reduction_csv,
)
from .errors import (
    ConfigError,
    DegenerateLabelsError,
    InsufficientDataError,
    InsufficientHistoryError,
    MissingDataError,
    NowcastError,
    SchemaError,
)
from .figures import monitor_figure, reduction_figure, save_figure
from .frame import ExperimentConfig, TimeSeriesFrame
from .metrics import evaluate
from .monitor import (
    baseline_single_feature,
    baseline_time_only,
    run_monitor,
    run_survey_reduction,
)
from .pipeline import (
    aggregate_series,
    calibrate_exponential,
    filter_clusters,
    kmeans_cluster,
    pca_fit,
    pca_transform,
    smooth,
    train_trust,
)
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (
    ConfigError,
    SchemaError,
    MissingDataError,
    InsufficientHistoryError,
    DegenerateLabelsError,
    InsufficientDataError,
    ValueError,
    IndexError,
    FileNotFoundError,
    NotADirectoryError,
)

_SYNTH_INT_KEYS = ("length", "n_features", "seed", "n_noise_features")
_SYNTH_FLOAT_KEYS = (
    "phi",
    "noise_std",
    "covariate_rho",
    "level",
    "amplitude",
    "link_drift",
)


def _resolve_threads(flag_value):
    """Precedence: --threads flag, then NOWCAST_THREADS, then 1."""
    if flag_value is not None:
        value = flag_value
    else:
        env = os.environ.get("NOWCAST_THREADS", "").strip()
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"NOWCAST_THREADS must be an integer, got {env!r}")
    if value < 1:
        raise ConfigError(f"thread count must be >= 1, got {value}")
    return value


def _config_params(args, smoothing_len: int = 1) -> dict:
    cfg = ExperimentConfig.defaults(args.granularity)
    window = args.w if args.w is not None else cfg.window_w
    cfg = ExperimentConfig(
        window_w=window,
        prediction_step_delta=args.delta,
        correspondence_lag_alpha=args.alpha,
        smoothing_len=smoothing_len,
        granularity=args.granularity,
        survey_cadence=cfg.survey_cadence,
    )
    return asdict(cfg)


def _observed_subset(frame, predictions):
    return [bool(frame.availability_mask[p.time_index]) for p in predictions]


def _monitor_metrics(frame, result, dcca_box):
    subset = _observed_subset(frame, result.predictions)
    if not any(subset):
        return None
    return evaluate(
        result.predictions, frame.targets, subset, dcca_box_len=dcca_box
    )


# --- command bodies -------------------------------------------------------
# Each takes (params, inputs, outdir) where params and inputs are the plain
# dicts stored in the manifest, so a rerun goes through the same code path.


def _do_synth(params, inputs, outdir):
    spec = SynthSpec(**params["spec"])
    frame = generate(spec)
    write_frame(frame, outdir / "frame.csv")
    return ["frame.csv"]


def _do_monitor(params, inputs, outdir):
    frame = read_frame(inputs["frame"])
    cfg = ExperimentConfig(**params["config"])
    result = run_monitor(
        frame,
        cfg,
        restarts=params["restarts"],
        seed=params["seed"],
        threads=params["threads"],
        pca_fraction=params.get("pca_per_window"),
    )
    write_monitor_csv(outdir / "predictions.csv", frame, result)
    metrics = _monitor_metrics(frame, result, params.get("dcca_box"))
    write_metrics_json(
        outdir / "metrics.json",
        metrics,
        extra={"n_predictions": len(result.predictions), "config": params["config"]},
    )
    outputs = ["predictions.csv", "metrics.json"]
    if params.get("figures", True):
        indices = result.time_indices()
        fig = monitor_figure(
            frame.timestamps[indices],
            frame.targets[indices],
            frame.availability_mask[indices],
            result.means(),
            result.means() - 2.0 * np.sqrt(result.variances()),
            result.means() + 2.0 * np.sqrt(result.variances()),
        )
        save_figure(fig, outdir / "nowcast.png")
        outputs.append("nowcast.png")
    return outputs


def _do_reduce(params, inputs, outdir):
    frame = read_frame(inputs["frame"])
    cfg = ExperimentConfig(**params["config"])
    result = run_survey_reduction(
        frame,
        cfg,
        period=params["period"],
        step=params["step"],
        warmup=params.get("warmup"),
        restarts=params["restarts"],
        seed=params["seed"],
    )
    write_reduction_csv(outdir / "filled.csv", frame, result)
    write_metrics_json(
        outdir / "metrics.json",
        result.metrics_on_imputed,
        extra={
            "n_imputed": int(result.imputed_mask.sum()),
            "period": params["period"],
            "step": params["step"],
            "config": params["config"],
        },
    )
    outputs = ["filled.csv", "metrics.json"]
    if params.get("figures", True):
        fig = reduction_figure(
            frame.timestamps,
            frame.targets,
            frame.availability_mask,
            result.filled_targets,
            ~result.imputed_mask,
        )
        save_figure(fig, outdir / "reduction.png")
        outputs.append("reduction.png")
    return outputs


def _do_baseline(params, inputs, outdir):
    frame = read_frame(inputs["frame"])
    cfg = ExperimentConfig(**params["config"])
    kwargs = dict(
        restarts=params["restarts"],
        seed=params["seed"],
        threads=params["threads"],
    )
    if params["mode"] == "time":
        result = baseline_time_only(frame, cfg, **kwargs)
    else:
        result = baseline_single_feature(frame, cfg, params["column"], **kwargs)
    write_monitor_csv(outdir / "predictions.csv", frame, result)
    metrics = _monitor_metrics(frame, result, params.get("dcca_box"))
    write_metrics_json(
        outdir / "metrics.json",
        metrics,
        extra={
            "mode": params["mode"],
            "column": params.get("column"),
            "n_predictions": len(result.predictions),
            "config": params["config"],
        },
    )
    outputs = ["predictions.csv", "metrics.json"]
    if params.get("figures", True):
        indices = result.time_indices()
        fig = monitor_figure(
            frame.timestamps[indices],
            frame.targets[indices],
            frame.availability_mask[indices],
            result.means(),
            result.means() - 2.0 * np.sqrt(result.variances()),
            result.means() + 2.0 * np.sqrt(result.variances()),
        )
        save_figure(fig, outdir / "baseline.png")
        outputs.append("baseline.png")
    return outputs


def _read_target_table(path):
    """Targets CSV: time_index,target -> dict of bucket index to value."""
    import csv

    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("file is empty", row=1) from None
        if header[:2] != ["time_index", "target"]:
            raise SchemaError("header must start with time_index,target", row=1)
        table = {}
        for number, record in enumerate(reader, start=2):
            if len(record) < 2:
                raise SchemaError("expected at least 2 cells", row=number)
            try:
                t = int(record[0])
            except ValueError as exc:
                raise SchemaError(
                    f"column 'time_index': cannot parse {record[0]!r}", row=number
                ) from exc
            cell = record[1].strip()
            if cell == "":
                continue
            try:
                table[t] = float(cell)
            except ValueError as exc:
                raise SchemaError(
                    f"column 'target': cannot parse {cell!r}", row=number
                ) from exc
    return table


def _do_prepare(params, inputs, outdir):
    posts = read_posts(inputs["posts"])
    report = {"n_posts_read": len(posts)}

    # Per-post weights: either flat 1.0 or calibrated classifier scores.
    weight_of_user = {}
    if params["trust"]:
        ids, features, labels = read_user_table(inputs["users"])
        labeled = ~np.isnan(labels)
        if labeled.sum() < 2:
            raise DegenerateLabelsError("need at least two labeled users")
        model, cv_accuracy = train_trust(
            features[labeled],
            labels[labeled].astype(bool),
            folds=params["trust_folds"],
        )
        probs = model.predict_proba(features)
        probs = np.clip(probs, 1e-12, 1.0 - 1e-12)
        weights = calibrate_exponential(probs)
        weight_of_user = dict(zip(ids, weights))
        report["trust_cv_accuracy"] = cv_accuracy
    scores = np.array([weight_of_user.get(p.user_id, 1.0) for p in posts])

    if params["drop_clusters"]:
        embeddings = np.stack([p.features for p in posts])
        clustering = kmeans_cluster(
            embeddings, k=params["cluster_k"], seed=params["seed"]
        )
        keep = filter_clusters(posts, clustering.assignments, params["drop_clusters"])
        kept_index = {id(p) for p in keep}
        scores = np.array([s for p, s in zip(posts, scores) if id(p) in kept_index])
        report["cluster_sizes"] = [
            int((clustering.assignments == j).sum()) for j in range(params["cluster_k"])
        ]
        report["dropped_clusters"] = sorted(params["drop_clusters"])
        report["n_posts_after_filter"] = len(keep)
        posts = keep
        if not posts:
            raise ConfigError("cluster filter removed every post")

    buckets, matrix, stale = aggregate_series(
        posts, scores, bucket=params["bucket"]
    )
    report["n_buckets"] = int(buckets.shape[0])
    report["stale_buckets"] = [int(b) for b in buckets[stale]]

    window = params["smooth"]
    smoothed = smooth(matrix, window)
    out_buckets = buckets[window - 1 :]

    targets = np.zeros(out_buckets.shape[0])
    observed = np.zeros(out_buckets.shape[0], dtype=bool)
    if inputs.get("targets"):
        table = _read_target_table(inputs["targets"])
        raw = np.array([table.get(int(b), np.nan) for b in buckets])
        raw_mask = ~np.isnan(raw)
        from numpy.lib.stride_tricks import sliding_window_view

        if window == 1:
            targets = np.where(raw_mask, raw, 0.0)
            observed = raw_mask
        else:
            windows_ok = sliding_window_view(raw_mask, window).all(axis=1)
            values = sliding_window_view(np.where(raw_mask, raw, 0.0), window).mean(
                axis=1
            )
            targets = np.where(windows_ok, values, 0.0)
            observed = windows_ok

    pca_payload = None
    if params.get("pca_fraction") is not None:
        projection = pca_fit(smoothed, params["pca_fraction"])
        smoothed = pca_transform(projection, smoothed)
        pca_payload = {
            "mean": [float(v) for v in projection.mean_vector],
            "components": [[float(v) for v in row] for row in projection.components],
            "explained_variance": [float(v) for v in projection.explained_variance],
            "total_variance": projection.total_variance,
            "explained_fraction": projection.explained_fraction,
        }
        report["pca_components"] = projection.n_components

    frame = TimeSeriesFrame(out_buckets, smoothed, targets, observed)
    write_frame(frame, outdir / "covariates.csv")
    outputs = ["covariates.csv"]
    if pca_payload is not None:
        write_json(outdir / "pca.json", pca_payload)
        outputs.append("pca.json")
    report["n_rows_out"] = len(frame)
    report["n_features_out"] = frame.n_features
    write_json(outdir / "prepare_report.json", report)
    outputs.append("prepare_report.json")
    return outputs


_COMMANDS = {
    "synth": _do_synth,
    "prepare": _do_prepare,
    "monitor": _do_monitor,
    "reduce": _do_reduce,
    "baseline": _do_baseline,
}


def _execute(command, params, inputs, outdir):
    out = ensure_outdir(outdir)
    outputs = _COMMANDS[command](params, inputs, out)
    write_json(
        out / "manifest.json",
        {
            "tool": "gpnowcast",
            "version": __version__,
            "command": command,
            "params": params,
            "inputs": inputs,
            "outdir": str(out),
            "outputs": outputs,
        },
    )
    return EXIT_OK


# --- argument handling ----------------------------------------------------


def _handle_synth(args):
    spec_values = {}
    if args.spec:
        raw = parse_kv_file(args.spec)
        for key, text in raw.items():
            if key in _SYNTH_INT_KEYS:
                spec_values[key] = int(text)
            elif key in _SYNTH_FLOAT_KEYS:
                spec_values[key] = float(text)
            elif key == "link":
                spec_values[key] = text
            else:
                raise ConfigError(f"unknown spec key {key!r}")
    overrides = {
        "length": args.length,
        "n_features": args.features,
        "link": args.link,
        "phi": args.phi,
        "noise_std": args.noise_std,
        "seed": args.seed,
        "covariate_rho": args.covariate_rho,
        "level": args.level,
        "amplitude": args.amplitude,
        "n_noise_features": args.noise_features,
        "link_drift": args.link_drift,
    }
    for key, value in overrides.items():
        if value is not None:
            spec_values[key] = value
    if "length" not in spec_values:
        raise ConfigError("length is required (flag --length or spec file)")
    try:
        spec = SynthSpec(**spec_values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return _execute("synth", {"spec": asdict(spec)}, {}, args.outdir)


def _handle_monitor(args):
    params = {
        "config": _config_params(args),
        "restarts": args.restarts,
        "seed": args.seed,
        "threads": _resolve_threads(args.threads),
        "dcca_box": args.dcca_box,
        "pca_per_window": args.pca_per_window,
        "figures": not args.no_figures,
    }
    inputs = {"frame": str(Path(args.frame).resolve())}
    return _execute("monitor", params, inputs, args.outdir)


def _handle_reduce(args):
    cfg = ExperimentConfig.defaults(args.granularity)
    period = args.period if args.period is not None else cfg.survey_cadence
    params = {
        "config": _config_params(args),
        "period": period,
        "step": args.step,
        "warmup": args.warmup,
        "restarts": args.restarts,
        "seed": args.seed,
        "figures": not args.no_figures,
    }
    inputs = {"frame": str(Path(args.frame).resolve())}
    return _execute("reduce", params, inputs, args.outdir)


def _handle_baseline(args):
    if args.mode == "feature" and args.column is None:
        raise ConfigError("--mode feature requires --column")
    if args.mode == "time" and args.column is not None:
        raise ConfigError("--column only applies to --mode feature")
    params = {
        "config": _config_params(args),
        "mode": args.mode,
        "column": args.column,
        "restarts": args.restarts,
        "seed": args.seed,
        "threads": _resolve_threads(args.threads),
        "dcca_box": args.dcca_box,
        "figures": not args.no_figures,
    }
    inputs = {"frame": str(Path(args.frame).resolve())}
    return _execute("baseline", params, inputs, args.outdir)


def _handle_prepare(args):
    drop = []
    if args.drop_clusters:
        if args.no_clusters:
            raise ConfigError("--drop-clusters conflicts with --no-clusters")
        try:
            drop = sorted({int(part) for part in args.drop_clusters.split(",")})
        except ValueError as exc:
            raise ConfigError(
                f"--drop-clusters expects comma-separated integers, got "
                f"{args.drop_clusters!r}"
            ) from exc
    if args.trust and not args.users:
        raise ConfigError("--trust requires --users")
    params = {
        "trust": bool(args.trust),
        "trust_folds": args.trust_folds,
        "cluster_k": args.cluster_k,
        "drop_clusters": drop,
        "bucket": args.bucket,
        "smooth": args.smooth,
        "pca_fraction": args.pca,
        "seed": args.seed,
    }
    inputs = {"posts": str(Path(args.posts).resolve())}
    if args.users:
        inputs["users"] = str(Path(args.users).resolve())
    if args.targets:
        inputs["targets"] = str(Path(args.targets).resolve())
    return _execute("prepare", params, inputs, args.outdir)


def _handle_rerun(args):
    manifest = read_json(args.manifest)
    for key in ("command", "params", "inputs", "outdir"):
        if key not in manifest:
            raise ConfigError(f"manifest is missing the {key!r} field")
    command = manifest["command"]
    if command not in _COMMANDS:
        raise ConfigError(f"manifest names unknown command {command!r}")
    outdir = args.outdir if args.outdir else manifest["outdir"]
    return _execute(command, manifest["params"], manifest["inputs"], outdir)


def _add_window_flags(parser, with_threads=True):
    parser.add_argument(
        "--granularity",
        choices=["monthly", "daily"],
        default="monthly",
        help="picks the default window length (48 monthly, 730 daily)",
    )
    parser.add_argument("--w", type=int, default=None, help="training window length")
    parser.add_argument(
        "--delta",
        type=int,
        default=1,
        help="steps between training-window end and the predicted point",
    )
    parser.add_argument(
        "--alpha",
        type=int,
        default=0,
        help="covariate lag against the target window (positive pairs targets "
        "with later covariates)",
    )
    parser.add_argument("--restarts", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    if with_threads:
        parser.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker threads (default: NOWCAST_THREADS or 1); multi-threaded "
            "runs skip warm starting so steps stay independent",
        )
    parser.add_argument("--dcca-box", type=int, default=None)
    parser.add_argument("--no-figures", action="store_true")
    parser.add_argument("--outdir", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpnowcast",
        description="Nowcast a slow survey index from fast covariates with "
        "windowed GP regression.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="sample a synthetic frame")
    p_synth.add_argument("--spec", help="key=value spec file")
    p_synth.add_argument("--length", type=int)
    p_synth.add_argument("--features", type=int)
    p_synth.add_argument("--link", choices=["affine", "nonlinear"])
    p_synth.add_argument("--phi", type=float)
    p_synth.add_argument("--noise-std", type=float)
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--covariate-rho", type=float)
    p_synth.add_argument("--level", type=float)
    p_synth.add_argument("--amplitude", type=float)
    p_synth.add_argument("--noise-features", type=int)
    p_synth.add_argument("--link-drift", type=float)
    p_synth.add_argument("--outdir", required=True)
    p_synth.set_defaults(handler=_handle_synth)

    p_prepare = sub.add_parser(
        "prepare", help="aggregate per-post features into a covariate frame"
    )
    p_prepare.add_argument("posts", help="posts CSV (time_index,user_id,f_*)")
    p_prepare.add_argument("--users", help="users CSV (user_id,label,u_*)")
    p_prepare.add_argument(
        "--trust",
        action="store_true",
        help="weight posts by calibrated author-trust scores",
    )
    p_prepare.add_argument("--no-trust", action="store_true", help="explicit default")
    p_prepare.add_argument("--trust-folds", type=int, default=10)
    p_prepare.add_argument("--cluster-k", type=int, default=10)
    p_prepare.add_argument(
        "--drop-clusters",
        help="comma-separated cluster ids to drop (enables clustering)",
    )
    p_prepare.add_argument(
        "--no-clusters", action="store_true", help="explicit default"
    )
    p_prepare.add_argument("--bucket", type=int, default=1)
    p_prepare.add_argument("--smooth", type=int, default=1)
    p_prepare.add_argument(
        "--pca",
        type=float,
        nargs="?",
        const=0.90,
        default=None,
        help="project onto components explaining this variance fraction",
    )
    p_prepare.add_argument("--targets", help="targets CSV (time_index,target)")
    p_prepare.add_argument("--seed", type=int, default=0)
    p_prepare.add_argument("--outdir", required=True)
    p_prepare.set_defaults(handler=_handle_prepare)

    p_monitor = sub.add_parser("monitor", help="rolling-window nowcast")
    p_monitor.add_argument("frame", help="frame CSV")
    _add_window_flags(p_monitor)
    p_monitor.add_argument(
        "--pca-per-window",
        type=float,
        default=None,
        help="refit a PCA inside every training window at this variance fraction",
    )
    p_monitor.set_defaults(handler=_handle_monitor)

    p_reduce = sub.add_parser(
        "reduce", help="simulate a thinned survey cadence and impute it"
    )
    p_reduce.add_argument("frame", help="frame CSV")
    _add_window_flags(p_reduce, with_threads=False)
    p_reduce.add_argument("--period", type=int, default=None)
    p_reduce.add_argument("--step", type=int, default=2)
    p_reduce.add_argument("--warmup", type=int, default=None)
    p_reduce.set_defaults(handler=_handle_reduce)

    p_baseline = sub.add_parser("baseline", help="reference runs")
    p_baseline.add_argument("frame", help="frame CSV")
    p_baseline.add_argument("--mode", choices=["time", "feature"], required=True)
    p_baseline.add_argument("--column", type=int, default=None)
    _add_window_flags(p_baseline)
    p_baseline.set_defaults(handler=_handle_baseline)

    p_rerun = sub.add_parser("rerun", help="replay a run from its manifest")
    p_rerun.add_argument("manifest", help="manifest.json from a previous run")
    p_rerun.add_argument("--outdir", default=None, help="defaults to the original")
    p_rerun.set_defaults(handler=_handle_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NowcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

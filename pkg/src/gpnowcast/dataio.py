"""CSV and JSON persistence with byte-stable formatting.

Floats are written with ``repr``, which round-trips float64 exactly, and
line endings are pinned to "\\n", so writing the same objects twice gives
byte-identical files and parsing a written file recovers the exact values.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .frame import TimeSeriesFrame
from .metrics import MetricsRecord
from .monitor import MonitorResult, ReductionResult
from .pipeline import PostRecord


def _fmt(value: float) -> str:
    return repr(float(value))


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise SchemaError(f"column {column!r}: cannot parse {text!r}", row=row) from exc


def _feature_columns(header, prefix: str):
    """Names like f_0..f_{d-1} in index order; raises on gaps or strays."""
    expected_fixed = [c for c in header if not c.startswith(prefix)]
    count = len(header) - len(expected_fixed)
    names = [f"{prefix}{i}" for i in range(count)]
    missing = [n for n in names if n not in header]
    if missing:
        raise SchemaError(
            f"feature columns must be {prefix}0..{prefix}{count - 1}; missing {missing}",
            row=1,
        )
    return names


def write_frame(frame: TimeSeriesFrame, path) -> None:
    """Frame CSV: time_index, target, observed, f_0..f_{d-1}."""
    d = frame.n_features
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["time_index", "target", "observed"] + [f"f_{j}" for j in range(d)]
        )
        for i in range(len(frame)):
            observed = bool(frame.availability_mask[i])
            writer.writerow(
                [
                    str(int(frame.timestamps[i])),
                    _fmt(frame.targets[i]) if observed else "",
                    "1" if observed else "0",
                ]
                + [_fmt(v) for v in frame.covariates[i]]
            )


def read_frame(path) -> TimeSeriesFrame:
    """Parse a frame CSV written by write_frame (or shaped like it)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("file is empty", row=1) from None
        if header[:3] != ["time_index", "target", "observed"]:
            raise SchemaError(
                "header must start with time_index,target,observed", row=1
            )
        feature_names = _feature_columns(header[3:], "f_")
        width = 3 + len(feature_names)
        timestamps, targets, mask, rows = [], [], [], []
        for number, record in enumerate(reader, start=2):
            if len(record) != width:
                raise SchemaError(
                    f"expected {width} cells, got {len(record)}", row=number
                )
            try:
                timestamps.append(int(record[0]))
            except ValueError as exc:
                raise SchemaError(
                    f"column 'time_index': cannot parse {record[0]!r}", row=number
                ) from exc
            flag = record[2].strip()
            if flag not in ("0", "1"):
                raise SchemaError(
                    f"column 'observed': expected 0 or 1, got {flag!r}", row=number
                )
            observed = flag == "1"
            mask.append(observed)
            if observed:
                targets.append(_parse_float(record[1], number, "target"))
            else:
                targets.append(0.0)
            rows.append(
                [
                    _parse_float(cell, number, name)
                    for cell, name in zip(record[3:], feature_names)
                ]
            )
        if not rows:
            raise SchemaError("no data rows", row=2)
    try:
        return TimeSeriesFrame(
            np.array(timestamps),
            np.array(rows),
            np.array(targets),
            np.array(mask, dtype=bool),
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def read_posts(path) -> list:
    """Posts CSV: time_index, user_id, f_0..f_{d-1} -> list of PostRecord."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("file is empty", row=1) from None
        if header[:2] != ["time_index", "user_id"]:
            raise SchemaError("header must start with time_index,user_id", row=1)
        feature_names = _feature_columns(header[2:], "f_")
        width = 2 + len(feature_names)
        posts = []
        for number, record in enumerate(reader, start=2):
            if len(record) != width:
                raise SchemaError(
                    f"expected {width} cells, got {len(record)}", row=number
                )
            try:
                t = int(record[0])
            except ValueError as exc:
                raise SchemaError(
                    f"column 'time_index': cannot parse {record[0]!r}", row=number
                ) from exc
            features = [
                _parse_float(cell, number, name)
                for cell, name in zip(record[2:], feature_names)
            ]
            posts.append(PostRecord(t, record[1], np.array(features)))
    if not posts:
        raise SchemaError("no data rows", row=2)
    return posts


def read_user_table(path):
    """Users CSV: user_id, label, u_0..u_{k-1}.

    Returns (ids, features, labels) where labels holds NaN for unlabeled
    rows and 0.0/1.0 otherwise.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("file is empty", row=1) from None
        if header[:2] != ["user_id", "label"]:
            raise SchemaError("header must start with user_id,label", row=1)
        feature_names = _feature_columns(header[2:], "u_")
        width = 2 + len(feature_names)
        ids, rows, labels = [], [], []
        for number, record in enumerate(reader, start=2):
            if len(record) != width:
                raise SchemaError(
                    f"expected {width} cells, got {len(record)}", row=number
                )
            ids.append(record[0])
            cell = record[1].strip()
            if cell == "":
                labels.append(np.nan)
            elif cell in ("0", "1"):
                labels.append(float(cell))
            else:
                raise SchemaError(
                    f"column 'label': expected 0, 1 or empty, got {cell!r}",
                    row=number,
                )
            rows.append(
                [
                    _parse_float(c, number, name)
                    for c, name in zip(record[2:], feature_names)
                ]
            )
    if not ids:
        raise SchemaError("no data rows", row=2)
    return ids, np.array(rows), np.array(labels)


_PREDICTION_HEADER = [
    "time_index",
    "target",
    "mean",
    "variance",
    "lower",
    "upper",
    "observed",
    "imputed",
]


def write_monitor_csv(path, frame: TimeSeriesFrame, result: MonitorResult) -> None:
    """One row per prediction with the target (when observed) and a 2-sd band."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(_PREDICTION_HEADER)
        for pred in result.predictions:
            p = pred.time_index
            observed = bool(frame.availability_mask[p])
            sd = pred.variance**0.5
            writer.writerow(
                [
                    str(int(frame.timestamps[p])),
                    _fmt(frame.targets[p]) if observed else "",
                    _fmt(pred.mean),
                    _fmt(pred.variance),
                    _fmt(pred.mean - 2.0 * sd),
                    _fmt(pred.mean + 2.0 * sd),
                    "1" if observed else "0",
                    "0",
                ]
            )


def write_reduction_csv(path, frame: TimeSeriesFrame, result: ReductionResult) -> None:
    """One row per frame position; imputed rows carry mean, variance and band."""
    by_position = {p.time_index: p for p in result.predictions}
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(_PREDICTION_HEADER)
        for i in range(len(frame)):
            truth_known = bool(frame.availability_mask[i])
            imputed = bool(result.imputed_mask[i])
            pred = by_position.get(i)
            if pred is not None:
                sd = pred.variance**0.5
                mean_cell = _fmt(pred.mean)
                var_cell = _fmt(pred.variance)
                lower_cell = _fmt(pred.mean - 2.0 * sd)
                upper_cell = _fmt(pred.mean + 2.0 * sd)
            else:
                mean_cell = var_cell = lower_cell = upper_cell = ""
            writer.writerow(
                [
                    str(int(frame.timestamps[i])),
                    _fmt(frame.targets[i]) if truth_known else "",
                    mean_cell,
                    var_cell,
                    lower_cell,
                    upper_cell,
                    "0" if imputed else "1",
                    "1" if imputed else "0",
                ]
            )


def write_metrics_json(path, metrics: MetricsRecord | None, extra: dict | None = None) -> None:
    """Metrics JSON with explicit nulls for undefined values."""
    payload = dict(extra) if extra else {}
    payload["metrics"] = metrics.to_dict() if metrics is not None else None
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path) -> dict:
    with open(path) as handle:
        return json.load(handle)


def parse_kv_file(path) -> dict:
    """Flat key=value config: one pair per line, # comments, blank lines ok."""
    values = {}
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise SchemaError(f"expected key=value, got {stripped!r}", row=number)
            key, _, value = stripped.partition("=")
            key = key.strip()
            if not key:
                raise SchemaError("empty key", row=number)
            values[key] = value.strip()
    return values


def ensure_outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out

"""Data ingestion, preprocessing and run outputs.

Preprocessing applies, in fixed order: Butterworth bandpass (forward-pass,
causal), downsampling (keep every k-th sample), first-order differencing, and
per-series standardization. Causal filtering is deliberate: zero-phase
(forward-backward) filtering would smear change-point timing; the choice is
recorded in the run manifest.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DataError, ParameterError


@dataclass
class RawSeriesSet:
    """Raw multivariate recording: one row per series."""

    series_labels: list
    values: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] < 2:
            raise DataError("all series must share length >= 2")
        if len(self.series_labels) != self.values.shape[0]:
            raise DataError("one label per series required")
        if len(set(self.series_labels)) != len(self.series_labels):
            raise DataError("series labels must be unique")
        if self.sample_rate_hz <= 0:
            raise ParameterError("sample rate must be positive")


@dataclass
class ObservationMatrix:
    """Model-ready data: d x T matrix plus per-series pre-sample lag context.

    The lag context holds values at times <= 0 used to form lagged regressors
    (its last column is time 0); it defaults to zeros, the neutral imputation
    for standardized data.
    """

    y: np.ndarray
    lag_context: np.ndarray | None = None
    labels: list | None = None

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(self.y)):
            raise DataError("observation matrix contains non-finite values")
        if self.lag_context is not None:
            self.lag_context = np.atleast_2d(np.asarray(self.lag_context, dtype=float))
            if self.lag_context.shape[0] != self.y.shape[0]:
                raise DataError("lag context must have one row per series")

    @property
    def d(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def L(self) -> int:
        return 0 if self.lag_context is None else self.lag_context.shape[1]


@dataclass
class PreprocessConfig:
    """Subset of {bandpass, downsample, difference, standardize}, fixed order."""

    bandpass: tuple | None = None        # (low_hz, high_hz, order)
    downsample: int = 1
    difference: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.downsample < 1:
            raise ParameterError("downsample factor must be >= 1")

    def describe(self) -> dict:
        return {
            "bandpass": list(self.bandpass) if self.bandpass else None,
            "filter_mode": "causal-forward" if self.bandpass else None,
            "downsample": self.downsample,
            "difference": self.difference,
            "standardize": self.standardize,
        }


def bandpass_filter(x, low_hz: float, high_hz: float, order: int, rate_hz: float):
    """Forward-pass Butterworth bandpass (bilinear-transformed analog prototype)."""
    if not (0 < low_hz < high_hz < rate_hz / 2):
        raise ParameterError(
            f"need 0 < low < high < rate/2, got ({low_hz}, {high_hz}) at {rate_hz} Hz")
    if order < 1:
        raise ParameterError("filter order must be >= 1")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot filter non-finite input")
    b, a = signal.butter(order, [low_hz, high_hz], btype="band", fs=rate_hz)
    return signal.lfilter(b, a, x, axis=-1)


def standardize(x):
    """Zero mean, unit standard deviation per series (population convention)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sd = x.std(axis=1, keepdims=True)
    if np.any(sd <= 0):
        raise DataError(f"zero variance in series {np.flatnonzero(sd.ravel() <= 0)}")
    return (x - x.mean(axis=1, keepdims=True)) / sd


def preprocess(raw: RawSeriesSet, config: PreprocessConfig) -> ObservationMatrix:
    """Apply the configured pipeline and wrap the result.

    Deterministic; identical input and config give bit-identical output.
    """
    x = raw.values
    if config.bandpass is not None:
        low, high, order = config.bandpass
        x = bandpass_filter(x, low, high, int(order), raw.sample_rate_hz)
    if config.downsample > 1:
        x = x[:, ::config.downsample]
    if config.difference:
        x = x[:, 1:] - x[:, :-1]
    if x.shape[1] < 3:
        raise DataError(f"only {x.shape[1]} samples remain after preprocessing")
    if config.standardize:
        x = standardize(x)
    return ObservationMatrix(np.ascontiguousarray(x), labels=list(raw.series_labels))


def load_csv(path, sample_rate_hz: float = 1.0) -> RawSeriesSet:
    """Read a header-plus-columns CSV (one column per series, one row per time)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        labels = [h.strip() for h in header]
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(labels):
                raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(labels)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(k for k, c in enumerate(row) if not _is_float(c))
                raise DataError(
                    f"{path}: non-numeric cell at row {r}, column {bad + 1}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 rows of data")
    return RawSeriesSet(labels, np.array(rows, dtype=float).T, sample_rate_hz)


def _is_float(cell) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def write_matrix_csv(path, matrix, header) -> None:
    """Matrix as CSV with %.17g cells (round-trips float64 exactly)."""
    matrix = np.atleast_2d(matrix)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in matrix:
            writer.writerow([f"{v:.17g}" for v in row])


def read_matrix_csv(path):
    """Inverse of write_matrix_csv: (matrix, header)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader if row]
    return np.array(rows), header


def write_outputs(summary, out_dir, manifest_extra=None) -> dict:
    """Write a run's outputs: per-time change probabilities, the edge
    probability matrix, and a JSON manifest. Returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    d, T = summary.cp_prob.shape
    labels = summary.labels or [f"series{j}" for j in range(d)]
    paths = {
        "cp_prob": os.path.join(out_dir, "cp_prob.csv"),
        "edge_prob": os.path.join(out_dir, "edge_prob.csv"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    write_matrix_csv(paths["cp_prob"], summary.cp_prob.T, labels)
    write_matrix_csv(paths["edge_prob"], summary.edge_prob, labels)
    manifest = {
        "diagnostics": _jsonable(summary.diagnostics),
        "log_evidence": summary.log_evidence,
        "labels": labels,
    }
    if manifest_extra:
        manifest.update(_jsonable(manifest_extra))
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj

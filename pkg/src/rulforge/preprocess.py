"""Smoothing, normalization, labelling, and window extraction.

Normalization statistics are always fitted on training data and applied to
both splits; constant columns map to 0 under either scheme. The piecewise
remaining-life target is min(cap, failure_cycle - t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cmapss import EngineSeries
from .errors import (
    AllColumnsDroppedError,
    AlphaOutOfRangeError,
    ColumnMismatchError,
    ConfigError,
    EmptySeriesError,
    ShapeMismatchError,
    TooFewRowsError,
    WindowOutOfRangeError,
)
from .frame import FeatureFrame

DEFAULT_RUL_CAP = 130
DEFAULT_WINDOW_LENGTH = 30
DEFAULT_EMA_ALPHA = 0.1
SMOOTHING_METHODS = ("ema", "sma", "none")
NORMALIZATION_METHODS = ("zscore", "minmax")


@dataclass(slots=True)
class SmoothingConfig:
    method: str = "ema"
    alpha: float = DEFAULT_EMA_ALPHA
    window: int = 5

    def __post_init__(self):
        if self.method not in SMOOTHING_METHODS:
            raise ConfigError(f"unknown smoothing method {self.method!r}")
        if self.method == "ema" and not (0.0 < self.alpha <= 1.0):
            raise AlphaOutOfRangeError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.method == "sma" and self.window < 1:
            raise WindowOutOfRangeError(f"window must be >= 1, got {self.window}")


@dataclass(slots=True)
class RulTargetConfig:
    cap: int = DEFAULT_RUL_CAP

    def __post_init__(self):
        if self.cap < 1:
            raise ConfigError(f"RUL cap must be >= 1, got {self.cap}")


def smooth_ema(series: np.ndarray, alpha: float) -> np.ndarray:
    """Exponential moving average along axis 0, seeded with the first sample.

    out[0] = in[0]; out[t] = alpha * in[t] + (1 - alpha) * out[t-1].
    Accepts 1-D series or 2-D (time, features) blocks.
    """
    if not (0.0 < alpha <= 1.0):
        raise AlphaOutOfRangeError(f"alpha must be in (0, 1], got {alpha}")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise EmptySeriesError("cannot smooth an empty series")
    out = np.empty_like(x)
    out[0] = x[0]
    keep = 1.0 - alpha
    for t in range(1, x.shape[0]):
        out[t] = alpha * x[t] + keep * out[t - 1]
    return out


def smooth_sma(series: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average with a growing window at the head.

    out[t] = mean(in[max(0, t-window+1) .. t]), so the first window-1
    positions average everything seen so far.
    """
    if window < 1:
        raise WindowOutOfRangeError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise EmptySeriesError("cannot smooth an empty series")
    n = x.shape[0]
    w = min(window, n)
    out = np.empty_like(x)
    for t in range(w - 1):
        out[t] = x[: t + 1].mean(axis=0)
    out[w - 1:] = sliding_window_view(x, w, axis=0).mean(axis=-1)
    return out


def smooth_frame(frame: FeatureFrame, cfg: SmoothingConfig) -> FeatureFrame:
    """Apply the configured smoother independently per engine and column."""
    if cfg.method == "none":
        return frame.with_values(frame.values.copy(), "smooth:none")
    out = np.empty_like(frame.values)
    for _, rows in frame.engine_groups():
        block = frame.values[rows]
        if cfg.method == "ema":
            out[rows] = smooth_ema(block, cfg.alpha)
        else:
            out[rows] = smooth_sma(block, cfg.window)
    note = f"smooth:{cfg.method}"
    return frame.with_values(out, note)


@dataclass(slots=True)
class NormalizationStats:
    """Per-column statistics fitted on the training split."""

    method: str
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    vmin: np.ndarray
    vmax: np.ndarray


def normalize_fit(frame: FeatureFrame, method: str = "zscore") -> NormalizationStats:
    """Fit column statistics. Standard deviation uses the 1/N convention."""
    if method not in NORMALIZATION_METHODS:
        raise ConfigError(f"unknown normalization method {method!r}")
    if frame.n_rows < 2:
        raise TooFewRowsError(f"need at least 2 rows to fit, got {frame.n_rows}")
    values = frame.values
    return NormalizationStats(
        method=method,
        columns=frame.columns,
        mean=values.mean(axis=0),
        std=values.std(axis=0),
        vmin=values.min(axis=0),
        vmax=values.max(axis=0),
    )


def normalize_apply(frame: FeatureFrame, stats: NormalizationStats) -> FeatureFrame:
    """Apply fitted statistics; columns that were constant at fit time map to 0."""
    if frame.columns != stats.columns:
        raise ColumnMismatchError(
            f"frame columns {frame.columns} do not match fitted {stats.columns}"
        )
    if stats.method == "zscore":
        flat = stats.std == 0.0
        denom = np.where(flat, 1.0, stats.std)
        out = (frame.values - stats.mean) / denom
    else:
        span = stats.vmax - stats.vmin
        flat = span == 0.0
        denom = np.where(flat, 1.0, span)
        out = (frame.values - stats.vmin) / denom
    out[:, flat] = 0.0
    return frame.with_values(out, f"normalize:{stats.method}")


def normalize_invert(frame: FeatureFrame, stats: NormalizationStats) -> FeatureFrame:
    """Undo normalize_apply. Constant columns come back as their fitted value."""
    if frame.columns != stats.columns:
        raise ColumnMismatchError("frame columns do not match fitted stats")
    if stats.method == "zscore":
        out = frame.values * stats.std + stats.mean
        flat = stats.std == 0.0
        out[:, flat] = stats.mean[flat]
    else:
        span = stats.vmax - stats.vmin
        out = frame.values * span + stats.vmin
        flat = span == 0.0
        out[:, flat] = stats.vmin[flat]
    return frame.with_values(out, "denormalize")


def label_piecewise_rul(series: EngineSeries, cfg: RulTargetConfig) -> np.ndarray:
    """Capped linear remaining life: min(cap, failure_cycle - t) per cycle."""
    cycles = np.array([r.cycle for r in series.records], dtype=np.float64)
    return np.minimum(float(cfg.cap), series.max_cycle - cycles)


def label_test_rul(series: EngineSeries, true_rul: int, cfg: RulTargetConfig) -> np.ndarray:
    """Per-cycle remaining life of a truncated series, capped.

    The last observed cycle has true_rul cycles left, so cycle t has
    true_rul + (last_cycle - t).
    """
    cycles = np.array([r.cycle for r in series.records], dtype=np.float64)
    return np.minimum(float(cfg.cap), true_rul + (series.max_cycle - cycles))


def drop_constant_features(
    frame: FeatureFrame, tol: float = 1e-12
) -> tuple[FeatureFrame, list[str]]:
    """Remove columns whose population variance is <= tol.

    Returns the reduced frame and the dropped names, in original order.
    """
    variances = frame.values.var(axis=0)
    keep = [name for name, v in zip(frame.columns, variances) if v > tol]
    dropped = [name for name, v in zip(frame.columns, variances) if v <= tol]
    if not keep:
        raise AllColumnsDroppedError("every column is constant at this tolerance")
    if not dropped:
        return frame, []
    return frame.select(keep, note="drop_constant"), dropped


@dataclass(slots=True)
class WindowSet:
    """Fixed-length training or test windows plus aligned labels.

    data has shape (n_windows, window_len, n_features); labels hold the
    remaining life at each window's last cycle. units and last_cycles
    identify where each window came from.
    """

    data: np.ndarray
    labels: np.ndarray
    window_len: int
    units: np.ndarray
    last_cycles: np.ndarray
    columns: tuple[str, ...]
    cap: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        n = self.data.shape[0]
        if self.data.ndim != 3:
            raise ShapeMismatchError("window data must be 3-D")
        if self.data.shape[1] != self.window_len:
            raise ShapeMismatchError("window data and window_len disagree")
        if self.data.shape[2] != len(self.columns):
            raise ShapeMismatchError("window data and columns disagree")
        if self.labels.shape != (n,):
            raise ShapeMismatchError("one label per window required")
        if n and (self.labels.min() < 0 or self.labels.max() > self.cap):
            raise ShapeMismatchError("labels must lie in [0, cap]")

    @property
    def n_windows(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[2]

    def take(self, index: np.ndarray) -> "WindowSet":
        """Subset rows by boolean mask or integer index array."""
        return WindowSet(
            data=self.data[index],
            labels=self.labels[index],
            window_len=self.window_len,
            units=self.units[index],
            last_cycles=self.last_cycles[index],
            columns=self.columns,
            cap=self.cap,
        )


def _pad_front(block: np.ndarray, length: int) -> np.ndarray:
    """Left-pad a (rows, features) block to `length` by repeating row 0."""
    missing = length - block.shape[0]
    if missing <= 0:
        return block
    return np.concatenate([np.repeat(block[:1], missing, axis=0), block])


def make_train_windows(
    frame: FeatureFrame,
    labels: np.ndarray,
    window_len: int,
    stride: int = 1,
    cap: float = float(DEFAULT_RUL_CAP),
) -> WindowSet:
    """Slide a length-L window over each engine at the given stride.

    Every contiguous window is emitted, labelled with the remaining life at
    its last cycle. Engines shorter than L yield a single window left-padded
    by repeating their first row.
    """
    if window_len < 1:
        raise WindowOutOfRangeError(f"window_len must be >= 1, got {window_len}")
    if stride < 1:
        raise WindowOutOfRangeError(f"stride must be >= 1, got {stride}")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (frame.n_rows,):
        raise ShapeMismatchError("labels must align with frame rows")
    data, lab, units, last = [], [], [], []
    for unit, rows in frame.engine_groups():
        block = frame.values[rows]
        block_labels = labels[rows]
        block_cycles = frame.cycles[rows]
        m = block.shape[0]
        if m < window_len:
            data.append(_pad_front(block, window_len))
            lab.append(block_labels[-1])
            units.append(unit)
            last.append(block_cycles[-1])
            continue
        for start in range(0, m - window_len + 1, stride):
            end = start + window_len
            data.append(block[start:end])
            lab.append(block_labels[end - 1])
            units.append(unit)
            last.append(block_cycles[end - 1])
    n = len(data)
    return WindowSet(
        data=np.array(data) if n else np.empty((0, window_len, frame.n_columns)),
        labels=np.array(lab, dtype=np.float64),
        window_len=window_len,
        units=np.array(units, dtype=np.int64),
        last_cycles=np.array(last, dtype=np.int64),
        columns=frame.columns,
        cap=float(cap),
    )


def make_test_windows(
    frame: FeatureFrame,
    true_rul: Sequence[int],
    window_len: int,
    cap: float = float(DEFAULT_RUL_CAP),
) -> WindowSet:
    """One window per engine covering its final window_len cycles.

    Short engines are left-padded with their first row. Labels are the
    supplied true remaining-life values, capped.
    """
    if window_len < 1:
        raise WindowOutOfRangeError(f"window_len must be >= 1, got {window_len}")
    groups = list(frame.engine_groups())
    if len(true_rul) != len(groups):
        raise ShapeMismatchError(
            f"{len(true_rul)} RUL values for {len(groups)} engines"
        )
    data, lab, units, last = [], [], [], []
    for (unit, rows), rul in zip(groups, true_rul):
        block = frame.values[rows]
        data.append(_pad_front(block[-window_len:], window_len))
        lab.append(min(float(rul), float(cap)))
        units.append(unit)
        last.append(frame.cycles[rows][-1])
    n = len(data)
    return WindowSet(
        data=np.array(data) if n else np.empty((0, window_len, frame.n_columns)),
        labels=np.array(lab, dtype=np.float64),
        window_len=window_len,
        units=np.array(units, dtype=np.int64),
        last_cycles=np.array(last, dtype=np.int64),
        columns=frame.columns,
        cap=float(cap),
    )

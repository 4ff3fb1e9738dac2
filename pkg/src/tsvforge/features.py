"""Forecast design matrices: embeddings, sinusoidal time features, hybrid features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, EmptyDatasetError

DAY_HOURS = 24.0
WEEK_HOURS = 168.0
DEFAULT_LAGS_HOURS = (1, 2, 3, 24, 48, 168)
DEFAULT_ROLL_HOURS = (24, 168)


@dataclass
class TimeIndex:
    """Fractional hour-of-day and hour-of-week for every timestamp."""

    hour_of_day: np.ndarray
    hour_of_week: np.ndarray

    @classmethod
    def from_timestamps(cls, timestamps) -> "TimeIndex":
        ts = np.asarray(timestamps, dtype="datetime64[s]")
        days = ts.astype("datetime64[D]")
        hod = (ts - days).astype(np.int64) / 3600.0
        # 1970-01-01 was a Thursday; shift so Monday 00:00 is hour 0
        dow = (days.astype(np.int64) + 3) % 7
        return cls(hod, dow * DAY_HOURS + hod)

    @classmethod
    def from_hours(cls, hours) -> "TimeIndex":
        hours = np.asarray(hours, dtype=np.float64)
        return cls(np.mod(hours, DAY_HOURS), np.mod(hours, WEEK_HOURS))

    def __len__(self):
        return len(self.hour_of_day)

    def __getitem__(self, idx) -> "TimeIndex":
        return TimeIndex(self.hour_of_day[idx], self.hour_of_week[idx])


def time_features(time) -> np.ndarray:
    """[T, 2] daily sine/cosine pair of the hour of day."""
    hours = time.hour_of_day if isinstance(time, TimeIndex) else np.asarray(time, dtype=np.float64)
    angle = 2.0 * np.pi * hours / DAY_HOURS
    return np.column_stack([np.sin(angle), np.cos(angle)])


@dataclass
class ForecastExamples:
    X: np.ndarray
    Y: np.ndarray
    t_index: np.ndarray

    def __len__(self):
        return self.X.shape[0]


def target_windows(targets: np.ndarray, horizon: int) -> np.ndarray:
    """Row t holds targets[:, t+1 : t+1+horizon] flattened as [horizon, D]."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    D, T = targets.shape
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    if T <= horizon:
        raise EmptyDatasetError(f"series of length {T} too short for horizon {horizon}")
    win = sliding_window_view(targets[:, 1:], horizon, axis=1)  # [D, T-h, h]
    return np.ascontiguousarray(win.transpose(1, 2, 0)).reshape(T - horizon, horizon * D)


def build_forecast_examples(reps: np.ndarray, targets: np.ndarray, horizon: int,
                            time_feats: np.ndarray | None = None) -> ForecastExamples:
    """Direct multi-horizon examples anchored at every t in [0, T - horizon).

    X row t is the representation column at t (plus the time features of t
    when given); Y row t is the next ``horizon`` target vectors, flattened.
    """
    reps = np.asarray(reps, dtype=np.float64)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if reps.shape[1] != targets.shape[1]:
        raise DimensionError(f"reps cover {reps.shape[1]} steps but targets cover {targets.shape[1]}")
    Y = target_windows(targets, horizon)
    n = Y.shape[0]
    X = reps[:, :n].T
    if time_feats is not None:
        time_feats = np.asarray(time_feats, dtype=np.float64)
        if time_feats.shape[0] != reps.shape[1]:
            raise DimensionError("time features and representations differ in length")
        X = np.hstack([X, time_feats[:n]])
    return ForecastExamples(np.ascontiguousarray(X), Y, np.arange(n))


def default_lags(step_hours: float = 1.0) -> tuple[int, ...]:
    per_hour = max(1, int(round(1.0 / step_hours)))
    return tuple(lag * per_hour for lag in DEFAULT_LAGS_HOURS)


def default_roll_windows(step_hours: float = 1.0) -> tuple[int, ...]:
    per_hour = max(1, int(round(1.0 / step_hours)))
    return tuple(w * per_hour for w in DEFAULT_ROLL_HOURS)


def hybrid_features(series, time: TimeIndex, lags=DEFAULT_LAGS_HOURS, roll_windows=DEFAULT_ROLL_HOURS,
                    weekly_period: float = WEEK_HOURS, harmonics: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Engineered features for the linear + boosted-residual forecaster.

    Columns, in order: one lagged value per lag; rolling mean then population
    std for each trailing window (anchor included); sin/cos of the daily and
    weekly cycles for harmonics 1..``harmonics``. Returns ``(F, valid)``
    where ``valid[t]`` is False for anchors without enough history.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    T = x.size
    if len(time) != T:
        raise DimensionError("time index and series differ in length")
    for v in (*lags, *roll_windows):
        if v < 1 or v >= T:
            raise ConfigurationError(f"lag/window {v} invalid for series of length {T}")
    cols = []
    for lag in lags:
        col = np.full(T, np.nan)
        col[lag:] = x[:-lag]
        cols.append(col)
    for w in roll_windows:
        win = sliding_window_view(x, w)  # row i covers x[i : i+w], anchor i+w-1
        mean = np.full(T, np.nan)
        std = np.full(T, np.nan)
        mean[w - 1:] = win.mean(axis=1)
        std[w - 1:] = win.std(axis=1)
        cols += [mean, std]
    for k in range(1, harmonics + 1):
        for hours, period in ((time.hour_of_day, DAY_HOURS), (time.hour_of_week, weekly_period)):
            angle = 2.0 * np.pi * k * np.asarray(hours) / period
            cols += [np.sin(angle), np.cos(angle)]
    F = np.column_stack(cols)
    history = max(max(lags, default=0), max(roll_windows, default=1) - 1)
    valid = np.arange(T) >= history
    return F, valid

"""ETT-style CSV ingestion, chronological splits and z-score normalisation."""

from __future__ import annotations

import calendar
import csv
import hashlib
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractViolation, DataError

ETT_TARGET = "OT"
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class SeriesDataset:
    """A regularly sampled multivariate series, values laid out [D, T].

    ``splits`` holds (train_end, val_end, test_end): train rows are
    [0, train_end), validation [train_end, val_end), test [val_end, test_end).
    """

    timestamps: np.ndarray
    values: np.ndarray
    feature_names: list[str]
    target_mode: str = "multivariate"
    splits: tuple[int, int, int] | None = None
    norm_stats: NormStats | None = None
    name: str = "series"
    source_hash: str = field(default="", repr=False)

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def D(self) -> int:
        return self.values.shape[0]

    @property
    def stride(self) -> np.timedelta64:
        return self.timestamps[1] - self.timestamps[0]

    @property
    def step_hours(self) -> float:
        if self.T < 2:
            return 1.0
        return float(self.stride / np.timedelta64(1, "s")) / 3600.0

    def _require_splits(self):
        if self.splits is None:
            raise ContractViolation("dataset has not been split")
        return self.splits

    def segment(self, part: str) -> slice:
        train_end, val_end, test_end = self._require_splits()
        return {"train": slice(0, train_end), "val": slice(train_end, val_end),
                "test": slice(val_end, test_end)}[part]

    def train_values(self) -> np.ndarray:
        return self.values[:, self.segment("train")]


def _parse_time(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"row {row}, column 'date': unparseable timestamp {text!r}") from exc


def load_csv(path, name: str | None = None) -> SeriesDataset:
    """Read a CSV whose first column is a timestamp and the rest numeric."""
    path = Path(path)
    raw = path.read_bytes()
    rows = list(csv.reader(raw.decode("utf-8-sig").splitlines()))
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DataError(f"{path}: need a date column and at least one value column")
    names = header[1:]
    stamps = []
    values = np.empty((len(rows) - 1, len(names)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"row {i}: expected {len(header)} cells, found {len(row)}")
        stamps.append(_parse_time(row[0], i))
        for j, cell in enumerate(row[1:]):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"row {i}, column {names[j]!r}: not a number ({cell!r})") from None
            if not np.isfinite(values[i - 2, j]):
                raise DataError(f"row {i}, column {names[j]!r}: missing value")
    ts = np.array(stamps, dtype="datetime64[s]")
    _check_time_axis(ts)
    return SeriesDataset(ts, values.T.copy(), names, name=name or path.stem,
                         source_hash=hashlib.sha256(raw).hexdigest())


def _check_time_axis(ts: np.ndarray):
    if ts.size < 2:
        return
    steps = np.diff(ts)
    bad = np.nonzero(steps <= np.timedelta64(0, "s"))[0]
    if bad.size:
        raise DataError(f"timestamps not strictly increasing at row {bad[0] + 3}")
    irregular = np.nonzero(steps != steps[0])[0]
    if irregular.size:
        raise DataError(f"irregular sampling stride at row {irregular[0] + 3}")


def write_csv(path, dataset: SeriesDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *dataset.feature_names])
        for t in range(dataset.T):
            stamp = dataset.timestamps[t].astype(datetime).strftime("%Y-%m-%d %H:%M:%S")
            w.writerow([stamp, *(repr(float(v)) for v in dataset.values[:, t])])
    return path


def select_target(ds: SeriesDataset, mode: str, target: str = ETT_TARGET) -> SeriesDataset:
    """Univariate keeps only ``target``; multivariate keeps every column."""
    if mode == "multivariate":
        return replace(ds, target_mode="multivariate")
    if mode != "univariate":
        raise ConfigurationError(f"unknown target mode {mode!r}")
    if target not in ds.feature_names:
        raise DataError(f"target column {target!r} not found in {ds.feature_names}")
    j = ds.feature_names.index(target)
    return replace(ds, values=ds.values[j:j + 1].copy(), feature_names=[target], target_mode="univariate",
                   norm_stats=None if ds.norm_stats is None
                   else NormStats(ds.norm_stats.mean[j:j + 1], ds.norm_stats.std[j:j + 1]))


def add_months(when: datetime, months: int) -> datetime:
    total = when.month - 1 + months
    year, month = when.year + total // 12, total % 12 + 1
    day = min(when.day, calendar.monthrange(year, month)[1])
    return when.replace(year=year, month=month, day=day)


def split_by_months(ds: SeriesDataset, train_months: int = 12, val_months: int = 4,
                    test_months: int = 4) -> SeriesDataset:
    """Calendar-month boundaries; each snaps to the first timestamp at or after it."""
    start = ds.timestamps[0].astype(datetime)
    marks = np.cumsum([train_months, val_months, test_months])
    bounds = [np.datetime64(add_months(start, int(m)), "s") for m in marks]
    if bounds[-1] > ds.timestamps[-1] + ds.stride:
        raise DataError(f"series spans less than {marks[-1]} months")
    idx = tuple(int(np.searchsorted(ds.timestamps, b, side="left")) for b in bounds)
    if not 0 < idx[0] < idx[1] < idx[2] <= ds.T:
        raise DataError(f"degenerate month split {idx}")
    return replace(ds, splits=idx)


def split_by_ratio(ds: SeriesDataset, ratios=(0.6, 0.2, 0.2)) -> SeriesDataset:
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) > 1 + 1e-9:
        raise ConfigurationError(f"bad split ratios {ratios}")
    cum = np.cumsum(ratios)
    idx = tuple(int(round(ds.T * c)) for c in cum)
    if not 0 < idx[0] < idx[1] < idx[2] <= ds.T:
        raise DataError(f"degenerate ratio split {idx} for T={ds.T}")
    return replace(ds, splits=idx)


def normalize(ds: SeriesDataset) -> SeriesDataset:
    """Per-feature z-score with statistics from the training rows only."""
    train = ds.train_values()
    mean = train.mean(axis=1)
    # a constant column's mean may be off by one ulp; pin it so the column maps to exact zeros
    constant = np.ptp(train, axis=1) == 0
    mean[constant] = train[constant, 0]
    std = np.maximum(train.std(axis=1), STD_FLOOR)
    values = (ds.values - mean[:, None]) / std[:, None]
    return replace(ds, values=values, norm_stats=NormStats(mean, std))


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values) * stats.std[:, None] + stats.mean[:, None]

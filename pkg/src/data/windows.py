"""Chronological splitting, z-score scaling and (input, target) windowing.

The raw series is cut at the cumulative split ratios first; windows are then
enumerated inside each segment, so no window straddles a boundary. Window
arrays are strided views over the segment and are only copied when a batch
is gathered.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field, field_validator

from src.data.datasets import RawDataset
from src.utils.errors import DataError


logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
_STD_FLOOR = 1e-8


class Scaler(BaseModel):
    """Per-channel z-score statistics fitted on the training segment."""

    mean: list[float] = Field(description="Mean per channel.")
    std: list[float] = Field(description="Standard deviation per channel, zero-variance guarded to 1.0.")

    @field_validator("std")
    def _positive_std(cls, v: list[float]) -> list[float]:
        if any(s <= 0 for s in v):
            raise ValueError("std entries must be positive")
        return v

    @classmethod
    def fit(cls, values: np.ndarray) -> "Scaler":
        flat = np.asarray(values, dtype=np.float64).reshape(-1, values.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        guarded = std < _STD_FLOOR
        if guarded.any():
            logger.warning("Channels %s have zero variance in the training range; std set to 1.0",
                           np.flatnonzero(guarded).tolist())
            std = np.where(guarded, 1.0, std)
        return cls(mean=mean.tolist(), std=std.tolist())

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - np.asarray(self.mean)) / np.asarray(self.std)

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * np.asarray(self.std) + np.asarray(self.mean)


@dataclass(frozen=True)
class WindowSplit:
    """All windows of one chronological segment.

    ``normalized`` and ``raw`` are the segment's L × N × C series; window ``w``
    reads inputs from steps ``[w, w + window)`` and targets from
    ``[w + window, w + window + horizon)`` of the segment.
    """

    name: str
    normalized: np.ndarray
    raw: np.ndarray
    window: int
    horizon: int
    offset: int

    def __len__(self) -> int:
        return max(self.normalized.shape[0] - self.window - self.horizon + 1, 0)

    @property
    def x(self) -> np.ndarray:
        """Normalized inputs, W × T × N × C."""
        return self._view(self.normalized, 0, self.window)

    @property
    def y(self) -> np.ndarray:
        """Normalized targets, W × τ × N × C."""
        return self._view(self.normalized, self.window, self.horizon)

    @property
    def y_raw(self) -> np.ndarray:
        """Targets in original units, W × τ × N × C."""
        return self._view(self.raw, self.window, self.horizon)

    @property
    def target_start(self) -> np.ndarray:
        """Raw-series index of each window's first target step."""
        return self.offset + self.window + np.arange(len(self), dtype=np.int64)

    def _view(self, series: np.ndarray, start: int, length: int) -> np.ndarray:
        count = len(self)
        if count == 0:
            return np.empty((0, length) + series.shape[1:])
        frames = sliding_window_view(series[start:start + count + length - 1], length, axis=0)
        return np.moveaxis(frames, -1, 1)

    def batch(self, indices: Sequence[int] | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Copy the selected windows out as (x, y, y_raw)."""
        indices = np.asarray(indices, dtype=np.intp)
        return self.x[indices].copy(), self.y[indices].copy(), self.y_raw[indices].copy()

    def iter_batches(
        self, batch_size: int, rng: Optional[np.random.Generator] = None
    ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """Yield (indices, x, y, y_raw); windows are shuffled when ``rng`` is given."""
        order = np.arange(len(self))
        if rng is not None:
            order = rng.permutation(order)
        for start in range(0, len(order), batch_size):
            indices = order[start:start + batch_size]
            yield (indices,) + self.batch(indices)


@dataclass(frozen=True)
class DatasetBundle:
    train: WindowSplit
    val: WindowSplit
    test: WindowSplit
    scaler: Scaler
    adjacency: np.ndarray
    window: int
    horizon: int
    interval_minutes: int
    boundaries: tuple[int, int, int]
    timestamps: Optional[np.ndarray] = None

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_channels(self) -> int:
        return self.train.raw.shape[-1]

    def split(self, name: str) -> WindowSplit:
        if name not in SPLIT_NAMES:
            raise ValueError(f"Unknown split '{name}', expected one of {SPLIT_NAMES}")
        return getattr(self, name)


def split_boundaries(n_steps: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3:
        raise DataError(f"expected three split ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be nonnegative and sum to 1, got {tuple(ratios)}")
    cumulative = np.cumsum(ratios)
    bounds = [int(np.floor(n_steps * c + 1e-9)) for c in cumulative[:2]]
    return bounds[0], bounds[1], n_steps


def make_windows(
    raw: RawDataset,
    window: int,
    horizon: int,
    ratios: Sequence[float] = (0.7, 0.1, 0.2),
) -> DatasetBundle:
    """Split ``raw`` chronologically, fit the scaler on the training segment and window every segment."""
    if window < 1 or horizon < 1:
        raise DataError(f"window and horizon must be at least 1, got T={window}, tau={horizon}")
    n_steps = raw.n_steps
    if n_steps < window + horizon:
        raise DataError(f"series of {n_steps} steps is too short for T={window} plus tau={horizon}")

    train_end, val_end, test_end = split_boundaries(n_steps, ratios)
    if train_end == 0:
        raise DataError(f"training segment is empty for ratios {tuple(ratios)}")
    scaler = Scaler.fit(raw.values[:train_end])
    normalized = scaler.transform(raw.values)

    splits = []
    for name, (start, stop) in zip(SPLIT_NAMES, ((0, train_end), (train_end, val_end), (val_end, test_end))):
        splits.append(WindowSplit(
            name=name,
            normalized=normalized[start:stop],
            raw=raw.values[start:stop],
            window=window,
            horizon=horizon,
            offset=start,
        ))
    train, val, test = splits
    if len(train) == 0:
        raise DataError(
            f"training segment of {train_end} steps is too short for T={window} plus tau={horizon}"
        )
    logger.info(
        "Windows T=%d tau=%d: train %d, val %d, test %d (boundaries %d/%d/%d)",
        window, horizon, len(train), len(val), len(test), train_end, val_end, test_end,
    )
    return DatasetBundle(
        train=train,
        val=val,
        test=test,
        scaler=scaler,
        adjacency=raw.adjacency,
        window=window,
        horizon=horizon,
        interval_minutes=raw.interval_minutes,
        boundaries=(train_end, val_end, test_end),
        timestamps=raw.timestamps,
    )

"""Historical-average baseline."""
import logging

import numpy as np

from src.utils.errors import ConfigError, ShapeError


logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60


def default_period(interval_minutes: int, has_timestamps: bool) -> int:
    """One week of steps when timestamps exist, otherwise one day."""
    days = 7 if has_timestamps else 1
    return max(days * MINUTES_PER_DAY // interval_minutes, 1)


def slot_means(train_raw: np.ndarray, period: int) -> tuple[np.ndarray, np.ndarray]:
    """Training mean per (slot, node, channel) and a mask of slots seen at least once."""
    if period < 1:
        raise ConfigError(f"historical average period must be positive, got {period}")
    steps = train_raw.shape[0]
    slots = np.arange(steps) % period
    sums = np.zeros((period,) + train_raw.shape[1:])
    np.add.at(sums, slots, train_raw)
    counts = np.bincount(slots, minlength=period)
    seen = counts > 0
    means = np.zeros_like(sums)
    means[seen] = sums[seen] / counts[seen].reshape((-1,) + (1,) * (train_raw.ndim - 1))
    return means, seen


def historical_average(
    train_raw: np.ndarray, target_start: np.ndarray, horizon: int, period: int
) -> np.ndarray:
    """Predict each target step as the training mean of its time-of-period slot, per node.

    ``train_raw`` is the L x N x C training segment starting at raw index 0 and
    ``target_start`` the raw index of each window's first target step. Slots
    the training range never covers fall back to the node's overall mean.
    Returns W x tau x N x C.
    """
    train_raw = np.asarray(train_raw, dtype=np.float64)
    if train_raw.ndim != 3:
        raise ShapeError(f"historical_average: expected L x N x C training values, got {train_raw.shape}")
    means, seen = slot_means(train_raw, period)
    unseen = int((~seen).sum())
    if unseen:
        logger.warning("%d of %d slots never appear in the training range; using node means", unseen, period)
        means[~seen] = train_raw.mean(axis=0)
    steps = np.asarray(target_start, dtype=np.int64)[:, None] + np.arange(horizon)[None, :]
    return means[steps % period]

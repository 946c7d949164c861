"""Masked MAE / RMSE / MAPE in original units, per horizon and per peak period."""
import csv
import io
from datetime import datetime, timezone
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from src.utils.errors import ShapeError


class MetricValues(BaseModel):
    mae: Optional[float] = Field(None, description="Mean absolute error; None when every entry is masked.")
    rmse: Optional[float] = Field(None, description="Root mean squared error.")
    mape: Optional[float] = Field(None, description="Mean absolute percentage error, in percent.")
    count: int = Field(0, description="Entries that passed the mask.")


class HorizonMetrics(MetricValues):
    horizon: int = Field(description="Prediction step, 1-based.")


class MetricReport(MetricValues):
    horizons: list[HorizonMetrics] = Field(default_factory=list, description="Breakdown per prediction step.")

    @property
    def mask_count(self) -> int:
        return self.count

    @property
    def final_step(self) -> Optional[HorizonMetrics]:
        return self.horizons[-1] if self.horizons else None

    def to_table(self, title: str = "") -> str:
        lines = [title] if title else []
        lines.append(f"{'horizon':>8}  {'MAE':>10}  {'RMSE':>10}  {'MAPE%':>10}  {'count':>8}")
        for row in self.horizons:
            lines.append(_table_row(str(row.horizon), row))
        lines.append(_table_row("average", self))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["horizon", "mae", "rmse", "mape_pct"])
        for row in self.horizons:
            writer.writerow([row.horizon, _csv_value(row.mae), _csv_value(row.rmse), _csv_value(row.mape)])
        writer.writerow(["all", _csv_value(self.mae), _csv_value(self.rmse), _csv_value(self.mape)])
        return buffer.getvalue()


def _format(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def _table_row(label: str, values: MetricValues) -> str:
    return f"{label:>8}  {_format(values.mae):>10}  {_format(values.rmse):>10}  {_format(values.mape):>10}  {values.count:>8d}"


def _csv_value(value: Optional[float]) -> str:
    return "" if value is None else repr(value)


def masked_values(
    prediction: np.ndarray, truth: np.ndarray, null_value: float = 0.0, mask: Optional[np.ndarray] = None
) -> MetricValues:
    keep = truth != null_value
    if mask is not None:
        keep = keep & mask
    count = int(keep.sum())
    if count == 0:
        return MetricValues(count=0)
    error = prediction[keep] - truth[keep]
    mae = float(np.mean(np.abs(error)))
    rmse = float(np.sqrt(np.mean(error * error)))
    nonzero = truth[keep] != 0
    mape = None
    if nonzero.any():
        mape = float(np.mean(np.abs(error[nonzero] / truth[keep][nonzero])) * 100.0)
    return MetricValues(mae=mae, rmse=rmse, mape=mape, count=count)


def metrics(
    prediction: np.ndarray, truth: np.ndarray, null_value: float = 0.0, mask: Optional[np.ndarray] = None
) -> MetricReport:
    """Metrics over W x tau x N x C arrays in original units, with a per-horizon breakdown.

    ``mask`` optionally restricts evaluation further; it must broadcast to the
    arrays' shape.
    """
    prediction = np.asarray(prediction, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if prediction.shape != truth.shape:
        raise ShapeError(f"metrics: prediction {prediction.shape} against truth {truth.shape}")
    if mask is not None:
        mask = np.broadcast_to(mask, truth.shape)
    overall = masked_values(prediction, truth, null_value, mask)
    horizons = []
    if prediction.ndim >= 2:
        for step in range(prediction.shape[1]):
            values = masked_values(
                prediction[:, step], truth[:, step], null_value, None if mask is None else mask[:, step]
            )
            horizons.append(HorizonMetrics(horizon=step + 1, **values.model_dump()))
    return MetricReport(horizons=horizons, **overall.model_dump())


MORNING_PEAK = (7, 9)
EVENING_PEAK = (16, 19)


def period_masks(target_times: np.ndarray) -> dict[str, np.ndarray]:
    """Boolean masks over an array of epoch seconds: morning peak, evening peak, weekend (UTC wall clock)."""
    stamps = np.asarray(target_times, dtype=np.int64)
    hours = np.empty(stamps.shape, dtype=np.int64)
    weekdays = np.empty(stamps.shape, dtype=np.int64)
    for index, stamp in np.ndenumerate(stamps):
        moment = datetime.fromtimestamp(int(stamp), tz=timezone.utc)
        hours[index] = moment.hour
        weekdays[index] = moment.weekday()
    weekday = weekdays < 5
    return {
        "morning_peak": weekday & (hours >= MORNING_PEAK[0]) & (hours < MORNING_PEAK[1]),
        "evening_peak": weekday & (hours >= EVENING_PEAK[0]) & (hours < EVENING_PEAK[1]),
        "weekend": ~weekday,
    }


def target_times(timestamps: np.ndarray, target_start: np.ndarray, horizon: int) -> np.ndarray:
    """Epoch seconds of every target step, W x tau."""
    return np.asarray(timestamps)[np.asarray(target_start)[:, None] + np.arange(horizon)[None, :]]


def peak_metrics(
    prediction: np.ndarray, truth: np.ndarray, times: np.ndarray, null_value: float = 0.0
) -> dict[str, MetricReport]:
    """One report per peak period; ``times`` is W x tau epoch seconds."""
    reports = {}
    for name, period in period_masks(times).items():
        mask = period.reshape(period.shape + (1,) * (truth.ndim - 2))
        reports[name] = metrics(prediction, truth, null_value, mask)
    return reports

import csv
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.tensor.serialization import read_tensor, write_tensor
from src.utils.errors import DataError, TensorFormatError


logger = logging.getLogger(__name__)

META_FILE = "meta.json"
VALUES_FILE = "values.bin"
ADJACENCY_FILE = "adj.bin"
TIMESTAMPS_FILE = "timestamps.txt"


class DatasetMeta(BaseModel):
    n_nodes: int = Field(ge=1, description="Number of sensors N.")
    n_steps: int = Field(ge=1, description="Number of time steps T_total.")
    channels: int = Field(1, ge=1, description="Feature channels C per node and step.")
    interval_minutes: int = Field(5, ge=1, description="Minutes between consecutive steps.")


class RawDataset(BaseModel):
    """A T_total × N × C series with its N × N adjacency.

    Adjacency rows are receiving nodes: ``adjacency[j, i] > 0`` means node j
    aggregates information from node i.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(description="Series, shape T_total × N × C.")
    adjacency: np.ndarray = Field(description="Nonnegative weights, shape N × N.")
    interval_minutes: int = Field(5, ge=1, description="Minutes between consecutive steps.")
    timestamps: Optional[np.ndarray] = Field(None, description="Epoch seconds per step.")

    @field_validator("values")
    def _values_rank(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"values must be T x N x C, got shape {v.shape}")
        return v

    @field_validator("adjacency")
    def _adjacency_square(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {v.shape}")
        if np.any(v < 0) or not np.isfinite(v).all():
            raise ValueError("adjacency entries must be finite and nonnegative")
        return v

    @field_validator("timestamps")
    def _timestamps_vector(cls, v: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if v is None:
            return v
        return np.asarray(v, dtype=np.int64).reshape(-1)

    @model_validator(mode="after")
    def _dimensions_agree(self) -> "RawDataset":
        n_nodes = self.values.shape[1]
        if self.adjacency.shape[0] != n_nodes:
            raise ValueError(
                f"adjacency is {self.adjacency.shape[0]}x{self.adjacency.shape[1]} but values have N={n_nodes} nodes"
            )
        if self.timestamps is not None and self.timestamps.shape[0] != self.values.shape[0]:
            raise ValueError(
                f"{self.timestamps.shape[0]} timestamps for {self.values.shape[0]} steps"
            )
        return self

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]


def _validated(**fields) -> RawDataset:
    try:
        return RawDataset(**fields)
    except ValidationError as exc:
        raise DataError(_first_error(exc)) from None


def _first_error(exc: ValidationError) -> str:
    error = exc.errors()[0]
    return str(error.get("ctx", {}).get("error", error["msg"]))


def load_dataset(path: str | Path) -> RawDataset:
    """Read the directory layout written by :func:`save_dataset`."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root}: dataset directory not found")
    meta_path = root / META_FILE
    try:
        meta = DatasetMeta.model_validate_json(meta_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{meta_path}: unreadable ({exc.strerror})") from exc
    except ValidationError as exc:
        raise DataError(f"{meta_path}: {exc.errors()[0]['msg']} at {exc.errors()[0]['loc']}") from None

    try:
        values = read_tensor(root / VALUES_FILE)
        adjacency = read_tensor(root / ADJACENCY_FILE)
    except TensorFormatError as exc:
        raise DataError(str(exc)) from exc

    expected = (meta.n_steps, meta.n_nodes, meta.channels)
    if values.shape != expected:
        raise DataError(f"{root / VALUES_FILE}: shape {values.shape} disagrees with {META_FILE} {expected}")
    if adjacency.shape != (meta.n_nodes, meta.n_nodes):
        raise DataError(
            f"{root / ADJACENCY_FILE}: adjacency {'x'.join(map(str, adjacency.shape))} "
            f"does not match N={meta.n_nodes} nodes of the values"
        )

    timestamps = None
    stamps_path = root / TIMESTAMPS_FILE
    if stamps_path.exists():
        timestamps = _read_timestamps(stamps_path)

    dataset = _validated(
        values=values, adjacency=adjacency, interval_minutes=meta.interval_minutes, timestamps=timestamps
    )
    logger.info(
        "Loaded %s: %d steps x %d nodes x %d channels, %d-minute interval%s",
        root, dataset.n_steps, dataset.n_nodes, dataset.n_channels, dataset.interval_minutes,
        ", with timestamps" if timestamps is not None else "",
    )
    return dataset


def _read_timestamps(path: Path) -> np.ndarray:
    stamps = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                stamps.append(int(text))
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected an epoch-seconds integer, got {text!r}") from None
    return np.asarray(stamps, dtype=np.int64)


def save_dataset(dataset: RawDataset, path: str | Path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = DatasetMeta(
        n_nodes=dataset.n_nodes,
        n_steps=dataset.n_steps,
        channels=dataset.n_channels,
        interval_minutes=dataset.interval_minutes,
    )
    (root / META_FILE).write_text(meta.model_dump_json(indent=2), encoding="utf-8")
    write_tensor(root / VALUES_FILE, dataset.values)
    write_tensor(root / ADJACENCY_FILE, dataset.adjacency)
    if dataset.timestamps is not None:
        (root / TIMESTAMPS_FILE).write_text("".join(f"{int(t)}\n" for t in dataset.timestamps), encoding="utf-8")
    return root


def iso_to_unix(iso_string: str) -> int:
    """
    Converts an ISO 8601 formatted date string to a Unix timestamp (seconds since epoch).
    Args:
        iso_string (str): ISO date string like '2012-03-01T00:05:00Z' or '2012-03-01 00:05:00'
    Returns:
        int: Unix timestamp; naive strings are read as UTC
    """
    try:
        dt = datetime.fromisoformat(iso_string.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    except Exception as e:
        raise ValueError(f"Invalid ISO date string: {iso_string}") from e


def _parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return iso_to_unix(text)


def convert_csv(
    csv_path: str | Path,
    out_dir: str | Path,
    adjacency_path: str | Path | None = None,
    interval_minutes: int | None = None,
) -> RawDataset:
    """Ingest a CSV (header: timestamp column then one column per node id) into the dataset layout.

    The optional adjacency CSV holds N rows of N comma-separated weights in the
    header's node order. Without one the identity graph is used.
    """
    csv_path = Path(csv_path)
    try:
        handle = csv_path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{csv_path}: unreadable ({exc.strerror})") from exc

    timestamps: list[int] = []
    rows: list[list[float]] = []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise DataError(f"{csv_path}:1: header needs a timestamp column and at least one node id")
        node_ids = [h.strip() for h in header[1:]]
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"{csv_path}:{lineno}: expected {len(header)} fields, found {len(record)}")
            try:
                timestamps.append(_parse_timestamp(record[0]))
                rows.append([float(v) for v in record[1:]])
            except ValueError as exc:
                raise DataError(f"{csv_path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{csv_path}: no data rows")

    values = np.asarray(rows, dtype=np.float64)[:, :, None]
    n_nodes = len(node_ids)
    if adjacency_path is None:
        logger.warning("No adjacency given for %s; using the identity graph over %d nodes", csv_path, n_nodes)
        adjacency = np.eye(n_nodes)
    else:
        adjacency = _read_matrix_csv(Path(adjacency_path), n_nodes)

    stamps = np.asarray(timestamps, dtype=np.int64)
    if interval_minutes is None:
        steps = np.diff(stamps)
        interval_minutes = int(np.median(steps) // 60) if steps.size else 5
        interval_minutes = max(interval_minutes, 1)

    dataset = _validated(values=values, adjacency=adjacency, interval_minutes=interval_minutes, timestamps=stamps)
    save_dataset(dataset, out_dir)
    logger.info("Converted %s (%d nodes, %d steps) into %s", csv_path, n_nodes, dataset.n_steps, out_dir)
    return dataset


def _read_matrix_csv(path: Path, n_nodes: int) -> np.ndarray:
    matrix: list[list[float]] = []
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: unreadable ({exc.strerror})") from exc
    with handle:
        for lineno, record in enumerate(csv.reader(handle), start=1):
            if not record:
                continue
            if len(record) != n_nodes:
                raise DataError(f"{path}:{lineno}: expected {n_nodes} weights, found {len(record)}")
            try:
                matrix.append([float(v) for v in record])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if len(matrix) != n_nodes:
        raise DataError(f"{path}: adjacency has {len(matrix)} rows for {n_nodes} nodes")
    return np.asarray(matrix)


def describe(dataset: RawDataset) -> dict:
    return {
        "n_steps": dataset.n_steps,
        "n_nodes": dataset.n_nodes,
        "channels": dataset.n_channels,
        "interval_minutes": dataset.interval_minutes,
        "has_timestamps": dataset.timestamps is not None,
    }

"""Checkpoint directories.

Layout::

    config.json        {"format_version": 1, "config": {...}}
    params/<name>.bin  one tensor per parameter
    scaler.json        z-score statistics (optional)
    adjacency.bin      row-normalized real graph
    optim/<name>.bin   optimizer moments (optional)
    trainstate.json    epoch counters and optimizer step (optional)
"""
import json
import logging
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from src.data.windows import Scaler
from src.model.config import ABLATION_FLAGS, ModelConfig
from src.model.genshin import GEnSHIN
from src.tensor.serialization import read_tensor, write_tensor
from src.utils.errors import CheckpointError, TensorFormatError


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CONFIG_FILE = "config.json"
SCALER_FILE = "scaler.json"
ADJACENCY_FILE = "adjacency.bin"
TRAIN_STATE_FILE = "trainstate.json"
PARAMS_DIR = "params"
OPTIM_DIR = "optim"


def _write_arrays(directory: Path, arrays: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for stale in directory.glob("*.bin"):
        stale.unlink()
    for name, values in arrays.items():
        write_tensor(directory / f"{name}.bin", values)


def _read_arrays(directory: Path) -> dict:
    arrays = {}
    for path in sorted(directory.glob("*.bin")):
        try:
            arrays[path.name[: -len(".bin")]] = read_tensor(path)
        except TensorFormatError as exc:
            raise CheckpointError(str(exc)) from exc
    return arrays


def save(model: GEnSHIN, path: str | Path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    document = {"format_version": FORMAT_VERSION, "config": model.config.model_dump()}
    (root / CONFIG_FILE).write_text(json.dumps(document, indent=2), encoding="utf-8")
    _write_arrays(root / PARAMS_DIR, model.state_dict())
    write_tensor(root / ADJACENCY_FILE, model.a_real)
    scaler_path = root / SCALER_FILE
    if model.scaler is not None:
        scaler_path.write_text(model.scaler.model_dump_json(indent=2), encoding="utf-8")
    elif scaler_path.exists():
        scaler_path.unlink()
    logger.info("Saved checkpoint to %s (%d parameters)", root, model.num_parameters())
    return root


def read_config(path: str | Path) -> ModelConfig:
    config_path = Path(path) / CONFIG_FILE
    try:
        document = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"{config_path}: unreadable ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{config_path}:{exc.lineno}: {exc.msg}") from None
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{config_path}: unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        return ModelConfig(**document.get("config", {}))
    except ValidationError as exc:
        raise CheckpointError(f"{config_path}: {exc.errors()[0]['msg']}") from None


def load(path: str | Path, expected: Optional[ModelConfig] = None) -> GEnSHIN:
    """Rebuild a model from ``path``; with ``expected``, ablation flags and shapes must agree."""
    root = Path(path)
    config = read_config(root)
    if expected is not None:
        mismatched = [
            name for name in ABLATION_FLAGS + ("n_nodes", "in_channels", "window", "horizon", "hidden_dim")
            if getattr(config, name) != getattr(expected, name)
        ]
        if mismatched:
            raise CheckpointError(
                f"{root / CONFIG_FILE}: checkpoint disagrees with the requested config on {', '.join(mismatched)}"
            )

    try:
        adjacency = read_tensor(root / ADJACENCY_FILE)
    except TensorFormatError as exc:
        raise CheckpointError(str(exc)) from exc
    scaler = None
    scaler_path = root / SCALER_FILE
    if scaler_path.exists():
        try:
            scaler = Scaler.model_validate_json(scaler_path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            raise CheckpointError(f"{scaler_path}: {exc.errors()[0]['msg']}") from None

    model = GEnSHIN(config, adjacency, scaler)
    # stored graph is already normalized; keep its exact bits
    model.a_real = adjacency
    state = _read_arrays(root / PARAMS_DIR)
    try:
        model.load_state_dict(state)
    except CheckpointError as exc:
        raise CheckpointError(f"{root / PARAMS_DIR}: {exc}") from None
    logger.info("Loaded checkpoint %s", root)
    return model


def save_train_state(path: str | Path, optimizer_arrays: dict, state: dict[str, Any]) -> None:
    root = Path(path)
    _write_arrays(root / OPTIM_DIR, optimizer_arrays)
    (root / TRAIN_STATE_FILE).write_text(json.dumps(state, indent=2, sort_keys=True), encoding="utf-8")


def load_train_state(path: str | Path) -> tuple[dict, dict[str, Any]]:
    root = Path(path)
    state_path = root / TRAIN_STATE_FILE
    try:
        state = json.loads(state_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"{state_path}: unreadable ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{state_path}:{exc.lineno}: {exc.msg}") from None
    return _read_arrays(root / OPTIM_DIR), state

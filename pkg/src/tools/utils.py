import argparse
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pydantic
from pydantic import BaseModel, Field

from src.data.datasets import RawDataset, load_dataset
from src.data.windows import DatasetBundle, make_windows
from src.model.config import ModelConfig, load_config
from src.utils.errors import DataError
from src.utils.run_config import GENSHIN_THREADS, UsageError, cli


logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.csv"


class Manifest(BaseModel):
    command: str = Field(description="Subcommand that produced the output directory.")
    seed: Optional[int] = Field(None, description="Seed in effect for the run.")
    config: Optional[dict[str, Any]] = Field(None, description="Resolved model configuration.")
    arguments: dict[str, Any] = Field(default_factory=dict, description="Command-line arguments as parsed.")
    python: str = Field(default_factory=platform.python_version)
    numpy: str = Field(default_factory=lambda: np.__version__)
    pydantic: str = Field(default_factory=lambda: pydantic.VERSION)
    threads: int = Field(GENSHIN_THREADS, description="GENSHIN_THREADS at start-up.")
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))


@cli.common
def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, type=Path, help="Output directory (created when missing).")
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed.")
    parser.add_argument("--log-level", default=None, help="Logging level (default: GENSHIN_LOG_LEVEL or INFO).")


def config_argument(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--config", required=required, type=Path, help="key=value model config file.")


def data_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, type=Path, help="Dataset directory (meta.json, values.bin, adj.bin).")


def out_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_config(args: argparse.Namespace) -> ModelConfig:
    return load_config(args.config, seed=args.seed)


def read_dataset(path: Path) -> RawDataset:
    if not Path(path).is_dir():
        raise UsageError(f"--data {path}: no such dataset directory")
    return load_dataset(path)


def check_shape(config: ModelConfig, raw: RawDataset) -> None:
    if raw.n_nodes != config.n_nodes or raw.n_channels != config.in_channels:
        raise DataError(
            f"dataset has {raw.n_nodes} nodes x {raw.n_channels} channels, "
            f"config expects {config.n_nodes} x {config.in_channels}"
        )


def load_bundle(config: ModelConfig, data_dir: Path) -> DatasetBundle:
    raw = read_dataset(data_dir)
    check_shape(config, raw)
    return make_windows(raw, config.window, config.horizon, config.ratios)


def write_manifest(
    out: Path, args: argparse.Namespace, config: Optional[ModelConfig] = None, seed: Optional[int] = None
) -> Path:
    arguments = {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items() if k != "handler"}
    manifest = Manifest(
        command=args.command,
        seed=config.seed if config is not None else seed,
        config=config.model_dump() if config is not None else None,
        arguments=arguments,
    )
    path = out / MANIFEST_FILE
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)
    return path

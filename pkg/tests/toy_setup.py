"""Shared fixtures: the shipped toy config and small synthetic datasets."""
import os
from pathlib import Path

import numpy as np

from src.data.datasets import RawDataset
from src.data.synthetic import SyntheticPattern, generate_synthetic
from src.data.windows import DatasetBundle, make_windows
from src.model.config import ModelConfig, load_config


ROOT = Path(__file__).resolve().parents[1]
TOY_CONFIG = ROOT / "configs" / "toy.cfg"
METR_LA_CONFIG = ROOT / "configs" / "metr-la.cfg"

SLOW = os.getenv("GENSHIN_SLOW_TESTS") == "1"
METR_LA_DIR = os.getenv("GENSHIN_METR_LA")


def toy_config(**overrides) -> ModelConfig:
    config = load_config(TOY_CONFIG)
    return config.with_overrides(**overrides) if overrides else config


def gradcheck_config(**overrides) -> ModelConfig:
    """The toy model with order-1 supports and narrower inner layers, small enough for a full gradient check."""
    return toy_config(cheb_order=1, ff_dim=16, updater_hidden=8, **overrides)


def toy_dataset(n_steps: int = 120, period: int = 24, noise: float = 0.0, seed: int = 0, n_nodes: int = 8) -> RawDataset:
    return generate_synthetic(n_nodes, n_steps, SyntheticPattern(period=period, noise_std=noise), seed=seed)


def toy_bundle(config: ModelConfig, **dataset_kwargs) -> DatasetBundle:
    return make_windows(toy_dataset(**dataset_kwargs), config.window, config.horizon, config.ratios)


def toy_input(config: ModelConfig, batch: int = 2, seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(size=(batch, config.window, config.n_nodes, config.in_channels))

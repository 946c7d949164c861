"""Post-norm Transformer encoder applied along time, independently per node."""
from typing import Optional

import numpy as np

from src.model.module import Module, ones, uniform_fan_in, zeros
from src.tensor import Tensor, ops
from src.utils.errors import ConfigError, ShapeError


def sinusoidal_encoding(length: int, width: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    rates = np.exp(-np.log(10000.0) * np.arange(0, width, 2) / width)
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates)[:, : width // 2]
    return table


class TransformerBlock(Module):
    def __init__(self, hidden_dim: int, n_heads: int, ff_dim: int, rng: np.random.Generator, dropout: float = 0.0) -> None:
        if hidden_dim % n_heads:
            raise ConfigError(f"hidden_dim {hidden_dim} is not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.dropout = dropout
        h = hidden_dim
        self.w_q = uniform_fan_in(rng, h, (h, h))
        self.b_q = zeros((h,))
        self.w_k = uniform_fan_in(rng, h, (h, h))
        self.b_k = zeros((h,))
        self.w_v = uniform_fan_in(rng, h, (h, h))
        self.b_v = zeros((h,))
        self.w_o = uniform_fan_in(rng, h, (h, h))
        self.b_o = zeros((h,))
        self.norm1_gain = ones((h,))
        self.norm1_bias = zeros((h,))
        self.w_ff1 = uniform_fan_in(rng, h, (h, ff_dim))
        self.b_ff1 = zeros((ff_dim,))
        self.w_ff2 = uniform_fan_in(rng, ff_dim, (ff_dim, h))
        self.b_ff2 = zeros((h,))
        self.norm2_gain = ones((h,))
        self.norm2_bias = zeros((h,))

    def _heads(self, x: Tensor) -> Tensor:
        m, t, h = x.shape
        return ops.transpose(ops.reshape(x, (m, t, self.n_heads, h // self.n_heads)), (0, 2, 1, 3))

    def attend(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Multi-head self-attention over axis 1 of an M x T x H input; returns (output, weights M x heads x T x T)."""
        m, t, h = x.shape
        q = self._heads(x @ self.w_q + self.b_q)
        k = self._heads(x @ self.w_k + self.b_k)
        v = self._heads(x @ self.w_v + self.b_v)
        weights = ops.softmax((q @ k.mT) * (1.0 / np.sqrt(h // self.n_heads)), axis=-1)
        context = ops.reshape(ops.transpose(weights @ v, (0, 2, 1, 3)), (m, t, h))
        return context @ self.w_o + self.b_o, weights

    def __call__(self, x: Tensor, train: bool = False, rng: Optional[np.random.Generator] = None) -> tuple[Tensor, Tensor]:
        attended, weights = self.attend(x)
        x = ops.layer_norm(x + ops.dropout(attended, self.dropout, train, rng), self.norm1_gain, self.norm1_bias)
        inner = ops.relu(x @ self.w_ff1 + self.b_ff1) @ self.w_ff2 + self.b_ff2
        x = ops.layer_norm(x + ops.dropout(inner, self.dropout, train, rng), self.norm2_gain, self.norm2_bias)
        return x, weights


class TemporalTransformer(Module):
    """Stack of blocks over the time axis of a B x T x N x H sequence."""

    def __init__(
        self,
        hidden_dim: int,
        n_heads: int,
        ff_dim: int,
        n_layers: int,
        max_len: int,
        rng: np.random.Generator,
        dropout: float = 0.0,
    ) -> None:
        self.max_len = max_len
        self.positions = sinusoidal_encoding(max_len, hidden_dim)
        self.blocks = [TransformerBlock(hidden_dim, n_heads, ff_dim, rng, dropout) for _ in range(n_layers)]

    def __call__(
        self, sequence: Tensor, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> tuple[Tensor, list[np.ndarray]]:
        b, t, n, h = sequence.shape
        if t > self.max_len:
            raise ShapeError(f"transformer: sequence of {t} steps exceeds the {self.max_len} encoded positions")
        x = ops.reshape(ops.transpose(sequence, (0, 2, 1, 3)), (b * n, t, h)) + self.positions[:t]
        attention = []
        for block in self.blocks:
            x, weights = block(x, train, rng)
            attention.append(weights.data.reshape(b, n, block.n_heads, t, t))
        return ops.transpose(ops.reshape(x, (b, n, t, h)), (0, 2, 1, 3)), attention

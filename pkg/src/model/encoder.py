"""Graph-convolutional GRU cells and the attention-enhanced encoder."""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from src.model.module import Module, uniform_fan_in, zeros
from src.model.transformer import TemporalTransformer
from src.tensor import Tensor, as_tensor, ops
from src.utils.errors import ShapeError


def graph_conv(supports: Sequence[Tensor], features: Tensor) -> Tensor:
    """[T_0 X, T_1 X, ...] concatenated on the feature axis: B x N x F -> B x N x (S*F)."""
    return ops.concat([support @ features for support in supports], axis=-1)


class GateValues(NamedTuple):
    hidden: Tensor
    update: Tensor
    reset: Tensor
    candidate: Tensor


class GCRUCell(Module):
    """GRU whose gate maps act on graph-convolved features.

    update  z = sigmoid(G[x, h] W_z + b_z)
    reset   r = sigmoid(G[x, h] W_r + b_r)
    cand    c = tanh(G[x, r*h] W_h + b_h)
    h'      = z*h + (1 - z)*c
    """

    def __init__(self, input_dim: int, hidden_dim: int, n_supports: int, rng: np.random.Generator) -> None:
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_supports = n_supports
        width = n_supports * (input_dim + hidden_dim)
        self.w_z = uniform_fan_in(rng, width, (width, hidden_dim))
        self.b_z = zeros((hidden_dim,))
        self.w_r = uniform_fan_in(rng, width, (width, hidden_dim))
        self.b_r = zeros((hidden_dim,))
        self.w_h = uniform_fan_in(rng, width, (width, hidden_dim))
        self.b_h = zeros((hidden_dim,))

    def step(self, x: Tensor, h_prev: Tensor, supports: Sequence[Tensor]) -> GateValues:
        if len(supports) != self.n_supports:
            raise ShapeError(f"gcru_cell: built for {self.n_supports} supports, got {len(supports)}")
        if x.shape[-1] != self.input_dim or h_prev.shape[-1] != self.hidden_dim or x.shape[:-1] != h_prev.shape[:-1]:
            raise ShapeError(
                f"gcru_cell: input {x.shape} and state {h_prev.shape} do not match widths "
                f"{self.input_dim}/{self.hidden_dim}"
            )
        mixed = graph_conv(supports, ops.concat([x, h_prev], axis=-1))
        update = ops.sigmoid(mixed @ self.w_z + self.b_z)
        reset = ops.sigmoid(mixed @ self.w_r + self.b_r)
        candidate = ops.tanh(graph_conv(supports, ops.concat([x, reset * h_prev], axis=-1)) @ self.w_h + self.b_h)
        hidden = update * h_prev + (1.0 - update) * candidate
        return GateValues(hidden, update, reset, candidate)

    def __call__(self, x: Tensor, h_prev: Tensor, supports: Sequence[Tensor]) -> Tensor:
        return self.step(x, h_prev, supports).hidden


def gcru_cell(x: Tensor, h_prev: Tensor, supports: Sequence[Tensor], cell: GCRUCell) -> Tensor:
    return cell(as_tensor(x), as_tensor(h_prev), supports)


@dataclass
class Encoding:
    sequence: Tensor  # top-layer GCRU states, B x T x N x H
    final: Tensor  # the encoding H_t, B x N x H
    layer_states: list[Tensor]
    attention: list[np.ndarray] = field(default_factory=list)


class STEncoder(Module):
    def __init__(
        self,
        in_channels: int,
        hidden_dim: int,
        n_layers: int,
        n_supports: int,
        rng: np.random.Generator,
        transformer: Optional[TemporalTransformer] = None,
    ) -> None:
        self.hidden_dim = hidden_dim
        self.cells = [
            GCRUCell(in_channels if i == 0 else hidden_dim, hidden_dim, n_supports, rng) for i in range(n_layers)
        ]
        self.transformer = transformer

    def __call__(
        self,
        x: Tensor,
        supports: Sequence[Tensor],
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Encoding:
        x = as_tensor(x)
        if x.ndim != 4:
            raise ShapeError(f"encode: expected B x T x N x C input, got {x.shape}")
        b, t, n, _ = x.shape
        inputs = [x[:, step] for step in range(t)]
        layer_states = []
        for cell in self.cells:
            h = as_tensor(np.zeros((b, n, self.hidden_dim)))
            outputs = []
            for frame in inputs:
                h = cell(frame, h, supports)
                outputs.append(h)
            layer_states.append(h)
            inputs = outputs
        sequence = ops.stack(inputs, axis=1)

        if self.transformer is None:
            return Encoding(sequence=sequence, final=inputs[-1], layer_states=layer_states)
        enhanced, attention = self.transformer(sequence, train, rng)
        return Encoding(sequence=sequence, final=enhanced[:, t - 1], layer_states=layer_states, attention=attention)

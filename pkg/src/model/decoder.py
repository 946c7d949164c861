"""Autoregressive GCRU decoder with a per-step dynamic graph."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.model.encoder import GCRUCell
from src.model.graphs import chebyshev_supports, row_normalize
from src.model.module import Module, uniform_fan_in, zeros
from src.tensor import Tensor, as_tensor, ops
from src.utils.errors import ConfigError, ShapeError


class GraphUpdater(Module):
    """Per-node MLP producing source and target factors; their ReLU'd product is the graph update.

    The factors are averaged over the batch so one graph is shared by every
    sample of a step.
    """

    def __init__(self, input_dim: int, hidden: int, factor_dim: int, step: float, rng: np.random.Generator) -> None:
        self.step = step
        self.w_in = uniform_fan_in(rng, input_dim, (input_dim, hidden))
        self.b_in = zeros((hidden,))
        self.w_out = uniform_fan_in(rng, hidden, (hidden, factor_dim))
        self.b_out = zeros((factor_dim,))
        self.w_src = uniform_fan_in(rng, factor_dim, (factor_dim, factor_dim))
        self.w_dst = uniform_fan_in(rng, factor_dim, (factor_dim, factor_dim))

    def delta(self, h_prev: Tensor, h_mem: Optional[Tensor]) -> Tensor:
        features = h_prev if h_mem is None else ops.concat([h_prev, h_mem], axis=-1)
        if features.shape[-1] != self.w_in.shape[0]:
            raise ShapeError(f"graph updater: feature width {features.shape[-1]} against {self.w_in.shape}")
        embedding = ops.relu(features @ self.w_in + self.b_in) @ self.w_out + self.b_out
        source = ops.mean(embedding @ self.w_src, axis=0)
        target = ops.mean(embedding @ self.w_dst, axis=0)
        return self.step * ops.relu(source @ target.mT)


def update_graph(h_prev: Tensor, h_mem: Optional[Tensor], a_prev: Tensor, updater: GraphUpdater) -> Tensor:
    """A_t = row_normalize(A_prev + delta)."""
    return row_normalize(as_tensor(a_prev) + updater.delta(as_tensor(h_prev), h_mem))


@dataclass
class Decoding:
    prediction: Tensor  # B x tau x N x C, normalized units
    graphs: list[np.ndarray] = field(default_factory=list)


class Decoder(Module):
    def __init__(
        self,
        out_channels: int,
        hidden_dim: int,
        n_layers: int,
        cheb_order: int,
        rng: np.random.Generator,
        memory_dim: int = 0,
        updater: Optional[GraphUpdater] = None,
    ) -> None:
        self.out_channels = out_channels
        self.memory_dim = memory_dim
        self.cheb_order = cheb_order
        n_supports = cheb_order + 1
        self.cells = [
            GCRUCell(out_channels + memory_dim if i == 0 else hidden_dim, hidden_dim, n_supports, rng)
            for i in range(n_layers)
        ]
        self.updater = updater
        self.w_out = uniform_fan_in(rng, hidden_dim, (hidden_dim, out_channels))
        self.b_out = zeros((out_channels,))

    def __call__(
        self,
        h_t: Tensor,
        h_mem: Optional[Tensor],
        graph: Tensor,
        horizon: int,
        teacher: Optional[np.ndarray] = None,
        tf_prob: float = 0.0,
        rng: Optional[np.random.Generator] = None,
        keep_graphs: bool = False,
    ) -> Decoding:
        if horizon <= 0:
            raise ConfigError(f"decode: horizon must be positive, got {horizon}")
        if not 0.0 <= tf_prob <= 1.0:
            raise ConfigError(f"decode: teacher forcing probability must lie in [0, 1], got {tf_prob}")
        if tf_prob > 0.0 and teacher is None:
            raise ConfigError("decode: teacher forcing needs target frames")
        if 0.0 < tf_prob < 1.0 and rng is None:
            raise ConfigError("decode: sampled teacher forcing needs a random generator")
        if (h_mem is None) != (self.memory_dim == 0):
            raise ShapeError("decode: memory readout presence does not match how the decoder was built")

        b, n, _ = h_t.shape
        if teacher is not None and teacher.shape[:2] != (b, horizon):
            raise ShapeError(f"decode: teacher of shape {teacher.shape} for batch {b} and horizon {horizon}")
        states = [h_t] * len(self.cells)
        frame: Tensor = as_tensor(np.zeros((b, n, self.out_channels)))
        outputs: list[Tensor] = []
        graphs: list[np.ndarray] = []
        for step in range(horizon):
            if self.updater is None:
                graph = row_normalize(graph)
            else:
                graph = update_graph(states[-1], h_mem, graph, self.updater)
            if keep_graphs:
                graphs.append(graph.data.copy())
            supports = chebyshev_supports(graph, self.cheb_order)

            inputs = frame if h_mem is None else ops.concat([frame, h_mem], axis=-1)
            for layer, cell in enumerate(self.cells):
                states[layer] = cell(inputs, states[layer], supports)
                inputs = states[layer]
            output = states[-1] @ self.w_out + self.b_out
            outputs.append(output)

            use_truth = tf_prob >= 1.0 or (tf_prob > 0.0 and rng.random() < tf_prob)
            frame = as_tensor(teacher[:, step]) if use_truth else output
        return Decoding(prediction=ops.stack(outputs, axis=1), graphs=graphs)

from dataclasses import dataclass

import numpy as np

from src.model.module import Module, uniform_fan_in
from src.tensor import Tensor, as_tensor, ops, parameter
from src.utils.errors import ConfigError, ShapeError


def top2(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the largest and second-largest entries along the last axis; ties go to the lower index."""
    scores = np.asarray(scores)
    if scores.shape[-1] < 2:
        raise ConfigError(f"top2 needs at least 2 scores per row, got {scores.shape[-1]}")
    order = np.argsort(-scores, axis=-1, kind="stable")
    return order[..., 0], order[..., 1]


@dataclass
class MemoryReadout:
    query: Tensor  # Q, B x N x d_m
    scores: Tensor  # S, B x N x K
    retrieved: Tensor  # H_mem, B x N x d_m
    pos_idx: np.ndarray
    neg_idx: np.ndarray


class MemoryBank(Module):
    """K learnable pattern prototypes queried by scaled dot-product attention."""

    def __init__(self, n_prototypes: int, proto_dim: int, hidden_dim: int, rng: np.random.Generator) -> None:
        if n_prototypes < 2:
            raise ConfigError(f"memory bank needs at least 2 prototypes, got {n_prototypes}")
        self.n_prototypes = n_prototypes
        self.proto_dim = proto_dim
        self.prototypes = parameter(rng.normal(size=(n_prototypes, proto_dim)) / np.sqrt(proto_dim), name="prototypes")
        self.w_q = uniform_fan_in(rng, hidden_dim, (hidden_dim, proto_dim), name="w_q")

    def query(self, h_t: Tensor) -> MemoryReadout:
        h_t = as_tensor(h_t)
        if h_t.shape[-1] != self.w_q.shape[0]:
            raise ShapeError(f"memory query: state width {h_t.shape[-1]} against W_q {self.w_q.shape}")
        q = h_t @ self.w_q
        scores = ops.softmax((q @ self.prototypes.mT) * (1.0 / np.sqrt(self.proto_dim)), axis=-1)
        retrieved = scores @ self.prototypes
        pos_idx, neg_idx = top2(scores.data)
        return MemoryReadout(query=q, scores=scores, retrieved=retrieved, pos_idx=pos_idx, neg_idx=neg_idx)

"""Memory-driven asymmetric graph learning, real-graph fusion and Chebyshev supports.

Adjacency rows are receiving nodes throughout: row ``j`` of a graph holds
the weights node ``j`` aggregates its neighbours with, so row-stochastic
graphs average.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.model.module import Module, uniform_fan_in
from src.tensor import Tensor, as_tensor, ops, parameter
from src.utils.errors import GraphError, ShapeError


logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-9


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalize a nonnegative adjacency; all-zero rows become self-loops."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {adjacency.shape}")
    if np.any(adjacency < 0):
        raise GraphError("adjacency has negative entries")
    adjacency = adjacency.copy()
    empty = adjacency.sum(axis=1) == 0
    if empty.any():
        rows = np.flatnonzero(empty)
        logger.warning("Nodes %s have no incoming edges; adding self-loops", rows.tolist())
        adjacency[rows, rows] = 1.0
    return adjacency / adjacency.sum(axis=1, keepdims=True)


def is_row_stochastic(matrix: np.ndarray, tol: float = ROW_SUM_TOL) -> bool:
    return bool(np.all(matrix >= 0) and np.all(np.abs(matrix.sum(axis=-1) - 1.0) <= tol))


def row_normalize(graph: Tensor) -> Tensor:
    """Differentiable row normalization; rows summing to zero get a self-loop first."""
    sums = graph.data.sum(axis=-1)
    empty = sums <= 0
    if empty.any():
        loops = np.zeros(graph.shape)
        rows = np.flatnonzero(empty)
        loops[rows, rows] = 1.0
        graph = graph + loops
    return graph / ops.sum(graph, axis=-1, keepdims=True)


def compute_embeddings(w_e1: Tensor, w_e2: Tensor, prototypes: Tensor) -> tuple[Tensor, Tensor]:
    """Z1 = W_e1 M and Z2 = W_e2 M."""
    for name, w in (("W_e1", w_e1), ("W_e2", w_e2)):
        if w.ndim != 2 or w.shape[1] != prototypes.shape[0]:
            raise GraphError(
                f"{name} of shape {w.shape} does not match {prototypes.shape[0]} memory prototypes"
            )
    if w_e2 is w_e1:
        shared = w_e1 @ prototypes
        return shared, shared
    return w_e1 @ prototypes, w_e2 @ prototypes


def learned_scores(z1: Tensor, z2: Tensor) -> tuple[Tensor, Tensor]:
    """Pre-softmax scores ReLU(Z1 Z2^T) and ReLU(Z2 Z1^T); the second is the exact transpose of the first."""
    if z1.shape != z2.shape:
        raise ShapeError(f"learned_scores: embeddings differ in shape, {z1.shape} and {z2.shape}")
    score1 = ops.relu(z1 @ z2.mT)
    if z2 is z1:
        # tied embeddings give an exactly symmetric score
        score1 = (score1 + ops.transpose(score1)) * 0.5
    return score1, ops.transpose(score1)


def build_learned_graphs(z1: Tensor, z2: Tensor) -> tuple[Tensor, Tensor]:
    score1, score2 = learned_scores(z1, z2)
    return ops.softmax(score1, axis=-1), ops.softmax(score2, axis=-1)


def fuse_with_real(learned1: Tensor, learned2: Tensor, a_real: Tensor | np.ndarray, alpha: Tensor | float) -> tuple[Tensor, Tensor]:
    """A_i = alpha * A_real + (1 - alpha) * learned_i."""
    a_real = as_tensor(a_real)
    if a_real.shape != learned1.shape:
        raise ShapeError(f"fuse_with_real: real graph {a_real.shape} against learned {learned1.shape}")
    if not is_row_stochastic(a_real.data):
        raise GraphError("real adjacency must be row-normalized before fusion")
    alpha = as_tensor(alpha)
    keep = 1.0 - alpha
    return alpha * a_real + keep * learned1, alpha * a_real + keep * learned2


def scaled_laplacian(graph: Tensor) -> Tensor:
    """-D^-1/2 S D^-1/2 of the symmetrized graph S, i.e. the normalized Laplacian rescaled with lambda_max = 2."""
    n = graph.shape[-1]
    sym = (graph + ops.transpose(graph)) * 0.5
    degree = sym.data.sum(axis=-1)
    isolated = degree <= 0
    if isolated.any():
        loops = np.zeros((n, n))
        rows = np.flatnonzero(isolated)
        loops[rows, rows] = 1.0
        sym = sym + loops
    inv_sqrt = 1.0 / ops.sqrt(ops.sum(sym, axis=-1))
    return -(ops.reshape(inv_sqrt, (n, 1)) * sym * ops.reshape(inv_sqrt, (1, n)))


def chebyshev_supports(graph: Tensor | np.ndarray, order: int) -> list[Tensor]:
    """[T_0, ..., T_order] of the scaled Laplacian, T_k = 2 L T_{k-1} - T_{k-2}."""
    if order < 1:
        raise GraphError(f"Chebyshev order must be at least 1, got {order}")
    graph = as_tensor(graph)
    if graph.ndim != 2 or graph.shape[0] != graph.shape[1]:
        raise ShapeError(f"chebyshev_supports: graph must be square, got {graph.shape}")
    laplacian = scaled_laplacian(graph)
    supports = [as_tensor(np.eye(graph.shape[0])), laplacian]
    for _ in range(2, order + 1):
        supports.append(2.0 * (laplacian @ supports[-1]) - supports[-2])
    return supports


@dataclass
class GraphSet:
    a_real: Tensor
    learned1: Tensor
    learned2: Tensor
    scores1: Tensor
    scores2: Tensor
    a1: Tensor
    a2: Tensor
    alpha: Tensor
    supports1: list[Tensor] = field(default_factory=list)
    supports2: list[Tensor] = field(default_factory=list)

    @property
    def encoder_supports(self) -> list[Tensor]:
        return self.supports1 + self.supports2


class GraphLearner(Module):
    """Association matrices (or free node embeddings) plus the fusion weight.

    With a memory bank the embeddings are ``W_e M``; without one they are free
    ``N x d_m`` parameters. ``single_embed`` ties the second factor to the
    first; ``no_real_graph`` fixes the fusion weight at 0.
    """

    def __init__(
        self,
        n_nodes: int,
        n_prototypes: int,
        proto_dim: int,
        rng: np.random.Generator,
        use_memory: bool = True,
        single_embed: bool = False,
        no_real_graph: bool = False,
    ) -> None:
        self.use_memory = use_memory
        self.no_real_graph = no_real_graph
        width = n_prototypes if use_memory else proto_dim
        self.w_e1 = uniform_fan_in(rng, width, (n_nodes, width), name="w_e1")
        self.w_e2 = self.w_e1 if single_embed else uniform_fan_in(rng, width, (n_nodes, width), name="w_e2")
        if not no_real_graph:
            self.alpha_logit = parameter(np.zeros(()), name="alpha_logit")

    def alpha(self) -> Tensor:
        if self.no_real_graph:
            return as_tensor(0.0)
        return ops.sigmoid(self.alpha_logit)

    def embeddings(self, prototypes: Optional[Tensor]) -> tuple[Tensor, Tensor]:
        if self.use_memory:
            if prototypes is None:
                raise GraphError("graph learner built for a memory bank was given no prototypes")
            return compute_embeddings(self.w_e1, self.w_e2, prototypes)
        return self.w_e1, self.w_e2

    def build(self, prototypes: Optional[Tensor], a_real: Tensor | np.ndarray, cheb_order: int) -> GraphSet:
        z1, z2 = self.embeddings(prototypes)
        scores1, scores2 = learned_scores(z1, z2)
        learned1, learned2 = ops.softmax(scores1, axis=-1), ops.softmax(scores2, axis=-1)
        alpha = self.alpha()
        a1, a2 = fuse_with_real(learned1, learned2, a_real, alpha)
        return GraphSet(
            a_real=as_tensor(a_real),
            learned1=learned1,
            learned2=learned2,
            scores1=scores1,
            scores2=scores2,
            a1=a1,
            a2=a2,
            alpha=alpha,
            supports1=chebyshev_supports(a1, cheb_order),
            supports2=chebyshev_supports(a2, cheb_order),
        )

"""Training objective: task MAE plus memory consistency and contrastive terms."""
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, Field

from src.tensor import Tensor, as_tensor, ops
from src.utils.errors import ShapeError

if TYPE_CHECKING:
    from src.model.memory import MemoryReadout


class LossWeights(BaseModel):
    lambda1: float = Field(0.01, ge=0.0, description="Consistency loss weight.")
    lambda2: float = Field(0.01, ge=0.0, description="Contrastive loss weight.")
    gamma: float = Field(1.0, gt=0.0, description="Contrastive margin.")


def task_loss(prediction: Tensor, target: Tensor | np.ndarray) -> Tensor:
    """Mean absolute error over every entry."""
    target = as_tensor(target)
    if prediction.shape != target.shape:
        raise ShapeError(f"task_loss: prediction {prediction.shape} against target {target.shape}")
    if prediction.size == 0:
        raise ShapeError("task_loss: empty tensors")
    return ops.mean(ops.abs(prediction - target))


def _squared_distance(query: Tensor, prototypes: Tensor, indices: np.ndarray) -> Tensor:
    """||Q[b, n] - M[indices[b, n]]||^2 as a B x N tensor."""
    chosen = ops.reshape(ops.take(prototypes, indices.reshape(-1), axis=0), query.shape)
    diff = query - chosen
    return ops.sum(diff * diff, axis=-1)


def consistency_loss(readout: "MemoryReadout", prototypes: Tensor) -> Tensor:
    return ops.mean(_squared_distance(readout.query, prototypes, readout.pos_idx))


def contrastive_loss(readout: "MemoryReadout", prototypes: Tensor, gamma: float) -> Tensor:
    positive = _squared_distance(readout.query, prototypes, readout.pos_idx)
    negative = _squared_distance(readout.query, prototypes, readout.neg_idx)
    return ops.mean(ops.maximum(positive - negative + gamma, 0.0))


def total_loss(
    task: Tensor | float,
    consistency: Tensor | float,
    contrast: Tensor | float,
    weights: LossWeights,
) -> Tensor:
    return as_tensor(task) + weights.lambda1 * as_tensor(consistency) + weights.lambda2 * as_tensor(contrast)

from src.tensor.tensor import (
    BACKWARD_RULES,
    ComputationRecord,
    Tensor,
    as_tensor,
    backward,
    is_grad_enabled,
    no_grad,
    parameter,
    register_backward,
)
from src.tensor import ops

__all__ = [
    "BACKWARD_RULES",
    "ComputationRecord",
    "Tensor",
    "as_tensor",
    "backward",
    "is_grad_enabled",
    "no_grad",
    "ops",
    "parameter",
    "register_backward",
]

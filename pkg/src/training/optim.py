"""AdamW with decoupled weight decay, and global-norm gradient clipping."""
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from src.model.module import decays
from src.tensor import Tensor


def global_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_gradients(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale every gradient by max_norm / norm when the global L2 norm exceeds max_norm; return the scale."""
    params = list(params)
    norm = global_norm(params)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    scale = max_norm / norm
    for p in params:
        if p.grad is not None:
            p.grad = p.grad * scale
    return scale


@dataclass
class AdamW:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, named_params: Iterable[tuple[str, Tensor]]) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, p in named_params:
            if p.grad is None:
                continue
            if self.weight_decay and decays(name):
                p.data *= 1.0 - self.lr * self.weight_decay
            m = self.exp_avg.setdefault(name, np.zeros_like(p.data))
            v = self.exp_avg_sq.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"{name}.exp_avg": m for name, m in self.exp_avg.items()}
        arrays.update({f"{name}.exp_avg_sq": v for name, v in self.exp_avg_sq.items()})
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        self.step_count = step_count
        self.exp_avg = {k.removesuffix(".exp_avg"): v.copy() for k, v in arrays.items() if k.endswith(".exp_avg")}
        self.exp_avg_sq = {
            k.removesuffix(".exp_avg_sq"): v.copy() for k, v in arrays.items() if k.endswith(".exp_avg_sq")
        }

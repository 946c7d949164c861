"""Parameter containers.

A :class:`Module` owns parameter tensors and child modules as plain
attributes; ``named_parameters`` discovers them in attribute order, so names
are stable across runs and are what checkpoints are keyed by.
"""
from typing import Iterator

import numpy as np

from src.tensor import Tensor, parameter
from src.utils.errors import CheckpointError


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        seen: set[int] = set()
        yield from self._walk(prefix, seen)

    def _walk(self, prefix: str, seen: set[int]) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad and id(value) not in seen:
                    seen.add(id(value))
                    yield path, value
            elif isinstance(value, Module):
                yield from value._walk(f"{path}.", seen)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.", seen)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {unexpected}")
        for name, values in state.items():
            target = own[name]
            if values.shape != target.shape:
                raise CheckpointError(f"parameter '{name}' has shape {values.shape}, expected {target.shape}")
            target.data[...] = values


def decays(name: str) -> bool:
    """Whether weight decay applies to the parameter called ``name``."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf.startswith("b_") or leaf.endswith("bias") or "norm" in leaf:
        return False
    return leaf not in ("prototypes", "alpha_logit")


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...], name: str | None = None) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape), name=name)


def zeros(shape: tuple[int, ...], name: str | None = None) -> Tensor:
    return parameter(np.zeros(shape), name=name)


def ones(shape: tuple[int, ...], name: str | None = None) -> Tensor:
    return parameter(np.ones(shape), name=name)

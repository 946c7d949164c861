"""Dense float64 tensors with reverse-mode differentiation.

Every primitive in :mod:`src.tensor.ops` produces a :class:`Tensor` carrying a
:class:`Node` that names the operation. Backward rules are looked up by that
name in :data:`BACKWARD_RULES` when :func:`backward` sweeps the topologically
ordered :class:`ComputationRecord` of a scalar loss.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from src.utils.errors import AutogradError


_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording on the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple["Tensor", ...]
    out: np.ndarray
    saved: dict[str, Any] = field(default_factory=dict)


BackwardRule = Callable[[Node, np.ndarray], Sequence["np.ndarray | None"]]
BACKWARD_RULES: dict[str, BackwardRule] = {}


def register_backward(*ops: str) -> Callable[[BackwardRule], BackwardRule]:
    def decorator(rule: BackwardRule) -> BackwardRule:
        for op in ops:
            BACKWARD_RULES[op] = rule
        return rule
    return decorator


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    # numpy defers binary operators to the Tensor overloads below.
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None) -> None:
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    @classmethod
    def from_op(cls, data: np.ndarray, op: str, inputs: tuple["Tensor", ...], **saved: Any) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.name = None
        out.requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        out.node = Node(op=op, inputs=inputs, out=out.data, saved=saved) if out.requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> "ComputationRecord":
        return backward(self)

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        op = f", op={self.node.op}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{flag}{op})"

    def __add__(self, other: Any) -> "Tensor":
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        return ops.neg(self)

    def __matmul__(self, other: Any) -> "Tensor":
        return ops.matmul(self, other)

    def __rmatmul__(self, other: Any) -> "Tensor":
        return ops.matmul(other, self)

    def __getitem__(self, key: Any) -> "Tensor":
        return ops.index(self, key)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, axes: Sequence[int] | None = None) -> "Tensor":
        return ops.transpose(self, axes)

    @property
    def mT(self) -> "Tensor":
        return ops.swapaxes(self, -1, -2)


def as_tensor(value: Any) -> Tensor:
    """Wrap non-tensors as constants; tensors pass through untouched."""
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(values: Any, name: str | None = None) -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


@dataclass(frozen=True)
class RecordEntry:
    node: Node
    output: Tensor


class ComputationRecord:
    """Operations reachable from a root tensor, in an order where inputs precede outputs."""

    def __init__(self, entries: list[RecordEntry], leaves: list[Tensor]) -> None:
        self.entries = entries
        self.leaves = leaves

    @classmethod
    def trace(cls, root: Tensor) -> "ComputationRecord":
        entries: list[RecordEntry] = []
        leaves: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                entries.append(RecordEntry(node=tensor.node, output=tensor))  # type: ignore[arg-type]
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            if tensor.node is None:
                if tensor.requires_grad:
                    leaves.append(tensor)
                continue
            stack.append((tensor, True))
            for parent in reversed(tensor.node.inputs):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(entries, leaves)

    def ops(self) -> list[str]:
        return [entry.node.op for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RecordEntry]:
        return iter(self.entries)


def backward(loss: Tensor) -> ComputationRecord:
    """Populate ``grad`` of every requires_grad leaf reachable from a scalar loss.

    Gradients accumulate: a leaf used several times (or across several calls)
    receives the sum of its contributions.
    """
    if loss.size != 1:
        raise AutogradError(f"backward needs a scalar loss, got shape {loss.shape}")
    record = ComputationRecord.trace(loss)
    if not record:
        raise AutogradError("backward called on a tensor that no recorded operation produced")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(record.entries):
        grad = pending.pop(id(entry.output), None)
        if grad is None:
            continue
        node = entry.node
        rule = BACKWARD_RULES.get(node.op)
        if rule is None:
            raise AutogradError(f"no backward rule registered for '{node.op}'")
        input_grads = rule(node, grad)
        for tensor, tensor_grad in zip(node.inputs, input_grads):
            if tensor_grad is None or not tensor.requires_grad:
                continue
            if tensor_grad.shape != tensor.shape:
                raise AutogradError(
                    f"backward rule of '{node.op}' returned gradient {tensor_grad.shape} for input {tensor.shape}"
                )
            if tensor.node is None:
                tensor.grad = np.array(tensor_grad, dtype=np.float64) if tensor.grad is None else tensor.grad + tensor_grad
            else:
                key = id(tensor)
                pending[key] = pending[key] + tensor_grad if key in pending else tensor_grad
    return record


from src.tensor import ops  # noqa: E402

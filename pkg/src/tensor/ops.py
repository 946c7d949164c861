"""Differentiable primitives.

Each forward function validates shapes and finiteness, computes its value with
numpy and records a node; the matching backward rule is registered under the
same operation name.
"""
from __future__ import annotations

import builtins
from typing import Any, Sequence

import numpy as np

from src.tensor.tensor import Node, Tensor, as_tensor, register_backward
from src.utils.errors import NonFiniteError, ShapeError


Axis = int | tuple[int, ...] | None


def _inputs(op: str, *values: Any) -> tuple[Tensor, ...]:
    tensors = tuple(as_tensor(v) for v in values)
    for tensor in tensors:
        if not np.isfinite(tensor.data).all():
            raise NonFiniteError(f"{op}: non-finite value in input of shape {tensor.shape}")
    return tensors


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes broadcasting added or stretched to reach its shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    stretched = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if stretched:
        grad = grad.sum(axis=stretched, keepdims=True)
    return grad.reshape(shape)


def _normalize_axes(op: str, axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"{op}: axis {ax} out of range for rank {ndim}")
        normalized.append(ax % ndim)
    return tuple(sorted(normalized))


# -- elementwise binary ------------------------------------------------------

def add(a: Any, b: Any) -> Tensor:
    a, b = _inputs("add", a, b)
    _broadcast_shape("add", a, b)
    return Tensor.from_op(a.data + b.data, "add", (a, b))


@register_backward("add")
def _add_backward(node: Node, grad: np.ndarray):
    a, b = node.inputs
    return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


def sub(a: Any, b: Any) -> Tensor:
    a, b = _inputs("sub", a, b)
    _broadcast_shape("sub", a, b)
    return Tensor.from_op(a.data - b.data, "sub", (a, b))


@register_backward("sub")
def _sub_backward(node: Node, grad: np.ndarray):
    a, b = node.inputs
    return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)


def mul(a: Any, b: Any) -> Tensor:
    a, b = _inputs("mul", a, b)
    _broadcast_shape("mul", a, b)
    return Tensor.from_op(a.data * b.data, "mul", (a, b))


@register_backward("mul")
def _mul_backward(node: Node, grad: np.ndarray):
    a, b = node.inputs
    return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)


def div(a: Any, b: Any) -> Tensor:
    a, b = _inputs("div", a, b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0.0):
        raise NonFiniteError(f"div: zero in denominator of shape {b.shape}")
    return Tensor.from_op(a.data / b.data, "div", (a, b))


@register_backward("div")
def _div_backward(node: Node, grad: np.ndarray):
    a, b = node.inputs
    grad_a = grad / b.data
    return _unbroadcast(grad_a, a.shape), _unbroadcast(-grad_a * node.out, b.shape)


def neg(x: Any) -> Tensor:
    (x,) = _inputs("neg", x)
    return Tensor.from_op(-x.data, "neg", (x,))


@register_backward("neg")
def _neg_backward(node: Node, grad: np.ndarray):
    return (-grad,)


def matmul(a: Any, b: Any) -> Tensor:
    """Batched matrix product; leading dimensions broadcast."""
    a, b = _inputs("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands need rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None
    return Tensor.from_op(np.matmul(a.data, b.data), "matmul", (a, b))


@register_backward("matmul")
def _matmul_backward(node: Node, grad: np.ndarray):
    a, b = node.inputs
    grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
    grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad) if b.requires_grad else None
    return (
        None if grad_a is None else _unbroadcast(grad_a, a.shape),
        None if grad_b is None else _unbroadcast(grad_b, b.shape),
    )


# -- layout -----------------------------------------------------------------

def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = _inputs("concat", *tensors)
    if not parts:
        raise ShapeError("concat: nothing to concatenate")
    rank = parts[0].ndim
    if not -rank <= axis < rank:
        raise ShapeError(f"concat: axis {axis} out of range for rank {rank}")
    axis %= rank
    reference = parts[0].shape
    for part in parts[1:]:
        if part.ndim != rank or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(reference, part.shape)) if i != axis
        ):
            raise ShapeError(f"concat: shapes {reference} and {part.shape} differ off axis {axis}")
    sizes = [part.shape[axis] for part in parts]
    return Tensor.from_op(np.concatenate([p.data for p in parts], axis=axis), "concat", parts, axis=axis, sizes=sizes)


@register_backward("concat")
def _concat_backward(node: Node, grad: np.ndarray):
    bounds = np.cumsum(node.saved["sizes"])[:-1]
    return tuple(np.split(grad, bounds, axis=node.saved["axis"]))


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("stack: nothing to stack")
    rank = parts[0].ndim + 1
    if not -rank <= axis < rank:
        raise ShapeError(f"stack: axis {axis} out of range for rank {rank}")
    axis %= rank
    expanded = [reshape(p, p.shape[:axis] + (1,) + p.shape[axis:]) for p in parts]
    return concat(expanded, axis=axis)


def index(x: Any, key: Any) -> Tensor:
    """Basic slicing or integer-array gathering; repeated indices accumulate in backward."""
    (x,) = _inputs("slice", x)
    key = key if isinstance(key, tuple) else (key,)
    gather = builtins.any(isinstance(k, (np.ndarray, list)) for k in key)
    op = "take" if gather else "slice"
    try:
        out = x.data[key]
    except IndexError as exc:
        raise ShapeError(f"{op}: index {key!r} invalid for shape {x.shape}: {exc}") from None
    return Tensor.from_op(np.array(out, dtype=np.float64), op, (x,), key=key)


@register_backward("slice", "take")
def _index_backward(node: Node, grad: np.ndarray):
    (x,) = node.inputs
    full = np.zeros_like(x.data)
    np.add.at(full, node.saved["key"], grad)
    return (full,)


def take(x: Any, indices: np.ndarray, axis: int = 0) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"take: axis {axis} out of range for rank {x.ndim}")
    key = (slice(None),) * (axis % x.ndim) + (np.asarray(indices, dtype=np.intp),)
    return index(x, key)


def transpose(x: Any, axes: Sequence[int] | None = None) -> Tensor:
    (x,) = _inputs("transpose", x)
    perm = tuple(reversed(range(x.ndim))) if axes is None else tuple(a % x.ndim for a in axes)
    if sorted(perm) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {tuple(axes or ())} is not a permutation for shape {x.shape}")
    return Tensor.from_op(np.transpose(x.data, perm), "transpose", (x,), perm=perm)


@register_backward("transpose")
def _transpose_backward(node: Node, grad: np.ndarray):
    return (np.transpose(grad, np.argsort(node.saved["perm"])),)


def swapaxes(x: Any, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)
    perm = list(range(x.ndim))
    perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
    return transpose(x, perm)


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    (x,) = _inputs("reshape", x)
    shape = tuple(int(d) for d in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}") from None
    return Tensor.from_op(out, "reshape", (x,))


@register_backward("reshape")
def _reshape_backward(node: Node, grad: np.ndarray):
    return (grad.reshape(node.inputs[0].shape),)


# -- reductions -------------------------------------------------------------

def sum(x: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    (x,) = _inputs("sum", x)
    axes = _normalize_axes("sum", axis, x.ndim)
    return Tensor.from_op(x.data.sum(axis=axes, keepdims=keepdims), "sum", (x,), axes=axes, keepdims=keepdims)


def mean(x: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    (x,) = _inputs("mean", x)
    axes = _normalize_axes("mean", axis, x.ndim)
    if x.size == 0:
        raise ShapeError(f"mean: empty input of shape {x.shape}")
    return Tensor.from_op(x.data.mean(axis=axes, keepdims=keepdims), "mean", (x,), axes=axes, keepdims=keepdims)


def _expand_reduced(node: Node, grad: np.ndarray) -> np.ndarray:
    (x,) = node.inputs
    if not node.saved["keepdims"]:
        grad = np.expand_dims(grad, node.saved["axes"])
    return np.broadcast_to(grad, x.shape)


@register_backward("sum")
def _sum_backward(node: Node, grad: np.ndarray):
    return (np.array(_expand_reduced(node, grad)),)


@register_backward("mean")
def _mean_backward(node: Node, grad: np.ndarray):
    (x,) = node.inputs
    count = int(np.prod([x.shape[a] for a in node.saved["axes"]]))
    return (_expand_reduced(node, grad) / count,)


# -- elementwise unary ------------------------------------------------------

def sigmoid(x: Any) -> Tensor:
    (x,) = _inputs("sigmoid", x)
    return Tensor.from_op(0.5 * (1.0 + np.tanh(0.5 * x.data)), "sigmoid", (x,))


@register_backward("sigmoid")
def _sigmoid_backward(node: Node, grad: np.ndarray):
    return (grad * node.out * (1.0 - node.out),)


def tanh(x: Any) -> Tensor:
    (x,) = _inputs("tanh", x)
    return Tensor.from_op(np.tanh(x.data), "tanh", (x,))


@register_backward("tanh")
def _tanh_backward(node: Node, grad: np.ndarray):
    return (grad * (1.0 - node.out * node.out),)


def relu(x: Any) -> Tensor:
    (x,) = _inputs("relu", x)
    return Tensor.from_op(np.maximum(x.data, 0.0), "relu", (x,))


@register_backward("relu")
def _relu_backward(node: Node, grad: np.ndarray):
    return (grad * (node.inputs[0].data > 0.0),)


def exp(x: Any) -> Tensor:
    (x,) = _inputs("exp", x)
    out = np.exp(x.data)
    if not np.isfinite(out).all():
        raise NonFiniteError(f"exp: overflow for input of shape {x.shape}")
    return Tensor.from_op(out, "exp", (x,))


@register_backward("exp")
def _exp_backward(node: Node, grad: np.ndarray):
    return (grad * node.out,)


def sqrt(x: Any) -> Tensor:
    (x,) = _inputs("sqrt", x)
    if np.any(x.data < 0.0):
        raise NonFiniteError(f"sqrt: negative value in input of shape {x.shape}")
    return Tensor.from_op(np.sqrt(x.data), "sqrt", (x,))


@register_backward("sqrt")
def _sqrt_backward(node: Node, grad: np.ndarray):
    return (grad * 0.5 / node.out,)


def abs(x: Any) -> Tensor:  # noqa: A001
    (x,) = _inputs("abs", x)
    return Tensor.from_op(np.abs(x.data), "abs", (x,))


@register_backward("abs")
def _abs_backward(node: Node, grad: np.ndarray):
    return (grad * np.sign(node.inputs[0].data),)


def maximum(x: Any, floor: float) -> Tensor:
    """Elementwise max against a scalar; the subgradient at ties is 0."""
    (x,) = _inputs("maximum", x)
    return Tensor.from_op(np.maximum(x.data, floor), "maximum", (x,), floor=float(floor))


@register_backward("maximum")
def _maximum_backward(node: Node, grad: np.ndarray):
    return (grad * (node.inputs[0].data > node.saved["floor"]),)


def softmax(x: Any, axis: int = -1) -> Tensor:
    (x,) = _inputs("softmax", x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    weights = np.exp(shifted)
    out = weights / weights.sum(axis=axis, keepdims=True)
    return Tensor.from_op(out, "softmax", (x,), axis=axis)


@register_backward("softmax")
def _softmax_backward(node: Node, grad: np.ndarray):
    out = node.out
    inner = (grad * out).sum(axis=node.saved["axis"], keepdims=True)
    return (out * (grad - inner),)


def layer_norm(x: Any, gain: Any, bias: Any, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and shift by ``bias``."""
    x, gain, bias = _inputs("layer_norm", x, gain, bias)
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(f"layer_norm: gain {gain.shape} and bias {bias.shape} must be ({width},) for input {x.shape}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std
    return Tensor.from_op(normalized * gain.data + bias.data, "layer_norm", (x, gain, bias),
                          normalized=normalized, inv_std=inv_std)


@register_backward("layer_norm")
def _layer_norm_backward(node: Node, grad: np.ndarray):
    x, gain, _ = node.inputs
    normalized, inv_std = node.saved["normalized"], node.saved["inv_std"]
    width = x.shape[-1]
    leading = tuple(range(grad.ndim - 1))
    grad_normalized = grad * gain.data
    grad_x = (inv_std / width) * (
        width * grad_normalized
        - grad_normalized.sum(axis=-1, keepdims=True)
        - normalized * (grad_normalized * normalized).sum(axis=-1, keepdims=True)
    )
    return grad_x, (grad * normalized).sum(axis=leading), grad.sum(axis=leading)


def dropout(x: Any, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must lie in [0, 1), got {rate}")
    (x,) = _inputs("dropout", x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: a random generator is required when training with rate > 0")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor.from_op(x.data * mask, "dropout", (x,), mask=mask)


@register_backward("dropout")
def _dropout_backward(node: Node, grad: np.ndarray):
    return (grad * node.saved["mask"],)

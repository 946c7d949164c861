"""Central finite-difference checks of reverse-mode gradients."""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.tensor import ops
from src.tensor.tensor import Tensor, backward, no_grad, parameter
from src.utils.errors import NonDeterministicError


class GradCheckEntry(BaseModel):
    name: str = Field(description="Input (or parameter group) the errors belong to.")
    max_rel_error: float = Field(description="Largest per-element relative error.")
    mean_rel_error: float = Field(description="Mean per-element relative error.")
    checked: int = Field(description="Number of elements perturbed.")
    passed: bool = Field(description="True when max_rel_error < tol.")


class GradCheckReport(BaseModel):
    tol: float
    eps: float
    entries: list[GradCheckEntry] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def failures(self) -> list[GradCheckEntry]:
        return [entry for entry in self.entries if not entry.passed]

    @property
    def max_rel_error(self) -> float:
        return max((entry.max_rel_error for entry in self.entries), default=0.0)

    def extend(self, other: "GradCheckReport") -> None:
        self.entries.extend(other.entries)

    def to_table(self) -> str:
        width = max([len(e.name) for e in self.entries] + [5])
        lines = [f"{'input':<{width}}  {'max_rel':>10}  {'mean_rel':>10}  {'checked':>7}  status"]
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            lines.append(f"{e.name:<{width}}  {e.max_rel_error:>10.3e}  {e.mean_rel_error:>10.3e}  {e.checked:>7d}  {status}")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, atol: float = 1e-7, floor: float = 1e-6) -> float:
    """|analytic - numeric| relative to the larger magnitude, never to less than ``floor``.

    Pairs where both magnitudes are below ``atol`` count as exact. Central
    differences carry round-off of about machine epsilon * |f| / eps, roughly
    1e-11 at eps=1e-5, so small gradients are measured against ``floor``.
    """
    scale = max(abs(analytic), abs(numeric))
    if scale < atol:
        return 0.0
    return abs(analytic - numeric) / max(scale, floor)


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-5,
    *,
    names: Sequence[str] | None = None,
    max_entries: int | None = None,
    atol: float = 1e-7,
    floor: float = 1e-6,
    seed: int = 0,
) -> GradCheckReport:
    """Compare ``backward`` gradients of ``f(*inputs)`` with central differences.

    ``max_entries`` checks a seeded sample of elements per input instead of all
    of them. Pairs where both gradients are below ``atol`` count as exact, and
    gradients smaller than ``floor`` are compared on the absolute scale ``floor``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    names = list(names) if names is not None else [f"input{i}" for i in range(len(inputs))]
    for tensor in inputs:
        tensor.zero_grad()

    loss = f(*inputs)
    with no_grad():
        repeat = f(*inputs)
    if not np.array_equal(loss.data, repeat.data):
        raise NonDeterministicError(
            f"function under check is not deterministic: {loss.item()!r} then {repeat.item()!r}"
        )
    backward(loss)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol, eps=eps)
    for name, tensor in zip(names, inputs):
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_entries is not None and 0 < max_entries < flat.size:
            positions = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        errors = []
        with no_grad():
            for position in positions:
                original = flat[position]
                flat[position] = original + eps
                plus = f(*inputs).item()
                flat[position] = original - eps
                minus = f(*inputs).item()
                flat[position] = original
                numeric = (plus - minus) / (2.0 * eps)
                errors.append(relative_error(float(analytic.reshape(-1)[position]), numeric, atol, floor))
        worst = max(errors, default=0.0)
        report.entries.append(GradCheckEntry(
            name=name,
            max_rel_error=worst,
            mean_rel_error=float(np.mean(errors)) if errors else 0.0,
            checked=len(errors),
            passed=worst < tol,
        ))
    return report


@dataclass
class PrimitiveCase:
    op: str
    build: Callable[[np.random.Generator, tuple[int, ...]], tuple[Callable[..., Tensor], list[Tensor]]]


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...], low: float = 0.2) -> np.ndarray:
    magnitude = rng.uniform(low, 1.5, size=shape)
    return magnitude * rng.choice([-1.0, 1.0], size=shape)


def _weighted(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor(rng.normal(size=shape))


def _unary(op: str, fn: Callable[[Tensor], Tensor], positive: bool = False) -> PrimitiveCase:
    def build(rng, shape):
        values = rng.uniform(0.3, 2.0, size=shape) if positive else _away_from_zero(rng, shape)
        x = parameter(values)
        weights = _weighted(rng, shape)
        return (lambda x: ops.sum(fn(x) * weights)), [x]
    return PrimitiveCase(op, build)


def _binary(op: str, fn: Callable[[Tensor, Tensor], Tensor], positive_rhs: bool = False) -> PrimitiveCase:
    def build(rng, shape):
        a = parameter(rng.normal(size=shape))
        rhs_shape = shape[-1:]
        b_values = rng.uniform(0.5, 2.0, size=rhs_shape) if positive_rhs else rng.normal(size=rhs_shape)
        b = parameter(b_values)
        weights = _weighted(rng, shape)
        return (lambda a, b: ops.sum(fn(a, b) * weights)), [a, b]
    return PrimitiveCase(op, build)


def _matmul_case() -> PrimitiveCase:
    def build(rng, shape):
        a = parameter(rng.normal(size=shape))
        b = parameter(rng.normal(size=(shape[-1], 3)))
        weights = _weighted(rng, shape[:-1] + (3,))
        return (lambda a, b: ops.sum(ops.matmul(a, b) * weights)), [a, b]
    return PrimitiveCase("matmul", build)


def _layout_case(op: str, fn: Callable[[Tensor], Tensor]) -> PrimitiveCase:
    def build(rng, shape):
        x = parameter(rng.normal(size=shape))
        probe = fn(Tensor(x.data))
        weights = _weighted(rng, probe.shape)
        return (lambda x: ops.sum(fn(x) * weights)), [x]
    return PrimitiveCase(op, build)


def _concat_case() -> PrimitiveCase:
    def build(rng, shape):
        a = parameter(rng.normal(size=shape))
        b = parameter(rng.normal(size=shape[:-1] + (2,)))
        weights = _weighted(rng, shape[:-1] + (shape[-1] + 2,))
        return (lambda a, b: ops.sum(ops.concat([a, b], axis=-1) * weights)), [a, b]
    return PrimitiveCase("concat", build)


def _layer_norm_case() -> PrimitiveCase:
    def build(rng, shape):
        x = parameter(rng.normal(size=shape))
        gain = parameter(rng.uniform(0.5, 1.5, size=shape[-1:]))
        bias = parameter(rng.normal(size=shape[-1:]))
        weights = _weighted(rng, shape)
        return (lambda x, g, b: ops.sum(ops.layer_norm(x, g, b) * weights)), [x, gain, bias]
    return PrimitiveCase("layer_norm", build)


def _dropout_case() -> PrimitiveCase:
    def build(rng, shape):
        x = parameter(rng.normal(size=shape))
        weights = _weighted(rng, shape)
        mask_seed = int(rng.integers(0, 2**31))
        return (lambda x: ops.sum(ops.dropout(x, 0.3, True, np.random.default_rng(mask_seed)) * weights)), [x]
    return PrimitiveCase("dropout", build)


PRIMITIVE_CASES: list[PrimitiveCase] = [
    _binary("add", ops.add),
    _binary("sub", ops.sub),
    _binary("mul", ops.mul),
    _binary("div", ops.div, positive_rhs=True),
    _matmul_case(),
    _concat_case(),
    _layout_case("slice", lambda x: x[..., 1:]),
    _layout_case("take", lambda x: ops.take(x, np.array([0, 0, 1]), axis=0)),
    _layout_case("transpose", lambda x: ops.transpose(x)),
    _layout_case("reshape", lambda x: ops.reshape(x, (-1,))),
    _layout_case("sum", lambda x: ops.sum(x, axis=-1)),
    _layout_case("mean", lambda x: ops.mean(x, axis=0, keepdims=True)),
    _unary("sigmoid", ops.sigmoid),
    _unary("tanh", ops.tanh),
    _unary("relu", ops.relu),
    _unary("exp", ops.exp),
    _layout_case("softmax", lambda x: ops.softmax(x, axis=-1)),
    _unary("sqrt", ops.sqrt, positive=True),
    _unary("abs", ops.abs),
    _unary("maximum", lambda x: ops.maximum(x, 0.05)),
    _layer_norm_case(),
    _dropout_case(),
]

PRIMITIVE_SHAPES: tuple[tuple[int, ...], ...] = ((2, 3), (3, 4, 5), (2, 2, 3, 4))


def check_primitives(eps: float = 1e-5, tol: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Gradient-check every primitive on the shapes in PRIMITIVE_SHAPES."""
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol, eps=eps)
    for case in PRIMITIVE_CASES:
        for shape in PRIMITIVE_SHAPES:
            f, inputs = case.build(rng, shape)
            label = "x".join(str(d) for d in shape)
            names = [f"{case.op}[{label}]#{i}" for i in range(len(inputs))]
            report.extend(grad_check(f, inputs, eps=eps, tol=tol, names=names))
    return report

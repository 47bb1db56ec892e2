"""Central finite-difference checks for the reverse-mode engine."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .params import Parameter
from .tensor import Tape, Tensor

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
ERROR_FLOOR = 1e-5


@dataclass
class CoordinateCheck:
    group: str
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    relative_error: float
    passed: bool


@dataclass
class GradcheckReport:
    """Per-coordinate comparisons plus per-group summaries."""

    tolerance: float
    checks: list[CoordinateCheck] = field(default_factory=list)

    @property
    def pass_fraction(self) -> float:
        if not self.checks:
            return 1.0
        return sum(c.passed for c in self.checks) / len(self.checks)

    @property
    def max_relative_error(self) -> float:
        return max((c.relative_error for c in self.checks), default=0.0)

    def groups(self) -> dict[str, dict[str, float]]:
        summary: dict[str, dict[str, float]] = {}
        for check in self.checks:
            entry = summary.setdefault(check.group, {"coordinates": 0, "passed": 0, "max_relative_error": 0.0})
            entry["coordinates"] += 1
            entry["passed"] += int(check.passed)
            entry["max_relative_error"] = max(entry["max_relative_error"], check.relative_error)
        return summary

    def passed(self, required_fraction: float = 1.0) -> bool:
        return self.pass_fraction >= required_fraction

    def extend(self, other: "GradcheckReport") -> None:
        self.checks.extend(other.checks)

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "coordinates": len(self.checks),
            "pass_fraction": self.pass_fraction,
            "max_relative_error": self.max_relative_error,
            "groups": self.groups(),
        }


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def numeric_partial(evaluate: Callable[[], float], array: np.ndarray, index: tuple[int, ...], step: float = DEFAULT_STEP) -> float:
    """Central difference of ``evaluate`` with respect to ``array[index]``, restoring the entry afterwards."""
    original = array[index]
    try:
        array[index] = original + step
        upper = evaluate()
        array[index] = original - step
        lower = evaluate()
    finally:
        array[index] = original
    return (upper - lower) / (2.0 * step)


def check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    coordinates: Sequence[tuple[Parameter, tuple[int, ...]]],
    group_of: Callable[[str], str],
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradcheckReport:
    """Compare backward gradients of ``loss_fn`` against central differences.

    Args:
        loss_fn: Builds the scalar loss; must be deterministic across calls
        params: Every parameter whose gradient should be populated
        coordinates: (parameter, index) pairs to check
        group_of: Maps a parameter name to its report group
        step: Finite-difference step
        tolerance: Maximum relative error for a coordinate to pass

    Returns:
        Report with one entry per coordinate
    """
    for param in params:
        param.tensor.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)

    def evaluate() -> float:
        return float(loss_fn().data)

    report = GradcheckReport(tolerance=tolerance)
    for param, index in coordinates:
        assert param.grad is not None
        analytic = float(param.grad[index])
        numeric = numeric_partial(evaluate, param.data, index, step)
        error = relative_error(analytic, numeric)
        report.checks.append(CoordinateCheck(group_of(param.name), param.name, tuple(int(i) for i in index), analytic, numeric, error, error <= tolerance))
    return report


def check_function(
    name: str,
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    rng: np.random.Generator,
    coordinates_per_input: int = 20,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradcheckReport:
    """Check ``fn``'s adjoint through a fixed random projection of its output.

    Args:
        name: Report group
        fn: Operation under test
        inputs: Inputs; those with ``requires_grad`` are checked
        rng: Source of the projection and of sampled coordinates
        coordinates_per_input: Coordinates sampled per differentiable input
    """
    probe = fn(*inputs)
    weights = rng.normal(size=probe.shape)

    def loss() -> Tensor:
        return T.tensor_sum(T.mul(fn(*inputs), weights))

    params = [Parameter(f"{name}.input{i}", t) for i, t in enumerate(inputs) if t.requires_grad]
    coordinates = []
    for param in params:
        flat = rng.choice(param.data.size, size=min(coordinates_per_input, param.data.size), replace=False)
        coordinates.extend((param, np.unravel_index(int(i), param.data.shape)) for i in flat)
    return check_parameters(loss, params, coordinates, lambda _: name, step=step, tolerance=tolerance)


def check_primitives(rng: Optional[np.random.Generator] = None, coordinates_per_input: int = 20) -> GradcheckReport:
    """Run randomized adjoint checks over every differentiable primitive."""
    rng = rng if rng is not None else np.random.default_rng(0)

    def leaf(*shape: int, positive: bool = False) -> Tensor:
        data = rng.normal(size=shape)
        return Tensor(np.abs(data) + 0.5 if positive else data, requires_grad=True)

    state = T.BatchNormState(3)
    ids = rng.integers(0, 6, size=7)
    mask = rng.random((4, 3)) > 0.5
    cases: list[tuple[str, Callable[..., Tensor], list[Tensor]]] = [
        ("matmul", T.matmul, [leaf(5, 4), leaf(4, 3)]),
        ("batched_matmul", T.matmul, [leaf(2, 5, 4), leaf(4, 3)]),
        ("softmax_rows", T.softmax_rows, [leaf(3, 4)]),
        ("batch_norm", lambda x, g, b: T.batch_norm(x, g, b, state, training=True, update_stats=False), [leaf(8, 3), leaf(3), leaf(3)]),
        ("embedding_lookup", lambda table: T.embedding_lookup(table, ids), [leaf(6, 4)]),
        ("add", T.add, [leaf(4, 3), leaf(3)]),
        ("sub", T.sub, [leaf(4, 3), leaf(4, 1)]),
        ("mul", T.mul, [leaf(4, 3), leaf(4, 3)]),
        ("div", T.div, [leaf(4, 3), leaf(4, 3, positive=True)]),
        ("relu", T.relu, [leaf(4, 3)]),
        ("sigmoid", T.sigmoid, [leaf(4, 3)]),
        ("exp", T.exp, [leaf(4, 3)]),
        ("log", T.log, [leaf(4, 3, positive=True)]),
        ("sqrt", T.sqrt, [leaf(4, 3, positive=True)]),
        ("abs", T.absolute, [leaf(4, 3)]),
        ("where", lambda a, b: T.where(mask, a, b), [leaf(4, 3), leaf(4, 3)]),
        ("sum_axis", lambda x: T.tensor_sum(x, axis=1), [leaf(4, 3)]),
        ("mean", lambda x: T.tensor_mean(x, axis=0), [leaf(4, 3)]),
        ("transpose", lambda x: T.transpose(x, (1, 0, 2)), [leaf(2, 3, 4)]),
        ("getitem", lambda x: x[np.array([0, 2, 2]), 1:], [leaf(4, 3)]),
        ("concat", lambda a, b: T.concat([a, b], axis=1), [leaf(4, 3), leaf(4, 2)]),
    ]
    report = GradcheckReport(tolerance=DEFAULT_TOLERANCE)
    for name, fn, inputs in cases:
        report.extend(check_function(name, fn, inputs, rng, coordinates_per_input))
    return report

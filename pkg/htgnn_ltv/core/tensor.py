"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded together with
their adjoint functions. ``Tape.backward`` replays the record in strict reverse
order and accumulates gradients into leaf tensors that require them.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..utils.exceptions import ContractError, DimensionError, DomainError, IndexOutOfRangeError

LOG_FLOOR = 1e-12
MASK_VALUE = -1e9
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9

Operand = Union["Tensor", np.ndarray, float, int]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Row-major float64 array with an optional gradient buffer."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        """Run the reverse sweep of the tape that produced this tensor."""
        if self._tape is None:
            raise ContractError("backward requires a loss recorded on an active tape")
        self._tape.backward(self)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: Optional[Union[int, tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes if axes else None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)


@dataclass
class TapeNode:
    """One executed primitive: its inputs, output and adjoint."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Usable as a context manager; operations executed inside the ``with`` block
    are recorded. A tape belongs to the thread that activated it.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> None:
        self.nodes.append(TapeNode(op=op, inputs=inputs, output=output, backward=backward))
        output._tape = self

    def reset(self) -> None:
        self.nodes.clear()

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(leaf) into every reachable leaf's ``grad``.

        Gradients accumulate additively, so two sweeps over the same tape
        double every leaf gradient.

        Args:
            loss: Scalar output recorded on this tape

        Raises:
            ContractError: If the loss is not a scalar or the tape is empty
        """
        if loss.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise ContractError("backward called on an empty tape")

        produced = {id(node.output) for node in self.nodes}
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            grad_out = pending.pop(id(node.output), None)
            if grad_out is None:
                continue
            input_grads = node.backward(grad_out)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                pending[key] = pending[key] + grad if key in pending else grad
                if key not in produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            grad = pending.get(key)
            if grad is None:
                continue
            if tensor.grad is None:
                tensor.grad = np.array(grad, dtype=np.float64, copy=True)
            else:
                tensor.grad += grad


_local = threading.local()


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional[Tape]:
    """Return the innermost tape active on this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(loss: Tensor) -> None:
    """Run the reverse sweep for ``loss`` on the tape that recorded it."""
    loss.backward()


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def primitive(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap a forward result and record its adjoint on the active tape.

    Args:
        op: Operation name, kept on the tape for diagnostics
        data: Forward result
        inputs: Input tensors, in the order ``backward_fn`` returns gradients
        backward_fn: Maps the output gradient to one gradient (or None) per input

    Returns:
        Output tensor
    """
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, tuple(inputs), out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}", a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# Binary elementwise
# ---------------------------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return primitive("add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return primitive("sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    return primitive("mul", a.data * b.data, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data

    def _backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return primitive("div", out, (a, b), _backward)


def where(condition: np.ndarray, a: Operand, b: Operand) -> Tensor:
    """Select ``a`` where ``condition`` holds, ``b`` elsewhere; the condition is constant."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(condition, dtype=bool)
    out = np.where(cond, a.data, b.data)

    def _backward(g):
        return _unbroadcast(np.where(cond, g, 0.0), a.shape), _unbroadcast(np.where(cond, 0.0, g), b.shape)

    return primitive("where", out, (a, b), _backward)


# ---------------------------------------------------------------------------
# Unary elementwise
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return primitive("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = np.exp(-np.logaddexp(0.0, -x.data))
    return primitive("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return primitive("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    """Natural log with a floor of 1e-12 on non-negative inputs.

    Raises:
        DomainError: If any input is negative
    """
    if np.any(x.data < 0) or np.any(np.isnan(x.data)):
        bad = x.data[(x.data < 0) | np.isnan(x.data)].reshape(-1)[0]
        raise DomainError(f"log of non-positive value {bad}")
    floored = x.data < LOG_FLOOR
    safe = np.where(floored, LOG_FLOOR, x.data)
    return primitive("log", np.log(safe), (x,), lambda g: (np.where(floored, 0.0, g / safe),))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(x.data)
    return primitive("sqrt", out, (x,), lambda g: (np.where(out > 0, g / (2.0 * np.where(out > 0, out, 1.0)), 0.0),))


def absolute(x: Tensor) -> Tensor:
    return primitive("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clamp(x: Tensor, low: float = -np.inf, high: float = np.inf) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return primitive("clamp", np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


_UNARY = {"relu": relu, "sigmoid": sigmoid, "log": log, "exp": exp}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, *operands: Operand) -> Tensor:
    """Dispatch a named elementwise operation.

    Args:
        op: One of add, sub, mul, relu, sigmoid, log, exp
        operands: One tensor for unary ops, two for binary ops

    Returns:
        Pointwise result
    """
    if op in _UNARY:
        if len(operands) != 1:
            raise ContractError(f"{op} takes one operand, got {len(operands)}")
        return _UNARY[op](as_tensor(operands[0]))
    if op in _BINARY:
        if len(operands) != 2:
            raise ContractError(f"{op} takes two operands, got {len(operands)}")
        a, b = as_tensor(operands[0]), as_tensor(operands[1])
        return _BINARY[op](a, b)
    raise ContractError(f"Unknown elementwise operation: {op}")


# ---------------------------------------------------------------------------
# Linear algebra and reductions
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch semantics over leading dimensions.

    Raises:
        DimensionError: If inner dimensions disagree
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch dimensions disagree for shapes {a.shape} and {b.shape}", a.shape, b.shape) from None

    def _backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return primitive("matmul", out, (a, b), _backward)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return primitive("sum", out, (x,), _backward)


def tensor_mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return mul(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {shape}", x.shape, tuple(shape)) from None
    return primitive("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    perm = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(perm))
    return primitive("transpose", np.transpose(x.data, perm), (x,), lambda g: (np.transpose(g, inverse),))


def swap_last(x: Tensor) -> Tensor:
    perm = list(range(x.ndim))
    perm[-1], perm[-2] = perm[-2], perm[-1]
    return transpose(x, perm)


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]

    def _backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return primitive("getitem", np.array(out, copy=True), (x,), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat requires at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = tuple(t.shape for t in tensors)
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}", *shapes) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return primitive("concat", out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        position = axis if axis >= 0 else t.ndim + 1 + axis
        expanded.append(reshape(t, t.shape[:position] + (1,) + t.shape[position:]))
    return concat(expanded, axis=axis)


# ---------------------------------------------------------------------------
# Composite primitives with fused adjoints
# ---------------------------------------------------------------------------


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis with per-row max subtraction."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return primitive("softmax", out, (x,), _backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; the adjoint scatter-adds into those rows.

    Raises:
        IndexOutOfRangeError: If an id lies outside [0, V)
    """
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size:
        bad = ids[(ids < 0) | (ids >= vocab)]
        if bad.size:
            raise IndexOutOfRangeError(f"embedding id {int(bad[0])} out of range for table with {vocab} rows", int(bad[0]))
    out = table.data[ids]

    def _backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return primitive("embedding", out, (table,), _backward)


class BatchNormState:
    """Running mean and variance of one batch-normalisation site."""

    def __init__(self, dim: int):
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool, update_stats: bool = True) -> Tensor:
    """Batch normalisation over axis 0 of a [b×d] input.

    Train mode normalises by batch moments and, when ``update_stats`` is set,
    moves the running statistics with momentum 0.9. Eval mode uses the running
    statistics.

    Raises:
        ContractError: If b == 1 in train mode
    """
    if x.ndim != 2:
        raise DimensionError(f"batch_norm expects a [b×d] input, got {x.shape}", x.shape)
    b = x.shape[0]
    if training:
        if b < 2:
            raise ContractError("batch_norm in train mode needs at least two rows (batch variance undefined)")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if update_stats:
            state.running_mean = BN_MOMENTUM * state.running_mean + (1.0 - BN_MOMENTUM) * mean
            state.running_var = BN_MOMENTUM * state.running_var + (1.0 - BN_MOMENTUM) * x.data.var(axis=0, ddof=1)
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPSILON)
    x_hat = (x.data - mean) * inv_std
    out = gamma.data * x_hat + beta.data

    def _backward(g):
        d_gamma = (g * x_hat).sum(axis=0)
        d_beta = g.sum(axis=0)
        d_hat = g * gamma.data
        if training:
            d_x = inv_std / b * (b * d_hat - d_hat.sum(axis=0) - x_hat * (d_hat * x_hat).sum(axis=0))
        else:
            d_x = d_hat * inv_std
        return d_x, d_gamma, d_beta

    return primitive("batch_norm", out, (x, gamma, beta), _backward)

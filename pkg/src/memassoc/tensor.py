"""Dense float64 tensors with define-by-run reverse-mode autodiff.

A :class:`Tape` records every op whose inputs live on it, in execution order,
so a reverse sweep over ``tape.nodes`` is already a valid topological order.
Tensors built without a tape are constants and never receive gradients.

Broadcasting is limited to a Python scalar against anything, and a length-n
vector against the rows of an (m, n) matrix (bias add).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError


class Tensor:
    __slots__ = ("data", "grad", "tape", "parents", "backward_fn", "op")
    # make ndarray <op> Tensor defer to the reflected Tensor method
    __array_ufunc__ = None

    def __init__(self, data, tape: "Tape | None" = None, parents=(), backward_fn=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.parents: tuple[Tensor, ...] = parents
        self.backward_fn: Callable | None = backward_fn
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class Tape:
    """Ordered record of op nodes for one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def leaf(self, data) -> Tensor:
        t = Tensor(np.array(data, dtype=np.float64), tape=self)
        self.nodes.append(t)
        return t

    def __len__(self):
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, inputs: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    tape = next((t.tape for t in inputs if t.tape is not None), None)
    if tape is None:
        return Tensor(data, op=op)
    out = Tensor(data, tape=tape, parents=tuple(inputs), backward_fn=backward_fn, op=op)
    tape.nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    if len(shape) == 1 and grad.ndim == 2:
        return grad.sum(axis=0)
    return grad.reshape(shape)


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
        return
    if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
        return
    raise DimensionError(f"{op}: incompatible shapes {sa} and {sb}")


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return _record(A @ B, (a, b), backward, "matmul")


def concat(parts: Sequence, axis: int = 1) -> Tensor:
    """Join 2-d tensors along columns (``axis=1``) or rows (``axis=0``)."""
    parts = [as_tensor(p) for p in parts]
    other = 1 - axis
    if any(p.data.ndim != 2 for p in parts) or len({p.shape[other] for p in parts}) != 1:
        raise DimensionError(f"concat: incompatible shapes {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward(g):
        if axis == 1:
            return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))
        return tuple(g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _record(np.concatenate([p.data for p in parts], axis=axis), parts, backward, "concat")


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")
    A, B = a.data, b.data
    return _record(A * B, (a, b),
                   lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)), "mul")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def _logistic(X: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(X))
    return np.where(X >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _logistic(x.data)
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _record(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def exp(x) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data)
    return _record(e, (x,), lambda g: (g * e,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log: input must be strictly positive")
    X = x.data
    return _record(np.log(X), (x,), lambda g: (g / X,), "log")


def softplus(x) -> Tensor:
    x = as_tensor(x)
    X = x.data
    s = _logistic(X)
    return _record(np.logaddexp(0.0, X), (x,), lambda g: (g * s,), "softplus")


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _record(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "relu": relu, "sigmoid": sigmoid,
    "tanh": tanh, "exp": exp, "log": log, "softplus": softplus,
}


def elementwise(kind: str, *inputs) -> Tensor:
    try:
        fn = ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise op {kind!r}") from None
    return fn(*inputs)


# ---------------------------------------------------------------- reductions


def _axis(axis):
    # "rows" collapses the row dimension (column-wise result), "cols" the reverse
    return {None: None, "all": None, "rows": 0, "cols": 1}.get(axis, axis)


def sum(x, axis=None) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    ax = _axis(axis)
    shape = x.shape

    def backward(g):
        if ax is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),)

    return _record(x.data.sum(axis=ax), (x,), backward, "sum")


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    ax = _axis(axis)
    n = x.data.size if ax is None else x.shape[ax]
    if n == 0:
        raise DimensionError("mean: empty extent")
    return mul(sum(x, ax), 1.0 / n)


def reduce(kind: str, x, axis=None) -> Tensor:
    if kind == "sum":
        return sum(x, axis)
    if kind == "mean":
        return mean(x, axis)
    raise ContractError(f"unknown reduction {kind!r}")


# ---------------------------------------------------------------- backward


def backward(tape: Tape, root: Tensor) -> Tensor:
    """Reverse sweep from a scalar ``root``; fills ``.grad`` on every node of ``tape``."""
    if root.data.size != 1:
        raise ContractError(f"backward: root must be scalar, got shape {root.shape}")
    if root.tape is not tape:
        raise ContractError("backward: root was not recorded on this tape")
    for node in tape.nodes:
        node.grad = None
    root.grad = np.ones_like(root.data)
    for node in reversed(tape.nodes):
        if node.grad is None or node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if parent.tape is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
    for node in tape.nodes:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
    return root

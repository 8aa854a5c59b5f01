"""Define-by-run reverse-mode autodiff over dense float64 matrices.

Every value on the tape is a 2-D array (scalars are 1x1).  Ops append nodes
in execution order, so the node list is already a topological order and
``Tape.backward`` is a single reverse sweep.  The primitive set is exactly
what the networks and loss terms need: matmul, bias add, elementwise
activations and arithmetic, column concat, mean reductions, row
gather/scatter (equivalent to multiplication by a constant 0/1 selector),
and a fused entropic-transport node whose backward replays its iterations.

Tapes are cheap and rebuilt per training step; nothing here is thread-safe.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, NumericError, ShapeError
from .kernels import sinkhorn_backward, sinkhorn_forward

Array = np.ndarray


def _as_matrix(value) -> Array:
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ShapeError(f"tape values must be 2-D matrices, got shape {a.shape}")
    return a


class Node:
    """One tape entry: cached forward value plus its backward rule."""

    __slots__ = ("tape", "value", "grad", "op", "needs_grad", "is_param", "_backward")

    def __init__(self, tape: "Tape", value: Array, op: str, needs_grad: bool,
                 backward: Callable[[Array], None] | None = None,
                 is_param: bool = False):
        self.tape = tape
        self.value = value
        self.grad: Array | None = None
        self.op = op
        self.needs_grad = needs_grad
        self.is_param = is_param
        self._backward = backward
        tape.nodes.append(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def accum(self, g: Array) -> None:
        """Add an upstream gradient contribution to this node."""
        if not self.needs_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # Arithmetic sugar; scalars go through scale/add_scalar.
    def __add__(self, other):
        if isinstance(other, Node):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Node):
            return subtract(self, other)
        return add_scalar(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Node):
            return multiply(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape}, param={self.is_param})"


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, *, param: bool = False, name: str = "leaf") -> Node:
        """Register an input matrix; ``param=True`` marks it for gradients."""
        return Node(self, _as_matrix(value), name, needs_grad=param, is_param=param)

    def constant(self, value, name: str = "const") -> Node:
        return self.leaf(value, param=False, name=name)

    def backward(self, loss: Node, check_finite: bool = True) -> dict[Node, Array]:
        """Reverse-accumulate from a scalar loss to every parameter leaf.

        Returns a map from parameter node to its gradient (same shape as the
        parameter).  Parameters the loss does not depend on get zeros.
        """
        if loss.tape is not self:
            raise ContractError("loss node does not belong to this tape")
        if loss.value.shape != (1, 1):
            raise ContractError(
                f"backward requires a scalar (1x1) loss, got shape {loss.value.shape}")
        loss.accum(np.ones((1, 1)))
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        grads: dict[Node, Array] = {}
        for node in self.nodes:
            if node.is_param:
                g = node.grad if node.grad is not None else np.zeros_like(node.value)
                grads[node] = g
        if check_finite:
            for node, g in grads.items():
                if not np.isfinite(g).all():
                    bad = self._first_nonfinite()
                    raise NumericError(
                        f"non-finite gradient for parameter '{node.op}'"
                        + (f"; first non-finite value at node '{bad}'" if bad else ""))
        return grads

    def _first_nonfinite(self) -> str | None:
        for node in self.nodes:
            if not np.isfinite(node.value).all():
                return node.op
            if node.grad is not None and not np.isfinite(node.grad).all():
                return node.op
        return None


def backward(tape: Tape, loss: Node, check_finite: bool = True) -> dict[Node, Array]:
    """Functional alias for :meth:`Tape.backward`."""
    return tape.backward(loss, check_finite=check_finite)


def _same_tape(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ContractError("operands live on different tapes")
    return tape


def _needs(*nodes: Node) -> bool:
    return any(n.needs_grad for n in nodes)


def matmul(a: Node, b: Node) -> Node:
    """Matrix product ``a @ b``."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    tape = _same_tape(a, b)
    out = Node(tape, a.value @ b.value, "matmul", _needs(a, b))

    def back(g: Array) -> None:
        if a.needs_grad:
            a.accum(g @ b.value.T)
        if b.needs_grad:
            b.accum(a.value.T @ g)

    out._backward = back
    return out


def bias_add(x: Node, b: Node) -> Node:
    """Add a 1xM row vector to every row of an NxM matrix."""
    if b.shape[0] != 1 or b.shape[1] != x.shape[1]:
        raise ShapeError(f"bias_add expects bias 1x{x.shape[1]}, got {b.shape} for {x.shape}")
    tape = _same_tape(x, b)
    out = Node(tape, x.value + b.value, "bias_add", _needs(x, b))

    def back(g: Array) -> None:
        if x.needs_grad:
            x.accum(g)
        if b.needs_grad:
            b.accum(g.sum(axis=0, keepdims=True))

    out._backward = back
    return out


def row_mul(x: Node, v: Node) -> Node:
    """Multiply every row of an NxM matrix by a 1xM row vector."""
    if v.shape[0] != 1 or v.shape[1] != x.shape[1]:
        raise ShapeError(f"row_mul expects vector 1x{x.shape[1]}, got {v.shape} for {x.shape}")
    tape = _same_tape(x, v)
    out = Node(tape, x.value * v.value, "row_mul", _needs(x, v))

    def back(g: Array) -> None:
        if x.needs_grad:
            x.accum(g * v.value)
        if v.needs_grad:
            v.accum((g * x.value).sum(axis=0, keepdims=True))

    out._backward = back
    return out


def activation(x: Node, kind: str, slope: float = 0.01) -> Node:
    """Elementwise relu or leaky_relu; derivative at 0 takes the positive branch."""
    if kind == "relu":
        slope = 0.0
    elif kind == "leaky_relu":
        if not 0.0 < slope < 1.0:
            raise ContractError(f"leaky_relu slope must be in (0,1), got {slope}")
    else:
        raise ContractError(f"unknown activation kind '{kind}'")
    mask = x.value >= 0.0
    out = Node(x.tape, np.where(mask, x.value, slope * x.value), kind, x.needs_grad)

    def back(g: Array) -> None:
        if x.needs_grad:
            x.accum(np.where(mask, g, slope * g))

    out._backward = back
    return out


def relu(x: Node) -> Node:
    return activation(x, "relu")


def leaky_relu(x: Node, slope: float = 0.01) -> Node:
    return activation(x, "leaky_relu", slope)


def _unary(x: Node, op: str, value: Array, dback: Callable[[], Array]) -> Node:
    out = Node(x.tape, value, op, x.needs_grad)

    def back(g: Array) -> None:
        if x.needs_grad:
            x.accum(g * dback())

    out._backward = back
    return out


def square(x: Node) -> Node:
    return _unary(x, "square", x.value * x.value, lambda: 2.0 * x.value)


def exp(x: Node) -> Node:
    v = np.exp(x.value)
    return _unary(x, "exp", v, lambda: v)


def log(x: Node) -> Node:
    return _unary(x, "log", np.log(x.value), lambda: 1.0 / x.value)


def sqrt(x: Node) -> Node:
    v = np.sqrt(x.value)
    return _unary(x, "sqrt", v, lambda: 0.5 / v)


def reciprocal(x: Node) -> Node:
    v = 1.0 / x.value
    return _unary(x, "reciprocal", v, lambda: -v * v)


def scale(x: Node, c: float) -> Node:
    return _unary(x, "scale", c * x.value, lambda: np.full_like(x.value, c))


def add_scalar(x: Node, c: float) -> Node:
    return _unary(x, "add_scalar", x.value + c, lambda: np.ones_like(x.value))


def _binary_same_shape(a: Node, b: Node, op: str) -> Tape:
    if a.shape != b.shape:
        raise ShapeError(f"{op} expects equal shapes, got {a.shape} and {b.shape}")
    return _same_tape(a, b)


def add(a: Node, b: Node) -> Node:
    tape = _binary_same_shape(a, b, "add")
    out = Node(tape, a.value + b.value, "add", _needs(a, b))

    def back(g: Array) -> None:
        if a.needs_grad:
            a.accum(g)
        if b.needs_grad:
            b.accum(g)

    out._backward = back
    return out


def subtract(a: Node, b: Node) -> Node:
    tape = _binary_same_shape(a, b, "subtract")
    out = Node(tape, a.value - b.value, "subtract", _needs(a, b))

    def back(g: Array) -> None:
        if a.needs_grad:
            a.accum(g)
        if b.needs_grad:
            b.accum(-g)

    out._backward = back
    return out


def multiply(a: Node, b: Node) -> Node:
    tape = _binary_same_shape(a, b, "multiply")
    out = Node(tape, a.value * b.value, "multiply", _needs(a, b))

    def back(g: Array) -> None:
        if a.needs_grad:
            a.accum(g * b.value)
        if b.needs_grad:
            b.accum(g * a.value)

    out._backward = back
    return out


def concat_cols(a: Node, b: Node) -> Node:
    """Column-wise concatenation; backward splits the gradient at a's width."""
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols row counts disagree: {a.shape} vs {b.shape}")
    tape = _same_tape(a, b)
    split = a.shape[1]
    out = Node(tape, np.concatenate([a.value, b.value], axis=1), "concat_cols",
               _needs(a, b))

    def back(g: Array) -> None:
        if a.needs_grad:
            a.accum(g[:, :split])
        if b.needs_grad:
            b.accum(g[:, split:])

    out._backward = back
    return out


def mean(x: Node, axis: int | None = None) -> Node:
    """Mean over all entries (1x1), over rows (1xM), or over columns (Nx1)."""
    n, m = x.shape
    if axis is None:
        value = np.array([[x.value.mean()]])
        count = n * m
    elif axis == 0:
        value = x.value.mean(axis=0, keepdims=True)
        count = n
    elif axis == 1:
        value = x.value.mean(axis=1, keepdims=True)
        count = m
    else:
        raise ContractError(f"mean axis must be None, 0 or 1, got {axis}")
    out = Node(x.tape, value, "mean", x.needs_grad)

    def back(g: Array) -> None:
        if x.needs_grad:
            x.accum(np.broadcast_to(g / count, x.shape))

    out._backward = back
    return out


def gather_rows(x: Node, idx) -> Node:
    """Select rows by index; same as multiplying by a constant 0/1 selector."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Node(x.tape, x.value[idx], "gather_rows", x.needs_grad)

    def back(g: Array) -> None:
        if x.needs_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.value)
            np.add.at(x.grad, idx, g)

    out._backward = back
    return out


def scatter_rows(x: Node, idx, num_rows: int) -> Node:
    """Place rows of x at positions ``idx`` of an otherwise-zero matrix."""
    idx = np.asarray(idx, dtype=np.intp)
    if len(idx) != x.shape[0]:
        raise ShapeError(f"scatter_rows got {len(idx)} indices for {x.shape[0]} rows")
    value = np.zeros((num_rows, x.shape[1]))
    value[idx] = x.value
    out = Node(x.tape, value, "scatter_rows", x.needs_grad)

    def back(g: Array) -> None:
        if x.needs_grad:
            x.accum(g[idx])

    out._backward = back
    return out


def sinkhorn_pair(a: Node, b: Node, eps: float, iters: int) -> Node:
    """Entropic transport cost between two point sets as one fused node.

    Forward runs the log-domain scaling iterations; backward replays them in
    reverse, so the gradient is that of the truncated iteration exactly.
    """
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"point sets differ in dimension: {a.shape} vs {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractError("sinkhorn_pair requires non-empty point sets")
    if eps <= 0 or iters <= 0:
        raise ContractError(f"eps and iters must be positive, got eps={eps} iters={iters}")
    if not (np.isfinite(a.value).all() and np.isfinite(b.value).all()):
        raise NumericError("sinkhorn_pair received non-finite points")
    tape = _same_tape(a, b)
    # Canonical operand order makes the value exactly symmetric in (a, b).
    swap = _canonical_swap(a.value, b.value)
    av, bv = (b.value, a.value) if swap else (a.value, b.value)
    cost, u_hist, v_hist = sinkhorn_forward(av, bv, eps, iters)
    out = Node(tape, np.array([[cost]]), "sinkhorn_pair", _needs(a, b))

    def back(g: Array) -> None:
        ga, gb = sinkhorn_backward(av, bv, eps, u_hist, v_hist, float(g[0, 0]))
        if swap:
            ga, gb = gb, ga
        if a.needs_grad:
            a.accum(ga)
        if b.needs_grad:
            b.accum(gb)

    out._backward = back
    return out


def _canonical_swap(a: Array, b: Array) -> bool:
    """True when (b, a) is the canonical order for a symmetric pair op."""
    if a.shape != b.shape:
        return b.shape < a.shape
    ab, bb = a.tobytes(), b.tobytes()
    return bb < ab


def parameters(nodes: Iterable[Node]) -> list[Node]:
    """Filter an iterable of nodes down to parameter leaves."""
    return [n for n in nodes if n.is_param]

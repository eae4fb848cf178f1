"""Reverse-mode automatic differentiation over dense numpy arrays.

Every operation on :class:`Node` values appends a node to the owning
:class:`Tape`.  Nodes hold their forward value; :func:`grad` walks the tape
backwards and accumulates vector-Jacobian products.

>>> tape = Tape()
>>> x = tape.leaf(3.0)
>>> y = square(relu(x))
>>> grad(tape, y, [x])[0]
array(6.)
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class AutodiffError(RuntimeError):
    pass


class Node:
    __slots__ = ("tape", "index", "value", "parents", "op", "backward", "requires_grad")

    def __init__(self, tape: Tape, value, parents=(), op="leaf", backward=None, requires_grad=False):
        self.tape = tape
        self.value = value
        self.parents = tuple(parents)
        self.op = op
        self.backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.shape})"

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return slice_(self, idx)


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value) -> Node:
        """A differentiable input."""
        return Node(self, np.array(value, dtype=float), requires_grad=True)

    def constant(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=float), op="const")

    def __len__(self):
        return len(self.nodes)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise AutodiffError("operation needs at least one Node operand")


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise AutodiffError("operands recorded on different tapes")
        return x
    return tape.constant(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _unary(x: Node, value, op: str, backward: Callable) -> Node:
    return Node(x.tape, value, (x,), op, backward)


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = np.shape(a.value), np.shape(b.value)
    return Node(tape, a.value + b.value, (a, b), "add",
                lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = np.shape(a.value), np.shape(b.value)
    return Node(tape, a.value - b.value, (a, b), "add",
                lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Node:
    """Elementwise product of two nodes (broadcasting)."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return Node(tape, av * bv, (a, b), "mul",
                lambda g: (_unbroadcast(g * bv, np.shape(av)), _unbroadcast(g * av, np.shape(bv))))


def scale(x: Node, factor) -> Node:
    """Multiply by a constant scalar or array."""
    factor = np.asarray(factor, dtype=float)
    shape = np.shape(x.value)
    return _unary(x, x.value * factor, "scale", lambda g: (_unbroadcast(g * factor, shape),))


def matmul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value

    def backward(g):
        g = np.asarray(g)
        if av.ndim == 1 and bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return Node(tape, av @ bv, (a, b), "matmul", backward)


def relu(x: Node) -> Node:
    mask = x.value > 0
    # subgradient at exactly 0 is 0
    return _unary(x, np.where(mask, x.value, 0.0), "relu", lambda g: (g * mask,))


def abs_(x: Node) -> Node:
    sign = np.sign(x.value)
    return _unary(x, np.abs(x.value), "abs", lambda g: (g * sign,))


def square(x: Node) -> Node:
    v = x.value
    return _unary(x, v * v, "square", lambda g: (2.0 * v * g,))


def sqrt(x: Node) -> Node:
    v = np.sqrt(x.value)
    with np.errstate(divide="ignore"):
        d = np.where(v > 0, 0.5 / np.where(v > 0, v, 1.0), 0.0)
    return _unary(x, v, "sqrt", lambda g: (g * d,))


def sin(x: Node) -> Node:
    c = np.cos(x.value)
    return _unary(x, np.sin(x.value), "sin", lambda g: (g * c,))


def sigmoid(x: Node) -> Node:
    s = 1.0 / (1.0 + np.exp(-x.value))
    return _unary(x, s, "sigmoid", lambda g: (g * s * (1.0 - s),))


def clip(x: Node, lower, upper) -> Node:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    inside = (x.value >= lower) & (x.value <= upper)
    return _unary(x, np.clip(x.value, lower, upper), "clip", lambda g: (g * inside,))


def sum_(x: Node, axis=None) -> Node:
    shape = np.shape(x.value)

    def backward(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _unary(x, np.sum(x.value, axis=axis), "sum", backward)


def concat(xs: Sequence, axis: int = -1) -> Node:
    tape = _tape_of(*xs)
    nodes = [_lift(tape, x) for x in xs]
    sizes = [np.shape(n.value)[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Node(tape, np.concatenate([n.value for n in nodes], axis=axis), nodes, "concat", backward)


def slice_(x: Node, idx) -> Node:
    shape = np.shape(x.value)

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _unary(x, np.asarray(x.value[idx]), "slice", backward)


def grad(tape: Tape, output: Node, wrt: Sequence[Node], seed=None) -> list[np.ndarray]:
    """Gradients of ``output`` with respect to each node in ``wrt``.

    For a non-scalar output the default seed is all ones, i.e. the gradient
    of ``sum(output)``.
    """
    if output.tape is not tape:
        raise AutodiffError("output was not recorded on this tape")
    for w in wrt:
        if not isinstance(w, Node) or w.tape is not tape:
            raise AutodiffError("wrt node is not on this tape")
    grads: dict[int, np.ndarray] = {
        output.index: np.ones_like(output.value, dtype=float) if seed is None else np.asarray(seed, float)
    }
    wanted = {w.index for w in wrt}
    for node in reversed(tape.nodes[: output.index + 1]):
        g = grads.pop(node.index, None) if node.index not in wanted else grads.get(node.index)
        if g is None or node.backward is None or not node.requires_grad:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if not parent.requires_grad:
                continue
            if parent.index in grads:
                grads[parent.index] = grads[parent.index] + pg
            else:
                grads[parent.index] = np.asarray(pg, dtype=float)
    return [np.asarray(grads.get(w.index, np.zeros_like(w.value)), dtype=float) for w in wrt]

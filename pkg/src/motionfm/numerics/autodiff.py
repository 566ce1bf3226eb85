"""Tape-based reverse-mode automatic differentiation over float64 numpy arrays.

Every primitive appends a :class:`Node` to the :class:`Tape` it was called on,
so node order on the tape is already a topological order and the backward
pass is a single reverse sweep.

Example::

    def loss(v):
        h = relu(v["x"] @ v["w1"])
        return mean(square(h @ v["w2"]))

    value, grads = forward_backward(loss, {"x": x, "w1": w1, "w2": w2},
                                    params=["w1", "w2"])
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import NumericError, ShapeError

Array = np.ndarray

_GELU_C = math.sqrt(2.0 / math.pi)


class Tape:
    """Ordered record of primitive applications."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def leaf(self, value, name: str | None = None, param: bool = False) -> "Node":
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value in leaf {name!r}")
        return self._push(Node(self, arr, (), None, param, name or "leaf", param))

    def const(self, value) -> "Node":
        return self.leaf(value, name="const")

    def clear(self) -> None:
        """Drop every node. Nodes point back at their tape, so this breaks the cycle."""
        for node in self.nodes:
            node.parents, node.vjp = (), None
        self.nodes.clear()

    def _push(self, node: "Node") -> "Node":
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def record(self, op: str, value: Array, parents: Sequence["Node"], vjp) -> "Node":
        if not np.all(np.isfinite(value)):
            raise NumericError(
                f"numeric overflow: node #{len(self.nodes)} ({op}) produced non-finite values"
            )
        needs = any(p.requires_grad for p in parents)
        node = Node(self, value, tuple(parents) if needs else (), vjp if needs else None,
                    needs, op, False)
        return self._push(node)

    def backward(self, out: "Node") -> dict[str, Array]:
        """Gradients of scalar ``out`` with respect to every parameter leaf."""
        if out.tape is not self:
            raise ShapeError("output node belongs to a different tape")
        if out.value.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {out.shape}")
        grads: list[Array | None] = [None] * (out.index + 1)
        grads[out.index] = np.ones_like(out.value)
        result: dict[str, Array] = {}
        for node in reversed(self.nodes[: out.index + 1]):
            g = grads[node.index]
            if node.is_param:
                if g is None:
                    g = np.zeros_like(node.value)
                if not np.all(np.isfinite(g)):
                    raise NumericError(f"numeric overflow in gradient of {node.name!r}")
                result[node.name] = g
                continue
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads[parent.index]
                grads[parent.index] = pg if prev is None else prev + pg
        return result


class Node:
    __slots__ = ("tape", "value", "parents", "vjp", "requires_grad", "name", "is_param", "index")

    def __init__(self, tape, value, parents, vjp, requires_grad, name, is_param):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.is_param = is_param
        self.index = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Node({self.name}, shape={self.shape})"

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

    def __getitem__(self, index):
        return slice_(self, index)


def _lift(x, tape: Tape) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ShapeError("cannot combine nodes from different tapes")
        return x
    return tape.const(x)


def _pair(a, b) -> tuple[Node, Node]:
    tape = a.tape if isinstance(a, Node) else b.tape
    return _lift(a, tape), _lift(b, tape)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shapes(op: str, *shapes) -> None:
    try:
        np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"{op}: shapes {' and '.join(map(str, shapes))} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Node:
    a, b = _pair(a, b)
    _broadcast_shapes("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return a.tape.record("add", a.value + b.value, (a, b),
                         lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Node:
    a, b = _pair(a, b)
    _broadcast_shapes("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return a.tape.record("sub", a.value - b.value, (a, b),
                         lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Node:
    a, b = _pair(a, b)
    _broadcast_shapes("mul", a.shape, b.shape)
    av, bv = a.value, b.value
    return a.tape.record("mul", av * bv, (a, b),
                         lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def square(x: Node) -> Node:
    xv = x.value
    return x.tape.record("square", xv * xv, (x,), lambda g: (2.0 * xv * g,))


def relu(x: Node) -> Node:
    mask = x.value > 0
    return x.tape.record("relu", np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Node) -> Node:
    y = np.tanh(x.value)
    return x.tape.record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def gelu(x: Node) -> Node:
    """GELU, tanh approximation."""
    xv = x.value
    x2 = xv * xv
    th = np.tanh(_GELU_C * xv * (1.0 + 0.044715 * x2))
    y = 0.5 * xv * (1.0 + th)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * dinner),)

    return x.tape.record("gelu", y, (x,), vjp)


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def sum(x: Node, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
    axes = _norm_axis(axis, x.ndim)
    shape = x.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))

    def vjp(g):
        return (np.broadcast_to(np.reshape(g, kept), shape).copy(),)

    return x.tape.record("sum", np.sum(x.value, axis=axes, keepdims=keepdims), (x,), vjp)


def mean(x: Node, axis=None, keepdims: bool = False) -> Node:
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    shape = x.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(shape))

    def vjp(g):
        return (np.broadcast_to(np.reshape(g, kept) / count, shape).copy(),)

    return x.tape.record("mean", np.mean(x.value, axis=axes, keepdims=keepdims), (x,), vjp)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Node:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    _broadcast_shapes("matmul", a.shape[:-2], b.shape[:-2])
    av, bv = a.value, b.value

    def vjp(g):
        ga = g @ np.swapaxes(bv, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(av, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, av.shape),
                None if gb is None else _unbroadcast(gb, bv.shape))

    return a.tape.record("matmul", av @ bv, (a, b), vjp)


def softmax(x: Node, axis: int = -1) -> Node:
    z = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return x.tape.record("softmax", y, (x,), vjp)


def layer_norm(x: Node, gamma, beta, eps: float = 1e-5) -> Node:
    """Normalize over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    tape = x.tape
    gamma, beta = _lift(gamma, tape), _lift(beta, tape)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine params must have shape ({d},)")
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gv = gamma.value

    def vjp(g):
        dxhat = g * gv
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return tape.record("layer_norm", xhat * gv + beta.value, (x, gamma, beta), vjp)


# ---------------------------------------------------------------- structural

def concat(nodes: Sequence, axis: int = 0) -> Node:
    tape = next(n.tape for n in nodes if isinstance(n, Node))
    nodes = [_lift(n, tape) for n in nodes]
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    splits = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape.record("concat", value, nodes, vjp)


def slice_(x: Node, index) -> Node:
    """Basic (non-fancy) indexing."""
    idx = index if isinstance(index, tuple) else (index,)
    if any(not isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in idx):
        raise ShapeError("slice supports ints, slices, Ellipsis and None only")
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[index] = g
        return (out,)

    return x.tape.record("slice", x.value[index], (x,), vjp)


def broadcast_to(x: Node, shape: Iterable[int]) -> Node:
    shape = tuple(shape)
    _broadcast_shapes("broadcast", x.shape, shape)
    src = x.shape
    return x.tape.record("broadcast", np.broadcast_to(x.value, shape).copy(), (x,),
                         lambda g: (_unbroadcast(g, src),))


def reshape(x: Node, shape: Iterable[int]) -> Node:
    src = x.shape
    try:
        value = x.value.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return x.tape.record("reshape", value, (x,), lambda g: (g.reshape(src),))


def transpose(x: Node, axes: Sequence[int]) -> Node:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return x.tape.record("transpose", np.transpose(x.value, axes), (x,),
                         lambda g: (np.transpose(g, inverse),))


# ---------------------------------------------------------------- driver

def forward_backward(
    build: Callable[[dict[str, Node]], Node],
    inputs: Mapping[str, Array],
    params: Iterable[str] | None = None,
) -> tuple[float, dict[str, Array]]:
    """Evaluate ``build`` on fresh leaves and return ``(value, grads)``.

    ``params`` names the leaves to differentiate; defaults to every input.
    Non-parameter leaves get no gradient entry.
    """
    names = set(inputs) if params is None else set(params)
    unknown = names - set(inputs)
    if unknown:
        raise ShapeError(f"parameters not bound to inputs: {sorted(unknown)}")
    tape = Tape()
    try:
        leaves = {k: tape.leaf(v, name=k, param=k in names) for k, v in inputs.items()}
        out = build(leaves)
        if not isinstance(out, Node) or out.value.size != 1:
            raise ShapeError("build must return a scalar node")
        grads = tape.backward(out)
        return float(out.value.reshape(())), grads
    finally:
        tape.clear()

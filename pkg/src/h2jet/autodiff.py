"""Reverse-mode automatic differentiation over a static expression graph.

Graphs are built once from :func:`variable` / :func:`constant` leaves and the
operators below, then evaluated repeatedly with :func:`forward` and
differentiated with :func:`backward`.  Values may be python floats or small
numpy arrays; binary operations broadcast the way numpy does and reduce the
adjoint back to each operand's shape.
"""

from __future__ import annotations

import itertools
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np

GradientSet = Dict[str, np.ndarray]

_ids = itertools.count()


class AutodiffError(ValueError):
    pass


class Node:
    __slots__ = ("op", "inputs", "attr", "value", "name", "id", "_order")

    def __init__(self, op: str, inputs: Sequence["Node"] = (), attr=None, name=None, value=None):
        self.op = op
        self.inputs = tuple(inputs)
        self.attr = attr
        self.value = value
        self.name = name
        self.id = next(_ids)
        self._order = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node#{self.id} {self.op}{label}>"

    # arithmetic sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def constant(value, name=None) -> Node:
    return Node("constant", value=np.asarray(value, dtype=float) if np.ndim(value) else float(value),
                name=name)


def variable(name: str) -> Node:
    """A leaf bound at forward time (trainable parameter or data input)."""
    return Node("input", name=name)


def _unbroadcast(g, shape):
    if np.shape(g) == tuple(shape):
        return g
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g if len(shape) else float(g)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _check_positive(node, x):
    if np.any(np.asarray(x) <= 0.0):
        raise AutodiffError(f"{node!r}: argument must be strictly positive")


_FORWARD: Dict[str, Callable] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "neg": lambda a: -a,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "softplus": _softplus,
    "sigmoid": _sigmoid,
    "minimum": np.minimum,
    "matmul": lambda a, b: a @ b,
    "sum": lambda a: np.sum(a),
    "mean": lambda a: np.mean(a),
}


def add(a, b) -> Node:
    return Node("add", (_lift(a), _lift(b)))


def sub(a, b) -> Node:
    return Node("sub", (_lift(a), _lift(b)))


def mul(a, b) -> Node:
    return Node("mul", (_lift(a), _lift(b)))


def div(a, b) -> Node:
    return Node("div", (_lift(a), _lift(b)))


def neg(a) -> Node:
    return Node("neg", (_lift(a),))


def exp(a) -> Node:
    return Node("exp", (_lift(a),))


def ln(a) -> Node:
    return Node("ln", (_lift(a),))


log = ln


def sqrt(a) -> Node:
    return Node("sqrt", (_lift(a),))


def sin(a) -> Node:
    return Node("sin", (_lift(a),))


def cos(a) -> Node:
    return Node("cos", (_lift(a),))


def softplus(a) -> Node:
    return Node("softplus", (_lift(a),))


def sigmoid(a) -> Node:
    return Node("sigmoid", (_lift(a),))


def power(a, exponent: float) -> Node:
    return Node("power", (_lift(a),), attr=float(exponent))


def minimum(a, b) -> Node:
    """Elementwise minimum; ties send the adjoint to the first operand."""
    return Node("minimum", (_lift(a), _lift(b)))


def matmul(a, b) -> Node:
    return Node("matmul", (_lift(a), _lift(b)))


def sum(a) -> Node:  # noqa: A001 - mirrors numpy naming
    return Node("sum", (_lift(a),))


def mean(a) -> Node:
    return Node("mean", (_lift(a),))


def take(a, idx) -> Node:
    """Basic or advanced numpy indexing."""
    return Node("take", (_lift(a),), attr=idx)


def topological_order(root: Node) -> list:
    if root._order is not None:
        return root._order
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for parent in node.inputs:
            if parent.id not in seen:
                stack.append((parent, False))
    root._order = order
    return order


def forward(root: Node, bindings: Mapping[str, object] = None, check_finite: bool = True):
    """Evaluate every node feeding ``root``; returns ``root.value``."""
    bindings = bindings or {}
    for node in topological_order(root):
        op = node.op
        if op == "constant":
            continue
        if op == "input":
            try:
                val = bindings[node.name]
            except KeyError:
                raise AutodiffError(f"unbound input {node.name!r}") from None
            node.value = np.asarray(val, dtype=float) if np.ndim(val) else float(val)
            continue
        args = [p.value for p in node.inputs]
        if op in ("ln", "sqrt"):
            _check_positive(node, args[0])
        if op == "power":
            val = args[0] ** node.attr
        elif op == "take":
            val = np.asarray(args[0])[node.attr]
        else:
            val = _FORWARD[op](*args)
        if check_finite and not np.all(np.isfinite(val)):
            raise AutodiffError(f"{node!r}: non-finite value in forward pass")
        node.value = val
    return root.value


def _vjp(node: Node, g):
    op = node.op
    vals = [p.value for p in node.inputs]
    out = node.value
    if op == "add":
        return (_unbroadcast(g, np.shape(vals[0])), _unbroadcast(g, np.shape(vals[1])))
    if op == "sub":
        return (_unbroadcast(g, np.shape(vals[0])), _unbroadcast(-g, np.shape(vals[1])))
    if op == "mul":
        a, b = vals
        return (_unbroadcast(g * b, np.shape(a)), _unbroadcast(g * a, np.shape(b)))
    if op == "div":
        a, b = vals
        return (_unbroadcast(g / b, np.shape(a)), _unbroadcast(-g * out / b, np.shape(b)))
    if op == "neg":
        return (-g,)
    if op == "exp":
        return (g * out,)
    if op == "ln":
        return (g / vals[0],)
    if op == "sqrt":
        return (g * 0.5 / out,)
    if op == "sin":
        return (g * np.cos(vals[0]),)
    if op == "cos":
        return (-g * np.sin(vals[0]),)
    if op == "softplus":
        return (g * _sigmoid(vals[0]),)
    if op == "sigmoid":
        return (g * out * (1.0 - out),)
    if op == "power":
        p = node.attr
        return (g * p * vals[0] ** (p - 1.0),)
    if op == "minimum":
        a, b = vals
        first = np.asarray(a) <= np.asarray(b)
        return (_unbroadcast(np.where(first, g, 0.0), np.shape(a)),
                _unbroadcast(np.where(first, 0.0, g), np.shape(b)))
    if op == "matmul":
        a, b = np.asarray(vals[0]), np.asarray(vals[1])
        ga = g @ np.swapaxes(b, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))
    if op == "sum":
        return (np.broadcast_to(g, np.shape(vals[0])),)
    if op == "mean":
        size = np.size(vals[0])
        return (np.broadcast_to(g / size, np.shape(vals[0])),)
    if op == "take":
        z = np.zeros(np.shape(vals[0]))
        np.add.at(z, node.attr, g)
        return (z,)
    raise AutodiffError(f"no adjoint rule for {op!r}")


def backward(root: Node, wrt: Optional[Sequence[str]] = None) -> GradientSet:
    """Adjoints of scalar ``root`` with respect to its bound inputs."""
    order = topological_order(root)
    if root.value is None or any(n.value is None for n in order):
        raise AutodiffError("backward called before forward")
    if np.size(root.value) != 1:
        raise AutodiffError("backward needs a scalar root")
    adj = {root.id: np.ones_like(root.value) if np.ndim(root.value) else 1.0}
    grads: GradientSet = {}
    for node in reversed(order):
        g = adj.pop(node.id, None)
        if node.op == "input":
            if g is None:
                g = np.zeros_like(node.value) if np.ndim(node.value) else 0.0
            grads[node.name] = grads.get(node.name, 0.0) + g
            continue
        if g is None or node.op == "constant":
            continue
        for parent, pg in zip(node.inputs, _vjp(node, g)):
            if parent.op == "constant":
                continue
            if parent.id in adj:
                adj[parent.id] = adj[parent.id] + pg
            else:
                adj[parent.id] = pg
    if wrt is not None:
        missing = set(wrt) - grads.keys()
        if missing:
            raise AutodiffError(f"no path to inputs {sorted(missing)}")
        grads = {k: grads[k] for k in wrt}
    return {k: np.array(v, dtype=float) if np.ndim(v) else float(v) for k, v in grads.items()}


def reset(root: Node) -> None:
    """Forget cached values so a stale graph cannot be differentiated."""
    for node in topological_order(root):
        if node.op != "constant":
            node.value = None


def input_derivative(fn: Callable[[Node], Node], x: np.ndarray, node_index: int, channel: int = 0):
    """d fn(x)[node_index, :] / d x[node_index, channel] by reverse sweeps.

    ``fn`` maps an (n, F) input node to an (n, m) output node; every other
    entry of ``x`` is held fixed.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not 0 <= node_index < n:
        raise IndexError(f"node index {node_index} outside 0..{n - 1}")
    inp = variable("__x")
    out = fn(inp)
    result = []
    for j in range(int(np.shape(forward(out, {"__x": x}))[1])):
        root = take(out, (node_index, j))
        forward(root, {"__x": x})
        result.append(np.asarray(backward(root, ["__x"])["__x"])[node_index, channel])
    return np.array(result)

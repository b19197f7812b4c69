"""Tape-based reverse-mode differentiation over numpy arrays.

Every operation on a :class:`Var` that belongs to a recording :class:`Tape`
appends one node holding its parents, a forward closure and a backward
closure. ``Tape.backward`` walks the nodes in reverse and returns the
gradient of a scalar with respect to every watched parameter.

Vars built without a tape (``const``) are plain value carriers; operations on
them record nothing, which is how inference runs.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "forward_fn", "tape", "name")

    def __init__(self, value, tape: "Tape | None" = None, name: str | None = None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents: tuple = ()
        self.backward_fn = None
        self.forward_fn = None
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}{', ' + self.name if self.name else ''})"

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


def const(value) -> Var:
    return value if isinstance(value, Var) else Var(value)


class Tape:
    """Records a forward pass so it can be differentiated (and replayed)."""

    def __init__(self):
        self.nodes: list[Var] = []
        self.params: dict[str, Var] = {}

    def watch(self, name: str, value: np.ndarray) -> Var:
        v = Var(np.array(value, dtype=float), tape=self, name=name)
        self.params[name] = v
        return v

    def watch_all(self, params: dict[str, np.ndarray]) -> dict[str, Var]:
        return {k: self.watch(k, v) for k, v in params.items()}

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        if loss.value.size != 1:
            raise ValueError("backward needs a scalar loss")
        for node in self.nodes:
            node.grad = None
        for p in self.params.values():
            p.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None or node.backward_fn is None:
                continue
            node.backward_fn(node.grad)
        return {
            k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
            for k, p in self.params.items()
        }

    def replay(self) -> list[np.ndarray]:
        """Recompute every recorded node from its parents; returns the new values."""
        out = []
        for node in self.nodes:
            node.value = node.forward_fn(*[p.value for p in node.parents])
            out.append(node.value)
        return out


def _tape_of(args: Iterable) -> Tape | None:
    for a in args:
        if isinstance(a, Var) and a.tape is not None:
            return a.tape
    return None


def _accum(var: Var, g: np.ndarray) -> None:
    if var.tape is None:
        return
    if var.grad is None:
        var.grad = np.array(g, dtype=float)
    else:
        var.grad = var.grad + g


def _op(forward: Callable, parents: Sequence[Var], backward: Callable[[np.ndarray, Sequence[np.ndarray]], Sequence]):
    """Create a node. ``backward(g, parent_values)`` returns one gradient per parent."""
    parents = tuple(const(p) for p in parents)
    value = forward(*[p.value for p in parents])
    tape = _tape_of(parents)
    out = Var(value, tape=tape)
    if tape is not None:
        out.parents = parents
        out.forward_fn = forward

        def run_backward(g, _parents=parents):
            grads = backward(g, [p.value for p in _parents])
            for p, gp in zip(_parents, grads):
                if gp is not None and p.tape is not None:
                    _accum(p, gp)

        out.backward_fn = run_backward
        tape.nodes.append(out)
    return out


# ---------------------------------------------------------------- elementwise
def add(a, b) -> Var:
    return _op(np.add, (a, b), lambda g, v: (g, g))


def sub(a, b) -> Var:
    return _op(np.subtract, (a, b), lambda g, v: (g, -g))


def mul(a, b) -> Var:
    return _op(np.multiply, (a, b), lambda g, v: (g * v[1], g * v[0]))


def scale(a, c: float) -> Var:
    return _op(lambda x: x * c, (a,), lambda g, v: (g * c,))


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a) -> Var:
    def back(g, v):
        s = _sigmoid(v[0])
        return (g * s * (1.0 - s),)
    return _op(_sigmoid, (a,), back)


def tanh(a) -> Var:
    def back(g, v):
        t = np.tanh(v[0])
        return (g * (1.0 - t * t),)
    return _op(np.tanh, (a,), back)


def relu(a) -> Var:
    return _op(lambda x: np.maximum(x, 0.0), (a,), lambda g, v: (g * (v[0] > 0.0),))


def identity(a) -> Var:
    return const(a)


ACTIVATIONS = {"identity": identity, "relu": relu, "tanh": tanh, "sigmoid": sigmoid}


# ------------------------------------------------------------------ linear
def matvec(W, x) -> Var:
    """``W @ x`` for a matrix W and vector x."""
    return _op(np.matmul, (W, x), lambda g, v: (np.outer(g, v[1]), v[0].T @ g))


def affine(W, x, b) -> Var:
    def back(g, v):
        return (np.outer(g, v[1]), v[0].T @ g, g)
    return _op(lambda W_, x_, b_: W_ @ x_ + b_, (W, x, b), back)


def concat(parts: Sequence) -> Var:
    parts = [const(p) for p in parts]
    sizes = [p.value.size for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g, v):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(sizes)))

    return _op(lambda *xs: np.concatenate(xs), parts, back)


def reshape(a, shape) -> Var:
    return _op(lambda x: np.reshape(x, shape), (a,), lambda g, v: (np.reshape(g, v[0].shape),))


def take(a, idx) -> Var:
    idx = np.asarray(idx)

    def back(g, v):
        out = np.zeros_like(v[0])
        np.add.at(out, idx, g)
        return (out,)

    return _op(lambda x: x[idx], (a,), back)


def linearized(a, fn: Callable[[np.ndarray], np.ndarray], jac: Callable[[np.ndarray], np.ndarray]) -> Var:
    """Apply a black-box vector function whose Jacobian is known."""
    return _op(fn, (a,), lambda g, v: (jac(v[0]).T @ g,))


def wrap_at(a, index: int | None) -> Var:
    """Wrap one component to [-pi, pi); the gradient passes through unchanged."""
    if index is None:
        return const(a)

    def fwd(x):
        out = x.copy()
        out[index] = (out[index] + math.pi) % (2.0 * math.pi) - math.pi
        if out[index] >= math.pi:
            out[index] -= 2.0 * math.pi
        return out

    return _op(fwd, (a,), lambda g, v: (g,))


def where_mask(a, mask: np.ndarray) -> Var:
    """Elementwise multiply by a constant 0/1 mask."""
    mask = np.asarray(mask, dtype=float)
    return _op(lambda x: x * mask, (a,), lambda g, v: (g * mask,))


# --------------------------------------------------------------- reductions
def sum_all(a) -> Var:
    return _op(lambda x: np.sum(x), (a,), lambda g, v: (np.full_like(v[0], g),))


def sum_squares(a) -> Var:
    return _op(lambda x: np.dot(x.ravel(), x.ravel()), (a,), lambda g, v: (2.0 * g * v[0],))


def huber(a, delta: float = 1.0) -> Var:
    """Sum of Huber penalties; equals ``0.5 * x**2`` inside ``|x| <= delta``."""
    def fwd(x):
        ax = np.abs(x)
        return np.sum(np.where(ax <= delta, 0.5 * x * x, delta * (ax - 0.5 * delta)))

    def back(g, v):
        x = v[0]
        return (g * np.clip(x, -delta, delta),)

    return _op(fwd, (a,), back)


def total(vars_: Sequence[Var]) -> Var:
    """Sum of scalar Vars in one node (keeps long loss sums cheap)."""
    vars_ = [const(v) for v in vars_]
    if not vars_:
        return Var(0.0)
    return _op(lambda *xs: sum(xs, np.float64(0.0)), vars_, lambda g, v: tuple(g for _ in v))

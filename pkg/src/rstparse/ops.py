"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward() walks
the recorded graph once, in reverse topological order, accumulating gradients
into every node it can reach.  Only the operations the parsers need exist:
dense matvec, concatenation, slicing/element picks, elementwise nonlinearities
and sums.  Everything is computed at 64-bit precision.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def tensor(data) -> Tensor:
    """A leaf node (parameter or constant)."""
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch {a.data.shape} vs {b.data.shape}")
    return Tensor(a.data + b.data, (a, b), lambda g: (g, g))


def addn(terms: list[Tensor]) -> Tensor:
    """Sum of same-shaped tensors; keeps the graph shallow for long sums."""
    if not terms:
        raise ValueError("empty sum")
    out = terms[0].data.copy()
    for t in terms[1:]:
        out += t.data
    return Tensor(out, tuple(terms), lambda g: tuple(g for _ in terms))


def shift(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data + c, (a,), lambda g: (g,))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, (a,), lambda g: (g * c,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch {a.data.shape} vs {b.data.shape}")
    return Tensor(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def cmul(a: Tensor, mask: np.ndarray) -> Tensor:
    """Elementwise product with a constant array (dropout masks, fixed weights)."""
    mask = np.asarray(mask, dtype=np.float64)
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def matvec(w: Tensor, x: Tensor) -> Tensor:
    """(m, k) @ (k,) -> (m,)."""
    if w.data.ndim != 2 or x.data.ndim != 1 or w.data.shape[1] != x.data.shape[0]:
        raise ValueError(f"bad matvec shapes {w.data.shape} @ {x.data.shape}")
    return Tensor(w.data @ x.data, (w, x),
                  lambda g: (np.outer(g, x.data), w.data.T @ g))


def concat(parts: list[Tensor]) -> Tensor:
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return Tensor(np.concatenate([p.data for p in parts]), tuple(parts), vjp)


def narrow(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""
    size = a.data.shape[0]
    if not 0 <= start <= stop <= size:
        raise ValueError(f"narrow [{start}:{stop}] out of bounds for size {size}")

    def vjp(g):
        out = np.zeros(size)
        out[start:stop] = g
        return (out,)

    return Tensor(a.data[start:stop], (a,), vjp)


def pick(a: Tensor, index: int) -> Tensor:
    """Scalar element of a 1-D tensor."""
    size = a.data.shape[0]

    def vjp(g):
        out = np.zeros(size)
        out[index] = g
        return (out,)

    return Tensor(a.data[index], (a,), vjp)


def row(a: Tensor, index: int) -> Tensor:
    """One row of a 2-D tensor (embedding lookup)."""
    shape = a.data.shape

    def vjp(g):
        out = np.zeros(shape)
        out[index] = g
        return (out,)

    return Tensor(a.data[index], (a,), vjp)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return Tensor(out, (a,), lambda g: (g * (a.data > 0.0),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def vsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape = a.data.shape
    return Tensor(a.data.sum(), (a,), lambda g: (np.full(shape, g),))


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into node.grad for every reachable node.

    The root must be a scalar.  Gradients add up across calls until the
    tensors' .grad fields are cleared.
    """
    if root.data.shape != ():
        raise ValueError("backward expects a scalar root")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones(())}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        if node._vjp is None:
            if node.grad is None:
                node.grad = np.zeros(node.data.shape)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = np.asarray(pg, dtype=np.float64).copy()
            else:
                acc += pg

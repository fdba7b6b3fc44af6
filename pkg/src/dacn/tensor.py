"""Dense tensors with tape-recorded reverse-mode differentiation.

Every forward operation that touches a tensor requiring gradients records
its parents and a backward closure on the result node. Calling
``backward()`` on a scalar walks the recorded graph in reverse topological
order and accumulates ``grad`` on every reachable leaf. The op set is
closed: only the operations below (plus the layer primitives built on
``apply_op``) participate in differentiation.

Layout conventions: arrays are row-major; 4-d activations are ordered
(batch, height, width, channels). Tensors are treated as immutable once
built; concurrent forward passes over disjoint tensors are safe, backward
is single-threaded per graph.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@dataclass
class Dims2D:
    """Spatial extent plus channel count of one feature map."""

    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ContractError(f"Dims2D fields must be >= 1, got {self}")


class Tensor:
    """N-dimensional real array node in a computation graph.

    ``data`` is a float32/float64 ndarray; ``grad`` mirrors its shape after a
    backward pass reaches this node (leaves only). ``requires_grad`` marks
    trainable leaves; op results inherit it from their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------

    def backward(self):
        """Propagate d(self)/d(leaf) into ``grad`` of every reachable leaf.

        ``self`` must be scalar (one element). Deterministic: the traversal
        order is fixed by the recorded graph.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        order = _toposort(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        a, b = self, _as_tensor(other)
        out = a.data + b.data

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return apply_op(out, (a, b), backward)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self, _as_tensor(other)
        out = a.data - b.data

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return apply_op(out, (a, b), backward)

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __mul__(self, other):
        a, b = self, _as_tensor(other)
        out = a.data * b.data

        def backward(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return apply_op(out, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, _as_tensor(other)
        out = a.data / b.data

        def backward(g):
            return (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape),
            )

        return apply_op(out, (a, b), backward)

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __neg__(self):
        out = -self.data

        def backward(g):
            return (-g,)

        return apply_op(out, (self,), backward)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ContractError("only scalar exponents are supported")
        e = float(exponent)
        x = self.data
        out = x**e

        def backward(g):
            return (g * e * x ** (e - 1.0),)

        return apply_op(out, (self,), backward)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def sqrt(self):
        out = np.sqrt(self.data)

        def backward(g):
            return (g * 0.5 / out,)

        return apply_op(out, (self,), backward)

    def exp(self):
        out = np.exp(self.data)

        def backward(g):
            return (g * out,)

        return apply_op(out, (self,), backward)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward(g):
            return (_spread(g, shape, axis, keepdims),)

        return apply_op(out, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        out = self.data.mean(axis=axis, keepdims=keepdims)
        shape = self.data.shape
        count = self.data.size if out.size == 0 else self.data.size // max(out.size, 1)

        def backward(g):
            return (_spread(g / count, shape, axis, keepdims),)

        return apply_op(out, (self,), backward)

    # -- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape
        out = self.data.reshape(shape)

        def backward(g):
            return (g.reshape(orig),)

        return apply_op(out, (self,), backward)

    def transpose(self, axes):
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        out = np.transpose(self.data, axes)

        def backward(g):
            return (np.transpose(g, inverse),)

        return apply_op(out, (self,), backward)

    def __getitem__(self, key):
        # basic slices / integer indices only: the write-back in backward
        # assumes non-overlapping selections
        shape = self.data.shape
        out = self.data[key]

        def backward(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[key] = g
            return (full,)

        return apply_op(out, (self,), backward)


# -- module-level operations ---------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading (batch) axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul requires rank >= 2 operands, got {a.shape} x {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul: inner dimensions differ: {a.shape} x {b.shape}"
        )
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return apply_op(out, (a, b), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction.

    Each row of the result is nonnegative and sums to one; the output is
    invariant to adding a constant to all logits of a row.
    """
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return apply_op(y, (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; backward splits the gradient back."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat requires at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis if axis >= 0 else out.ndim + axis
    sizes = [t.data.shape[ax] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=ax))

    return apply_op(out, tuple(tensors), backward)


def apply_op(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap an op result, recording the tape edge when gradients are on.

    ``backward(g)`` must return one gradient array (or None) per parent.
    Layer primitives outside this module use this hook to join the closed
    op set.
    """
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- helpers ----------------------------------------------------------------


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
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
            stack.append((parent, False))
    return order


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to ``shape`` (adjoint of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _spread(g, shape, axis, keepdims) -> np.ndarray:
    """Broadcast a reduction gradient back over the reduced axes."""
    if axis is None:
        return np.broadcast_to(np.asarray(g), shape).copy()
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape).copy()

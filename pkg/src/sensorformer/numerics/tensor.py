"""Dense tensors with tape-free reverse-mode differentiation.

Every differentiable operation returns a :class:`Tensor` holding references
to its inputs and a closure mapping the output gradient to input gradients.
:meth:`Tensor.backward` walks that graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
import threading
from collections import defaultdict

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class ContractError(RuntimeError):
    """An operation was called outside its documented preconditions."""


class AllocationTracker:
    """Live and peak byte counts of tensor data buffers.

    Only buffers owned by :class:`Tensor` objects are counted; numpy
    temporaries inside a kernel are not.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.live = 0
        self.peak = 0

    def add(self, nbytes):
        with self._lock:
            self.live += nbytes
            if self.live > self.peak:
                self.peak = self.live

    def sub(self, nbytes):
        with self._lock:
            self.live -= nbytes

    def reset_peak(self):
        with self._lock:
            self.peak = self.live


allocations = AllocationTracker()

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class MacCounter:
    """Multiply-accumulate counts of matmuls, keyed by the active label."""

    def __init__(self):
        self.counts = defaultdict(int)

    @property
    def total(self):
        return sum(self.counts.values())


@contextlib.contextmanager
def count_macs():
    counter = MacCounter()
    prev = getattr(_state, "macs", None)
    _state.macs = counter
    try:
        yield counter
    finally:
        _state.macs = prev


@contextlib.contextmanager
def mac_label(label):
    prev = getattr(_state, "mac_label", "other")
    _state.mac_label = label
    try:
        yield
    finally:
        _state.mac_label = prev


def _record_macs(n):
    counter = getattr(_state, "macs", None)
    if counter is not None:
        counter.counts[getattr(_state, "mac_label", "other")] += int(n)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_nbytes", "__weakref__")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._nbytes = arr.nbytes
        allocations.add(self._nbytes)

    def __del__(self):
        try:
            allocations.sub(self._nbytes)
        except (AttributeError, TypeError):
            pass

    @classmethod
    def _make(cls, data, parents, backward):
        """Result of an operation; records the graph edge when needed."""
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient."""
        if self.data.size != 1 and grad is None:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires grad")
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.dtype)

        order = _topological_order(self)
        grads = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.array(g, dtype=node.dtype, copy=True).reshape(node.shape)
                else:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


class Parameter(Tensor):
    """A named, optionally trainable leaf tensor."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name="", trainable=True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.name = name
        self.trainable = bool(trainable)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return Tensor._make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return Tensor._make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = np.asarray(b, dtype=a.dtype)

        def backward_const(g):
            return (unbroadcast(g * c, a.shape),)

        return Tensor._make(a.data * c, (a,), backward_const)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g * b.data, sa), unbroadcast(g * a.data, sb)

    return Tensor._make(a.data * b.data, (a, b), backward)


def matmul(a, b):
    """Batched matrix product over the last two axes with leading-axis broadcasting."""
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)
    m, k, n = a.shape[-2], a.shape[-1], b.shape[-1]
    _record_macs(int(np.prod(out.shape[:-2], dtype=np.int64)) * m * k * n)
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), sa)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), sb)
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def reshape(a, shape):
    src = a.shape

    def backward(g):
        return (g.reshape(src),)

    return Tensor._make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes):
    inv = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inv),)

    return Tensor._make(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), backward)


def getitem(a, idx):
    """Basic (view-style) indexing."""
    src, dt = a.shape, a.dtype

    def backward(g):
        full = np.zeros(src, dtype=dt)
        full[idx] = g
        return (full,)

    return Tensor._make(np.array(a.data[idx], copy=True), (a,), backward)


def broadcast_to(a, shape):
    src = a.shape

    def backward(g):
        return (unbroadcast(g, src),)

    return Tensor._make(np.array(np.broadcast_to(a.data, shape)), (a,), backward)


def tsum(a, axis=None, keepdims=False):
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return Tensor._make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def square(a):
    def backward(g):
        return (2.0 * a.data * g,)

    return Tensor._make(a.data * a.data, (a,), backward)

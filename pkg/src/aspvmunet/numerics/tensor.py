"""Dense tensors with taped reverse-mode differentiation.

Each forward op records its parents and a closure mapping the output
gradient to one gradient per parent.  ``Tensor.backward`` walks the tape
in reverse topological order.  Leaf tensors accumulate into ``.grad``;
calling backward twice without ``zero_grad`` therefore sums gradients.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

_GRAD_ENABLED = True
_CHECK_FINITE = True
_DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(FloatingPointError):
    """A forward value became NaN or infinite."""


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def finite_checks(enabled: bool) -> Iterator[None]:
    """Toggle the per-op NaN/Inf check (on by default)."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = enabled
    try:
        yield
    finally:
        _CHECK_FINITE = prev


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class SliceGrad:
    """Gradient that is zero outside ``parent[index]``.

    Returned by slicing ops so that the engine can scatter the pieces of a
    chunked tensor into one buffer instead of adding full-size zero arrays.
    """

    __slots__ = ("index", "grad")

    def __init__(self, index, grad: np.ndarray):
        self.index = index
        self.grad = grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype.kind == "f" else _DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = ""

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.op = op
        if _CHECK_FINITE and not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite values produced by {op}")
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    def __len__(self) -> int:
        return len(self.data)

    # -- differentiation ------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Populate ``.grad`` on every reachable leaf that requires grad."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        owned: set[int] = set()  # buffers allocated here, safe to update in place
        for node in reversed(order):
            key = id(node)
            g = grads.pop(key, None)
            owned.discard(key)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if isinstance(pg, SliceGrad):
                    buf = grads.get(key)
                    if buf is None:
                        buf = np.zeros(p.shape, dtype=p.dtype)
                    elif key not in owned:
                        buf = buf.copy()
                    buf[pg.index] += pg.grad
                    grads[key] = buf
                    owned.add(key)
                    continue
                if pg.shape != p.shape:
                    raise DimensionError(f"gradient shape {pg.shape} != tensor shape {p.shape} in {node.op}")
                if key in owned:
                    grads[key] += pg
                elif key in grads:
                    grads[key] = grads[key] + pg
                    owned.add(key)
                else:
                    grads[key] = pg

    # -- operator sugar (implementations live in functional) -------------------

    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F
        return F.div(other, self)

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __pow__(self, exponent: float):
        from . import functional as F
        return F.power(self, exponent)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def __getitem__(self, idx):
        from . import functional as F
        return F.getitem(self, idx)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is None:
        dtype = arr.dtype if arr.dtype.kind == "f" else _DEFAULT_DTYPE
    return Tensor(arr, dtype=dtype)

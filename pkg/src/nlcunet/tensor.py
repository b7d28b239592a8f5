"""Reverse-mode automatic differentiation on NumPy buffers.

A :class:`Tensor` wraps a contiguous ndarray plus the bookkeeping needed
to replay the chain rule: the tensors it was computed from and a closure
mapping the output gradient to parent gradients. The graph is rebuilt on
every forward pass (define-by-run); :func:`backward` linearizes it into a
:class:`GradientTape` where parents always precede children, then sweeps
it once in reverse, accumulating additively wherever a value was reused.

float32 is the training precision; gradient verification runs the same
graphs in float64.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np


class ShapeError(ValueError):
    """Raised when an operation's inputs disagree on a dimension."""


class AutodiffError(RuntimeError):
    """Raised for misuse of the gradient machinery (e.g. detached loss)."""


_grad_enabled = True


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-dimensional array with optional gradient tracking.

    Images use NCHW layout. A tensor that is not attached to a graph
    (``requires_grad`` False and no parents) never receives gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"tensor dimensions must be >= 1, got shape {arr.shape}")
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data: np.ndarray = arr.copy() if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._op = ""

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, dtype=np.float32, requires_grad=False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    @staticmethod
    def ones(shape, dtype=np.float32, requires_grad=False) -> "Tensor":
        return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Copy of the value with no graph attachment."""
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        t = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        return t

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" op={self._op}" if self._op else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad}{tag})"

    # -- operator sugar (implementations live in ops.py) -----------------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, _lift(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _lift(other, self.dtype))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, _lift(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, _lift(other, self.dtype))

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, shape):
        from . import ops
        return ops.reshape(self, shape)

    def sum(self):
        from . import ops
        return ops.sum_all(self)

    def mean(self):
        from . import ops
        return ops.mean_all(self)


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def make_op(data: np.ndarray, parents: Iterable[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an op result, attaching graph edges when recording is on."""
    parents = tuple(parents)
    track = _grad_enabled and any(p.requires_grad or p._parents for p in parents)
    out = Tensor(data)
    if track:
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out._op = op
    return out


class GradientTape:
    """Topologically ordered node list for one backward sweep.

    Built by tracing parents from the loss; append order guarantees every
    parent precedes its children, so a single reversed pass visits each
    node exactly once.
    """

    def __init__(self, nodes: list):
        self.nodes = nodes

    @staticmethod
    def trace(root: Tensor) -> "GradientTape":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and (p.requires_grad or p._parents):
                    stack.append((p, False))
        return GradientTape(order)


def backward(loss: Tensor) -> dict:
    """Reverse sweep from a scalar loss.

    Populates ``.grad`` on every reachable leaf that requires gradients
    and returns a ``{leaf: gradient Tensor}`` map. Gradients of values
    used more than once accumulate additively.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    if not (loss._parents or loss.requires_grad):
        raise AutodiffError("loss is detached from the gradient tape")

    tape = GradientTape.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None or node._backward is None:
            if g is not None and node.requires_grad and not node._parents:
                node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not (parent.requires_grad or parent._parents):
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    leaf_map: dict[Tensor, Tensor] = {}
    for node in tape.nodes:
        if node.requires_grad and not node._parents and node.grad is not None:
            leaf_map[node] = Tensor(node.grad)
    return leaf_map

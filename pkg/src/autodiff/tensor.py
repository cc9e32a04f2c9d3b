"""Dense tensors with reverse-mode gradients.

Each op output keeps its parents and a `_backward` closure that pushes the
output gradient into the parents. Tensors get a monotonically increasing id
at creation, so creation order is a topological order of the graph and
backward simply walks the reachable nodes by descending id.
"""

import itertools
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ..errors import NonFiniteValue, ShapeMismatch

logger = logging.getLogger(__name__)

_ids = itertools.count()
_grad_enabled = True
_debug = os.getenv("BSDA_DEBUG", "").lower() in {"1", "true", "yes"}


def set_debug(enabled: bool) -> None:
    """Toggle the NaN/Inf check run after every op."""
    global _debug
    _debug = enabled


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (evaluation, finite differences)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An n-dimensional float64 array that can take part in the graph."""

    def __init__(self, data, requires_grad: bool = False, _parents: tuple["Tensor", ...] = (), _op: str = "leaf"):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward: Callable[[], None] | None = None
        self._op = _op
        self._id = next(_ids)

    # --- introspection ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # --- graph plumbing ---

    @classmethod
    def from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str) -> "Tensor":
        needs_grad = _grad_enabled and any(p.requires_grad for p in parents)
        out = cls(data, requires_grad=needs_grad, _parents=parents if needs_grad else (), _op=op)
        if _debug and not np.all(np.isfinite(out.data)):
            raise NonFiniteValue(f"Op '{op}' produced NaN/Inf")
        return out

    def accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if grad.shape != self.data.shape:
            raise ShapeMismatch(f"Gradient shape {grad.shape} does not match {self.data.shape} ({self._op})")
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if not self.requires_grad:
            raise ShapeMismatch("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise ShapeMismatch(f"Implicit gradient only for scalars, got shape {self.shape}")
            grad = np.ones_like(self.data)
        graph = Graph.build(self)
        self.accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(graph.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward()
        # release intermediate buffers; leaves keep their grads
        for node in graph.nodes:
            if node._parents:
                node.grad = None

    # --- arithmetic ---

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor.from_op(self.data + other.data, (self, other), "add")

        def _backward():
            self.accumulate(_unbroadcast(out.grad, self.shape))
            other.accumulate(_unbroadcast(out.grad, other.shape))

        out._backward = _backward
        return out

    def __radd__(self, other) -> "Tensor":
        return self + other

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other) -> "Tensor":
        return self + (-other if isinstance(other, Tensor) else Tensor(-np.asarray(other, dtype=np.float64)))

    def __rsub__(self, other) -> "Tensor":
        return (-self) + other

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor.from_op(self.data * other.data, (self, other), "mul")

        def _backward():
            self.accumulate(_unbroadcast(out.grad * other.data, self.shape))
            other.accumulate(_unbroadcast(out.grad * self.data, other.shape))

        out._backward = _backward
        return out

    def __rmul__(self, other) -> "Tensor":
        return self * other

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise ShapeMismatch("Division is only supported by constants")
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def sum(self) -> "Tensor":
        out = Tensor.from_op(np.asarray(self.data.sum()), (self,), "sum")

        def _backward():
            self.accumulate(np.full(self.shape, float(out.grad)))

        out._backward = _backward
        return out

    def mean(self) -> "Tensor":
        return self.sum() / float(self.size)


@dataclass
class Graph:
    """Reachable op records in topological (creation) order."""

    nodes: list[Tensor]

    @classmethod
    def build(cls, root: Tensor) -> "Graph":
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if node._id in seen or not node.requires_grad:
                continue
            seen[node._id] = node
            stack.extend(node._parents)
        return cls(nodes=[seen[i] for i in sorted(seen)])


def parameter(data) -> Tensor:
    """A leaf that receives gradients."""
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)

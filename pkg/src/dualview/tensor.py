"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is dynamic: every operation executed while gradients are enabled
records its parents and a backward closure on its output node, so a forward
pass *is* the tape.  ``backward()`` replays that tape in reverse topological
order, accumulating gradients additively.  Because accumulation is additive,
a parameter referenced from several places (the shared feature tower reads
the same weight tensors for both input patches) receives the sum of all
contributions, which is exactly the shared-weight semantics the matcher
needs.

Everything is 64-bit: it keeps finite-difference gradient checks meaningful
at tight tolerances and makes checkpoints exact.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, NumericError, StateError

_grad_enabled: bool = True


def grad_enabled() -> bool:
    return _grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (inference / finite diffs)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A dense n-dimensional float64 array with an optional gradient slot.

    ``data`` is always C-contiguous row-major float64.  ``grad`` is lazily
    allocated with the same shape the first time a gradient flows into the
    node.  Leaf tensors built from user data are checked for finiteness;
    interior nodes inherit finiteness from their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        if not np.all(np.isfinite(arr)):
            label = f" '{name}'" if name else ""
            raise NumericError(f"tensor{label} contains non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: Callable[[np.ndarray], None] | None,
    ) -> "Tensor":
        """Interior graph node; skips the leaf finiteness check."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = ""
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # -- shape introspection -------------------------------------------------

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- gradient plumbing ---------------------------------------------------

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            # own the buffer: g may be a view into an op's internals
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.name = self.name
        out._parents = ()
        out._backward_fn = None
        return out

    def _topo_order(self) -> list["Tensor"]:
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Populate .grad on every reachable tensor by reverse traversal."""
        if self._backward_fn is None and not self._parents:
            raise StateError(
                "backward() called on a tensor with no recorded forward pass"
            )
        if self.data.size != 1:
            raise DimensionError(
                f"backward() expects a scalar loss, got shape {self.data.shape}"
            )
        self.grad = np.ones_like(self.data)
        for node in reversed(self._topo_order()):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- minimal arithmetic (enough for losses and tests) ---------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=np.float64))

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        if other.shape != self.shape and other.size != 1 and self.size != 1:
            raise DimensionError(
                f"add: shapes {self.shape} and {other.shape} differ"
            )
        a, b = self, other
        out_data = a.data + b.data

        def backward_fn(g: np.ndarray) -> None:
            if a.requires_grad:
                a.accumulate_grad(g if a.shape == g.shape else np.sum(g))
            if b.requires_grad:
                b.accumulate_grad(g if b.shape == g.shape else np.sum(g))

        return Tensor._from_op(out_data, (a, b), backward_fn)

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        if other.shape != self.shape and other.size != 1 and self.size != 1:
            raise DimensionError(
                f"mul: shapes {self.shape} and {other.shape} differ"
            )
        a, b = self, other
        out_data = a.data * b.data

        def backward_fn(g: np.ndarray) -> None:
            if a.requires_grad:
                ga = g * b.data
                a.accumulate_grad(ga if a.shape == ga.shape else np.sum(ga))
            if b.requires_grad:
                gb = g * a.data
                b.accumulate_grad(gb if b.shape == gb.shape else np.sum(gb))

        return Tensor._from_op(out_data, (a, b), backward_fn)

    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        src = self
        out_data = np.array(src.data.sum())

        def backward_fn(g: np.ndarray) -> None:
            if src.requires_grad:
                src.accumulate_grad(np.full_like(src.data, float(g)))

        return Tensor._from_op(out_data, (src,), backward_fn)


def as_tensor(value, name: str = "") -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, name=name)

"""Define-by-run reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied while it is active.  Nodes
are appended in execution order, which is already a topological order of
the computation, so :meth:`Tape.backward` simply walks the record in
reverse.  Gradients for :class:`Parameter` leaves are accumulated either
into ``Parameter.grad`` or into a caller-provided buffer (used for
parallel gradient accumulation).
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class TapeError(RuntimeError):
    pass


class Tensor:
    """A dense float64 array that may participate in a recorded computation."""

    __slots__ = ("value", "requires_grad", "__weakref__")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, value={self.value!r})"

    # operator sugar, all routed through recorded primitives
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)


class Parameter(Tensor):
    """A trainable leaf with a same-shaped gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, value, name: str):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


@dataclass
class RowGrad:
    """Sparse gradient touching selected rows of a 2-D table."""

    rows: np.ndarray
    values: np.ndarray

    def add_into(self, dense: np.ndarray) -> None:
        dense += scatter_rows(self.rows, self.values, dense.shape[0])


def scatter_rows(rows: np.ndarray, values: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum ``values[i]`` into output row ``rows[i]`` (duplicates accumulate)."""
    rows = np.asarray(rows, dtype=np.intp).reshape(-1)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        return np.bincount(rows, weights=values, minlength=n_rows)
    out = np.zeros((n_rows,) + values.shape[1:])
    if rows.size == 0:
        return out
    # group equal rows with a stable sort, then add each run in input order
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    starts = np.flatnonzero(np.concatenate(([True], sorted_rows[1:] != sorted_rows[:-1])))
    out[sorted_rows[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


@dataclass
class _Node:
    out: Tensor
    inputs: tuple
    vjp: Callable[[np.ndarray], Sequence]


_local = threading.local()


def _stack() -> list["Tape"]:
    try:
        return _local.stack
    except AttributeError:
        _local.stack = []
        return _local.stack


def current_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._done = False

    def __enter__(self) -> "Tape":
        if self._done:
            raise TapeError("tape already consumed by backward(); record a new one")
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple, vjp) -> None:
        self.nodes.append(_Node(out, inputs, vjp))

    def backward(self, loss: Tensor, into: dict[str, np.ndarray] | None = None) -> None:
        """Accumulate d(loss)/d(param) for every parameter reached.

        With ``into`` given, parameter gradients go to ``into[param.name]``
        (created on demand) instead of ``param.grad``.
        """
        if self._done:
            raise TapeError("backward() called twice on the same tape")
        if loss.value.size != 1:
            raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
        if not isinstance(loss, Parameter) and not any(n.out is loss for n in self.nodes):
            raise TapeError("loss was not produced by this tape")
        self._done = True

        def deposit(param: Parameter, g) -> None:
            if into is None:
                target = param.grad
            else:
                target = into.get(param.name)
                if target is None:
                    target = into[param.name] = np.zeros_like(param.value)
            if isinstance(g, RowGrad):
                g.add_into(target)
            else:
                target += g

        seed = np.ones_like(loss.value)
        if isinstance(loss, Parameter):
            deposit(loss, seed)
        grads: dict[int, np.ndarray] = {id(loss): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                if isinstance(inp, Parameter):
                    deposit(inp, gi)
                    continue
                if isinstance(gi, RowGrad):
                    dense = np.zeros_like(inp.value)
                    gi.add_into(dense)
                    gi = dense
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi
        self.nodes.clear()


@contextlib.contextmanager
def no_record():
    """Evaluate without any tape, e.g. for finite differences or inference."""
    stack = _stack()
    saved = stack[:]
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def backward(loss: Tensor, tape: Tape, into: dict[str, np.ndarray] | None = None) -> None:
    tape.backward(loss, into=into)

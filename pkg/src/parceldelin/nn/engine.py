"""Tensors, parameters, and the gradient tape.

Ops executed inside a ``with Tape() as tape:`` block append their backward
closures to the tape; ``backward`` replays them in exact reverse order,
accumulating gradients additively into ``.grad``.  Without an active tape,
ops run as plain forward computations (evaluation mode).

Storage defaults to float32; reductions and matmuls accumulate in float64.
Creating a Tensor from a float64 array keeps float64, which the gradient
checker relies on.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """Dense n-d float array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g.astype(self.data.dtype, copy=False)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Named trainable tensor; names are unique within a model."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of ops for one forward pass; owns its backward order."""

    def __init__(self):
        self.ops: list[tuple[Tensor, object]] = []  # (output, backward closure)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self.ops)


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record_op(out: Tensor, backward_fn) -> None:
    """Append a backward closure for ``out`` to the active tape, if any.

    ``backward_fn`` receives d(loss)/d(out) and must accumulate into each
    input tensor that requires grad.
    """
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.ops.append((out, backward_fn))


def backward(tape: Tape, loss: Tensor, params=None) -> None:
    """Populate gradients of everything reachable from ``loss`` on this tape.

    Parameters listed in ``params`` but unreachable from the loss get a
    zero gradient so optimizers see a complete set.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape.ops):
        if out.grad is not None:
            backward_fn(out.grad)
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)

"""Dense float64 arrays with a dynamic reverse-mode differentiation tape.

Values live in contiguous row-major numpy buffers. Every differentiable
operation records itself on the innermost active tape; ``Tape.backward``
replays the records once, in exact reverse order, accumulating gradients
additively into each array's ``grad`` buffer. With no tape active, ops run
forward-only and allocate nothing for gradients.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

__all__ = [
    "DiffArray",
    "EngineError",
    "ShapeError",
    "Tape",
    "active_tape",
    "backward",
    "constant",
    "no_tape",
    "parameter",
]


class EngineError(ValueError):
    """Invalid engine operation."""


class ShapeError(EngineError):
    """Incompatible operand shapes."""


_TAPE_STACK: list["Tape"] = []


def active_tape() -> "Tape | None":
    """The tape ops currently record onto, or None."""
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextmanager
def no_tape():
    """Run a block with recording disabled (results are constants)."""
    saved = _TAPE_STACK[:]
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK.extend(saved)


class _TapeOp:
    __slots__ = ("inputs", "output", "backward_fn", "replays")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.replays = 0


class Tape:
    """Ordered record of executed ops.

    Topological by construction: an op is appended only after its inputs
    exist, so replaying the list in reverse visits consumers before
    producers. Not thread-safe; use one tape per training step.
    """

    def __init__(self):
        self.ops: list[_TapeOp] = []
        self.replayed_ops = 0

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        if popped is not self:
            raise EngineError("tape stack corrupted")
        return False

    def __len__(self) -> int:
        return len(self.ops)

    def record(self, inputs, output, backward_fn) -> None:
        output.requires_grad = True
        output.node_id = len(self.ops)
        output._tape = self
        self.ops.append(_TapeOp(tuple(inputs), output, backward_fn))

    def backward(self, loss: "DiffArray") -> None:
        """Reverse replay from a scalar loss; each op is visited exactly once."""
        if loss.size != 1:
            raise EngineError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss._accumulate(np.ones_like(loss.data))
        self.replayed_ops = 0
        for op in reversed(self.ops):
            if op.replays:
                raise EngineError("tape op replayed more than once")
            op.replays += 1
            g = op.output.grad
            if g is None:
                continue  # not reachable from this loss
            grads = op.backward_fn(g)
            for inp, gi in zip(op.inputs, grads):
                if gi is not None and inp.requires_grad:
                    inp._accumulate(gi)
            self.replayed_ops += 1


class DiffArray:
    """Dense float64 array with shape, values and an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data: np.ndarray = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id: int | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "DiffArray":
        """A copy cut from the tape; gradients never flow through it."""
        return DiffArray(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != value shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        flags = ", grad" if self.requires_grad else ""
        return f"DiffArray(shape={self.shape}{flags})"

    # Arithmetic operators are attached by longvid.engine.ops.


def parameter(data) -> DiffArray:
    """A trainable leaf (requires_grad=True)."""
    return DiffArray(data, requires_grad=True)


def constant(data) -> DiffArray:
    """A non-trainable leaf."""
    return DiffArray(data)


def backward(loss: DiffArray) -> None:
    """Run reverse-mode differentiation from a scalar loss."""
    if loss._tape is None:
        raise EngineError("loss was not recorded on a tape (is a Tape active?)")
    loss._tape.backward(loss)

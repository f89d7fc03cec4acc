"""Minimal float64 array engine with reverse-mode differentiation."""

from .array import (
    DiffArray,
    EngineError,
    ShapeError,
    Tape,
    active_tape,
    backward,
    constant,
    no_tape,
    parameter,
)
from .check import GradCheckResult, analytic_gradients, check_gradients, numeric_gradient
from .ops import (
    MultiplyAddCounter,
    add,
    as_diff,
    concat,
    count_multiply_adds,
    cross_entropy_logits,
    embedding,
    gelu,
    l2_normalize,
    layernorm,
    masked_fill,
    matmul,
    maxpool2d,
    mean,
    mul,
    record_op,
    reshape,
    scale,
    softmax,
    split,
    sub,
    sum,
    take,
    transpose,
)

__all__ = [
    "DiffArray",
    "EngineError",
    "GradCheckResult",
    "MultiplyAddCounter",
    "ShapeError",
    "Tape",
    "active_tape",
    "add",
    "analytic_gradients",
    "as_diff",
    "backward",
    "check_gradients",
    "concat",
    "constant",
    "count_multiply_adds",
    "cross_entropy_logits",
    "embedding",
    "gelu",
    "l2_normalize",
    "layernorm",
    "masked_fill",
    "matmul",
    "maxpool2d",
    "mean",
    "mul",
    "no_tape",
    "numeric_gradient",
    "parameter",
    "record_op",
    "reshape",
    "scale",
    "softmax",
    "split",
    "sub",
    "sum",
    "take",
    "transpose",
]

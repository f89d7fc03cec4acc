"""Differentiable operations on DiffArrays.

Each op computes its forward value eagerly, and (when a tape is active and
some input requires a gradient) records a closure implementing its local
backward rule. Gradients accumulate additively across fan-out.

Integer inputs (token ids, gather indices) and boolean masks are plain numpy
arrays, never DiffArrays; no gradient flows through them.
"""

from __future__ import annotations

import math

import numpy as np

from .array import DiffArray, ShapeError, active_tape

_pysum = sum  # the builtin; `sum` below is the reduction op

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


# ---------------------------------------------------------------------------
# recording / broadcasting helpers
# ---------------------------------------------------------------------------


def as_diff(x) -> DiffArray:
    """Lift scalars and numpy arrays to constant DiffArrays."""
    if isinstance(x, DiffArray):
        return x
    return DiffArray(np.asarray(x, dtype=np.float64))


def record_op(output: DiffArray, inputs, backward_fn) -> DiffArray:
    """Record a custom op on the active tape (also the extension point used
    by tests to exercise the gradient-check harness with a wrong rule)."""
    tape = active_tape()
    if tape is not None and any(i.requires_grad for i in inputs):
        tape.record(inputs, output, backward_fn)
    return output


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(g)


# ---------------------------------------------------------------------------
# multiply-add instrumentation (used by the cost model's oracle)
# ---------------------------------------------------------------------------


class MultiplyAddCounter:
    """Counts matmul multiply-adds executed while active."""

    def __init__(self):
        self.multiply_adds = 0

    def __enter__(self) -> "MultiplyAddCounter":
        _COUNTER_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _COUNTER_STACK.remove(self)
        return False


_COUNTER_STACK: list[MultiplyAddCounter] = []


def count_multiply_adds() -> MultiplyAddCounter:
    """Context manager: tally matmul multiply-adds of the enclosed forward."""
    return MultiplyAddCounter()


def _tally_matmul(out_shape: tuple[int, ...], inner: int) -> None:
    if _COUNTER_STACK:
        n = int(np.prod(out_shape)) * inner
        for c in _COUNTER_STACK:
            c.multiply_adds += n


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    out = DiffArray(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return record_op(out, (a, b), bwd)


def sub(a, b) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    out = DiffArray(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return record_op(out, (a, b), bwd)


def mul(a, b) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    out = DiffArray(a.data * b.data)

    def bwd(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return record_op(out, (a, b), bwd)


def scale(a: DiffArray, s: float) -> DiffArray:
    s = float(s)
    out = DiffArray(a.data * s)

    def bwd(g):
        return (g * s,)

    return record_op(out, (a,), bwd)


def matmul(a: DiffArray, b: DiffArray) -> DiffArray:
    """Matrix product; leading batch dimensions broadcast as in numpy."""
    a, b = as_diff(a), as_diff(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)
    _tally_matmul(out_data.shape, a.shape[-1])
    out = DiffArray(out_data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return record_op(out, (a, b), bwd)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a: DiffArray, shape) -> DiffArray:
    shape = tuple(int(s) for s in shape)
    out = DiffArray(a.data.reshape(shape).copy())

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return record_op(out, (a,), bwd)


def transpose(a: DiffArray, axes=None) -> DiffArray:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(int(x) for x in axes)
    inv = tuple(np.argsort(axes))
    out = DiffArray(np.ascontiguousarray(a.data.transpose(axes)))

    def bwd(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return record_op(out, (a,), bwd)


def concat(arrays, axis: int = 0) -> DiffArray:
    arrays = tuple(as_diff(a) for a in arrays)
    sizes = [a.shape[axis] for a in arrays]
    out = DiffArray(np.concatenate([a.data for a in arrays], axis=axis))
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return record_op(out, arrays, bwd)


def split(a: DiffArray, sizes, axis: int = 0) -> list[DiffArray]:
    """Split along an axis into consecutive pieces of the given sizes."""
    sizes = [int(s) for s in sizes]
    if _pysum(sizes) != a.shape[axis]:
        raise ShapeError(f"split sizes {sizes} do not cover axis {axis} of {a.shape}")
    outs = []
    start = 0
    for size in sizes:
        outs.append(_narrow(a, axis, start, size))
        start += size
    return outs


def _narrow(a: DiffArray, axis: int, start: int, size: int) -> DiffArray:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + size)
    idx = tuple(idx)
    out = DiffArray(a.data[idx].copy())

    def bwd(g):
        da = np.zeros_like(a.data)
        da[idx] = g
        return (da,)

    return record_op(out, (a,), bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum(a: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:  # noqa: A001
    out = DiffArray(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        return (_spread(g, a.data.shape, axis, keepdims),)

    return record_op(out, (a,), bwd)


def mean(a: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    count = a.size if axis is None else _axis_count(a.data.shape, axis)
    out = DiffArray(a.data.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        return (_spread(g, a.data.shape, axis, keepdims) / count,)

    return record_op(out, (a,), bwd)


def _axis_count(shape, axis) -> int:
    if isinstance(axis, int):
        axis = (axis,)
    n = 1
    for ax in axis:
        n *= shape[ax]
    return n


def _spread(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    """Broadcast a reduced gradient back over the reduced axes."""
    if axis is None:
        return np.full(shape, g if np.ndim(g) == 0 else g.reshape(()), dtype=np.float64)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.ascontiguousarray(np.broadcast_to(g, shape))


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------


def softmax(x: DiffArray, axis: int = -1) -> DiffArray:
    """Numerically stable softmax (max subtraction) along one axis."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = DiffArray(y)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return record_op(out, (x,), bwd)


def gelu(x: DiffArray) -> DiffArray:
    """tanh-form GELU."""
    xd = x.data
    x2 = xd * xd
    t = np.tanh(_SQRT_2_OVER_PI * (xd + _GELU_C * x2 * xd))
    out = DiffArray(0.5 * xd * (1.0 + t))

    def bwd(g):
        du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return record_op(out, (x,), bwd)


def layernorm(x: DiffArray, gain: DiffArray, bias: DiffArray, eps: float = 1e-12) -> DiffArray:
    """Normalize the last axis to zero mean / unit variance, then affine.

    The tiny default eps keeps normalized rows within 1e-9 of unit variance
    at float64 while still guarding constant rows.
    """
    if eps <= 0:
        raise ShapeError("layernorm eps must be > 0")
    gain, bias = as_diff(gain), as_diff(bias)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = DiffArray(xhat * gain.data + bias.data)

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgain.reshape(gain.data.shape), dbias.reshape(bias.data.shape)

    return record_op(out, (x, gain, bias), bwd)


def l2_normalize(x: DiffArray, eps: float = 1e-24) -> DiffArray:
    """Scale rows (last axis) to unit L2 norm."""
    n = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True) + eps)
    y = x.data / n
    out = DiffArray(y)

    def bwd(g):
        dot = (g * x.data).sum(axis=-1, keepdims=True)
        return (g / n - x.data * dot / n**3,)

    return record_op(out, (x,), bwd)


# ---------------------------------------------------------------------------
# indexing
# ---------------------------------------------------------------------------


def embedding(table: DiffArray, ids: np.ndarray) -> DiffArray:
    """Gather rows of a 2-d table; backward scatter-adds into the table."""
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding ids out of range [0, {table.shape[0]})")
    out = DiffArray(table.data[ids])

    def bwd(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (dt,)

    return record_op(out, (table,), bwd)


def take(x: DiffArray, indices: np.ndarray, axis: int = 0) -> DiffArray:
    """Select positions along one axis; duplicates accumulate in backward."""
    indices = np.asarray(indices, dtype=np.int64)
    out = DiffArray(np.take(x.data, indices, axis=axis))

    def bwd(g):
        dx = np.zeros_like(x.data)
        dxm = np.moveaxis(dx, axis, 0)
        gm = np.moveaxis(g, axis, 0) if indices.ndim else g
        np.add.at(dxm, indices, gm)
        return (dx,)

    return record_op(out, (x,), bwd)


def masked_fill(x: DiffArray, mask: np.ndarray, value: float = -1e9) -> DiffArray:
    """Replace masked positions with a constant; their gradient is zero."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = DiffArray(np.where(mask, value, x.data))

    def bwd(g):
        return (np.where(mask, 0.0, g),)

    return record_op(out, (x,), bwd)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------


def maxpool2d(x: DiffArray, window: tuple[int, int], stride: tuple[int, int] | None = None) -> DiffArray:
    """Max over sliding spatial windows; layout (..., H, W, C), no padding.

    Ties route the gradient to the first window slot (row-major), so the
    backward is deterministic.
    """
    kh, kw = window
    sh, sw = stride if stride is not None else window
    if x.ndim < 3:
        raise ShapeError(f"maxpool2d needs (..., H, W, C), got {x.shape}")
    H, W = x.shape[-3], x.shape[-2]
    if kh > H or kw > W:
        raise ShapeError(f"pool window {window} exceeds spatial extent {(H, W)}")
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1

    best = None
    slot = None
    for di in range(kh):
        for dj in range(kw):
            view = x.data[..., di : di + (Ho - 1) * sh + 1 : sh, dj : dj + (Wo - 1) * sw + 1 : sw, :]
            if best is None:
                best = view.copy()
                slot = np.zeros(best.shape, dtype=np.int64)
            else:
                better = view > best
                best = np.where(better, view, best)
                slot = np.where(better, di * kw + dj, slot)
    out = DiffArray(best)

    def bwd(g):
        dx = np.zeros_like(x.data)
        for di in range(kh):
            for dj in range(kw):
                piece = np.where(slot == di * kw + dj, g, 0.0)
                dx[..., di : di + (Ho - 1) * sh + 1 : sh, dj : dj + (Wo - 1) * sw + 1 : sw, :] += piece
        return (dx,)

    return record_op(out, (x,), bwd)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def cross_entropy_logits(logits: DiffArray, labels: np.ndarray) -> DiffArray:
    """Mean cross-entropy of integer labels under rows of logits."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_logits needs (n, classes) logits, got {logits.shape}")
    n, v = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if n == 0:
        raise ShapeError("cross_entropy_logits needs at least one row")
    if labels.min() < 0 or labels.max() >= v:
        raise ShapeError(f"labels out of range [0, {v})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    se = e.sum(axis=1)
    logp = z - np.log(se)[:, None]
    out = DiffArray(-logp[np.arange(n), labels].mean())

    def bwd(g):
        gd = float(g.reshape(()))
        dl = e / se[:, None]
        dl[np.arange(n), labels] -= 1.0
        return (dl * (gd / n),)

    return record_op(out, (logits,), bwd)


# ---------------------------------------------------------------------------
# operator sugar on DiffArray
# ---------------------------------------------------------------------------


def _neg(self):
    return scale(self, -1.0)


DiffArray.__add__ = lambda self, other: add(self, other)
DiffArray.__radd__ = lambda self, other: add(other, self)
DiffArray.__sub__ = lambda self, other: sub(self, other)
DiffArray.__rsub__ = lambda self, other: sub(other, self)
DiffArray.__mul__ = lambda self, other: mul(self, other)
DiffArray.__rmul__ = lambda self, other: mul(other, self)
DiffArray.__neg__ = _neg
DiffArray.__matmul__ = lambda self, other: matmul(self, other)
DiffArray.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
DiffArray.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
DiffArray.reshape = lambda self, shape: reshape(self, shape)
DiffArray.transpose = lambda self, axes=None: transpose(self, axes)

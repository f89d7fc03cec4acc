"""Multi-head self-attention restricted to temporal (and spatial) windows.

A token grid is a DiffArray of shape (T, H, W, dim): T time steps, H x W
spatial patches. A window spec slices the grid into T/w temporal blocks,
each further tiled by the spatial window; attention runs independently
inside every block, so influence across blocks is exactly zero by
construction. Schedules stack stages of growing temporal window so late
layers see the whole clip sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import params as P
from .engine import DiffArray, ShapeError
from .engine import ops as O


class ScheduleError(ValueError):
    """Invalid window schedule or window spec."""


@dataclass(frozen=True)
class WindowSpec:
    """Attention window for one layer.

    spatial is (h, w) in patches, or None for the full spatial extent.
    """

    temporal: int
    spatial: tuple[int, int] | None = None
    layer_index: int = 0

    def resolve_spatial(self, grid_h: int, grid_w: int) -> tuple[int, int]:
        return (grid_h, grid_w) if self.spatial is None else self.spatial

    def validate(self, t: int, grid_h: int, grid_w: int) -> None:
        if t % self.temporal:
            raise ScheduleError(f"temporal window {self.temporal} does not divide T={t}")
        sh, sw = self.resolve_spatial(grid_h, grid_w)
        if grid_h % sh or grid_w % sw:
            raise ScheduleError(f"spatial window {(sh, sw)} does not divide grid {(grid_h, grid_w)}")


@dataclass(frozen=True)
class StageSpec:
    """One stage of the hierarchical schedule."""

    layers: int
    dim: int
    heads: int
    temporal_window: int
    spatial_window: tuple[int, int] | None = None
    merge: int = 1  # spatial patch-merge factor applied before the stage

    def __post_init__(self):
        if self.layers < 1 or self.dim < 1 or self.heads < 1:
            raise ScheduleError("stage layers/dim/heads must be positive")
        if self.dim % self.heads:
            raise ScheduleError(f"stage dim {self.dim} not divisible by heads {self.heads}")
        if self.temporal_window < 1 or self.merge < 1:
            raise ScheduleError("temporal window and merge factor must be positive")


@dataclass(frozen=True)
class WindowSchedule:
    """Ordered stages; temporal windows grow and end at the full frame count."""

    stages: tuple[StageSpec, ...]

    def __post_init__(self):
        if not self.stages:
            raise ScheduleError("schedule needs at least one stage")

    @property
    def temporal_windows(self) -> tuple[int, ...]:
        return tuple(s.temporal_window for s in self.stages)

    def grid_after(self, stage_index: int, grid: tuple[int, int]) -> tuple[int, int]:
        """Spatial grid at the output of stage_index (0-based), after merges."""
        h, w = grid
        for s in self.stages[: stage_index + 1]:
            if h % s.merge or w % s.merge:
                raise ScheduleError(f"merge {s.merge} does not divide grid {(h, w)}")
            h, w = h // s.merge, w // s.merge
        return h, w

    def validate(self, frames: int, grid: tuple[int, int]) -> None:
        windows = self.temporal_windows
        if any(a > b for a, b in zip(windows, windows[1:])):
            raise ScheduleError(f"temporal windows must be non-decreasing, got {windows}")
        if windows[-1] != frames:
            raise ScheduleError(f"last temporal window {windows[-1]} must equal frame count {frames}")
        for i, s in enumerate(self.stages):
            if frames % s.temporal_window:
                raise ScheduleError(f"window {s.temporal_window} does not divide frame count {frames}")
            h, w = self.grid_after(i, grid)
            WindowSpec(s.temporal_window, s.spatial_window).validate(frames, h, w)


# ---------------------------------------------------------------------------
# window partitioning
# ---------------------------------------------------------------------------


def window_counts(t: int, h: int, w: int, spec: WindowSpec) -> tuple[int, int, int]:
    sh, sw = spec.resolve_spatial(h, w)
    return t // spec.temporal, h // sh, w // sw


def window_partition(tokens: DiffArray, spec: WindowSpec) -> DiffArray:
    """(B, T, H, W, C) -> (B, windows, tokens_per_window, C).

    Window order is temporal-major, then spatial rows, then columns; tokens
    inside a window keep (time, row, col) order.
    """
    B, T, H, W, C = tokens.shape
    spec.validate(T, H, W)
    sh, sw = spec.resolve_spatial(H, W)
    nt, nh, nw = window_counts(T, H, W, spec)
    x = O.reshape(tokens, (B, nt, spec.temporal, nh, sh, nw, sw, C))
    x = O.transpose(x, (0, 1, 3, 5, 2, 4, 6, 7))
    return O.reshape(x, (B, nt * nh * nw, spec.temporal * sh * sw, C))


def window_merge(blocks: DiffArray, spec: WindowSpec, t: int, h: int, w: int) -> DiffArray:
    """Inverse of window_partition."""
    B = blocks.shape[0]
    sh, sw = spec.resolve_spatial(h, w)
    nt, nh, nw = window_counts(t, h, w, spec)
    x = O.reshape(blocks, (B, nt, nh, nw, spec.temporal, sh, sw, blocks.shape[-1]))
    x = O.transpose(x, (0, 1, 4, 2, 5, 3, 6, 7))
    return O.reshape(x, (B, t, h, w, blocks.shape[-1]))


def partition_windows(tokens: DiffArray, spec: WindowSpec) -> list[DiffArray]:
    """Split an unbatched (T, H, W, C) grid into its window blocks.

    Returns T/w blocks (times the spatial tiling when the spatial window is
    smaller than the grid), each of shape (w, sh, sw, C); concatenating the
    blocks through window_merge reconstructs the input exactly.
    """
    if tokens.ndim != 4:
        raise ShapeError(f"expected a (T, H, W, C) grid, got {tokens.shape}")
    T, H, W, C = tokens.shape
    batched = O.reshape(tokens, (1, T, H, W, C))
    windows = window_partition(batched, spec)
    n = windows.shape[1]
    sh, sw = spec.resolve_spatial(H, W)
    flat = O.reshape(windows, (n, spec.temporal * sh * sw, C))
    pieces = O.split(flat, [1] * n, axis=0)
    return [O.reshape(p, (spec.temporal, sh, sw, C)) for p in pieces]


def merge_windows(blocks: list[DiffArray], spec: WindowSpec, t: int, h: int, w: int) -> DiffArray:
    """Reassemble partition_windows output into the original (T, H, W, C) grid."""
    sh, sw = spec.resolve_spatial(h, w)
    stacked = O.concat([O.reshape(b, (1, spec.temporal * sh * sw, b.shape[-1])) for b in blocks], axis=0)
    n = len(blocks)
    batched = O.reshape(stacked, (1, n, spec.temporal * sh * sw, blocks[0].shape[-1]))
    return O.reshape(window_merge(batched, spec, t, h, w), (t, h, w, blocks[0].shape[-1]))


# ---------------------------------------------------------------------------
# attention parameters
# ---------------------------------------------------------------------------


def relative_index_map(window: tuple[int, int, int]) -> np.ndarray:
    """Pairwise relative-offset index for tokens of one (w, sh, sw) window."""
    w, sh, sw = window
    coords = np.array([(t, i, j) for t in range(w) for i in range(sh) for j in range(sw)], dtype=np.int64)
    delta = coords[:, None, :] - coords[None, :, :]
    dt = delta[..., 0] + w - 1
    dh = delta[..., 1] + sh - 1
    dw = delta[..., 2] + sw - 1
    return (dt * (2 * sh - 1) + dh) * (2 * sw - 1) + dw


def init_attention_params(rng: np.random.Generator, dim: int, heads: int, window: tuple[int, int, int] | None = None) -> dict:
    """Projections for one attention layer, plus a learned relative-position
    bias table when a window shape is given (video layers)."""
    if dim % heads:
        raise ShapeError(f"dim {dim} not divisible by heads {heads}")
    p = {
        "wq": P.normal(rng, (dim, dim)),
        "bq": P.zeros((dim,)),
        "wk": P.normal(rng, (dim, dim)),
        "bk": P.zeros((dim,)),
        "wv": P.normal(rng, (dim, dim)),
        "bv": P.zeros((dim,)),
        "wo": P.normal(rng, (dim, dim)),
        "bo": P.zeros((dim,)),
    }
    if window is not None:
        w, sh, sw = window
        table_rows = (2 * w - 1) * (2 * sh - 1) * (2 * sw - 1)
        p["rel_bias"] = P.normal(rng, (table_rows, heads))
    return p


@dataclass
class AttentionOutput:
    """Windowed attention result: the reassembled grid plus the per-window
    pieces before concatenation (kept for locality tests)."""

    a: DiffArray
    per_window: DiffArray  # (B, windows, tokens_per_window, C)
    window_grid: tuple[int, int, int] = field(default=(1, 1, 1))  # (nt, nh, nw)


# ---------------------------------------------------------------------------
# attention forward paths
# ---------------------------------------------------------------------------


def _heads_split(x: DiffArray, heads: int) -> DiffArray:
    # (..., n, dim) -> (..., heads, n, dim/heads)
    *lead, n, dim = x.shape
    x = O.reshape(x, (*lead, n, heads, dim // heads))
    order = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return O.transpose(x, order)


def _heads_join(x: DiffArray) -> DiffArray:
    # (..., heads, n, dh) -> (..., n, heads*dh)
    *lead, h, n, dh = x.shape
    order = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    x = O.transpose(x, order)
    return O.reshape(x, (*lead, n, h * dh))


def _attend(q: DiffArray, k: DiffArray, v: DiffArray, bias: DiffArray | None, add_mask: np.ndarray | None) -> DiffArray:
    dh = q.shape[-1]
    scores = O.scale(O.matmul(q, O.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))), 1.0 / math.sqrt(dh))
    if bias is not None:
        scores = O.add(scores, bias)
    if add_mask is not None:
        scores = O.add(scores, O.as_diff(add_mask))
    probs = O.softmax(scores, axis=-1)
    return O.matmul(probs, v)


def multi_head_attention(x: DiffArray, p: dict, heads: int, add_mask: np.ndarray | None = None) -> DiffArray:
    """Full self-attention over (B, n, dim) with an optional additive mask
    broadcastable to (B, heads, n, n)."""
    q = _heads_split(O.add(O.matmul(x, p["wq"]), p["bq"]), heads)
    k = _heads_split(O.add(O.matmul(x, p["wk"]), p["bk"]), heads)
    v = _heads_split(O.add(O.matmul(x, p["wv"]), p["bv"]), heads)
    ctx = _heads_join(_attend(q, k, v, None, add_mask))
    return O.add(O.matmul(ctx, p["wo"]), p["bo"])


def windowed_mha(tokens: DiffArray, spec: WindowSpec, p: dict, heads: int) -> AttentionOutput:
    """Multi-head attention computed independently inside each window.

    tokens: (B, T, H, W, C) or an unbatched (T, H, W, C) grid.
    """
    squeeze = tokens.ndim == 4
    if squeeze:
        tokens = O.reshape(tokens, (1, *tokens.shape))
    B, T, H, W, C = tokens.shape
    if C % heads:
        raise ShapeError(f"dim {C} not divisible by heads {heads}")
    spec.validate(T, H, W)
    sh, sw = spec.resolve_spatial(H, W)

    xw = window_partition(tokens, spec)  # (B, nW, t, C)
    q = _heads_split(O.add(O.matmul(xw, p["wq"]), p["bq"]), heads)
    k = _heads_split(O.add(O.matmul(xw, p["wk"]), p["bk"]), heads)
    v = _heads_split(O.add(O.matmul(xw, p["wv"]), p["bv"]), heads)

    bias = None
    if "rel_bias" in p:
        idx = relative_index_map((spec.temporal, sh, sw))
        bias = O.transpose(O.embedding(p["rel_bias"], idx), (2, 0, 1))  # (heads, t, t)

    ctx = _heads_join(_attend(q, k, v, bias, None))  # (B, nW, t, C)
    per_window = O.add(O.matmul(ctx, p["wo"]), p["bo"])
    a = window_merge(per_window, spec, T, H, W)
    if squeeze:
        a = O.reshape(a, (T, H, W, C))
    return AttentionOutput(a=a, per_window=per_window, window_grid=window_counts(T, H, W, spec))


def cross_window_mask(t: int, h: int, w: int, spec: WindowSpec) -> np.ndarray:
    """Additive (n, n) mask that is -1e9 exactly between different windows."""
    sh, sw = spec.resolve_spatial(h, w)
    wid = np.empty((t, h, w), dtype=np.int64)
    nt, nh, nw = window_counts(t, h, w, spec)
    for ti in range(t):
        for hi in range(h):
            for wi in range(w):
                wid[ti, hi, wi] = ((ti // spec.temporal) * nh + hi // sh) * nw + wi // sw
    flat = wid.reshape(-1)
    return np.where(flat[:, None] == flat[None, :], 0.0, -1e9)


def masked_full_attention_reference(tokens: DiffArray, spec: WindowSpec, p: dict, heads: int) -> DiffArray:
    """Oracle path: full attention over the flattened grid with an additive
    cross-window mask (and the relative bias placed block-locally). Must
    match windowed_mha elementwise; kept as a separate code path on purpose.
    """
    squeeze = tokens.ndim == 4
    if squeeze:
        tokens = O.reshape(tokens, (1, *tokens.shape))
    B, T, H, W, C = tokens.shape
    spec.validate(T, H, W)
    sh, sw = spec.resolve_spatial(H, W)
    n = T * H * W

    # Flatten in window order so the mask is block-diagonal.
    xw = window_partition(tokens, spec)
    flat = O.reshape(xw, (B, n, C))
    nwin = xw.shape[1]
    t = spec.temporal * sh * sw

    mask = np.full((n, n), -1e9)
    for b in range(nwin):
        mask[b * t : (b + 1) * t, b * t : (b + 1) * t] = 0.0

    bias_full = None
    if "rel_bias" in p:
        idx = relative_index_map((spec.temporal, sh, sw))
        block = O.transpose(O.embedding(p["rel_bias"], idx), (2, 0, 1))  # (heads, t, t)
        rows = []
        zero = O.scale(block, 0.0)
        for i in range(nwin):
            rows.append(O.concat([block if j == i else zero for j in range(nwin)], axis=2))
        bias_full = O.concat(rows, axis=1)  # (heads, n, n)

    q = _heads_split(O.add(O.matmul(flat, p["wq"]), p["bq"]), heads)
    k = _heads_split(O.add(O.matmul(flat, p["wk"]), p["bk"]), heads)
    v = _heads_split(O.add(O.matmul(flat, p["wv"]), p["bv"]), heads)
    ctx = _heads_join(_attend(q, k, v, bias_full, mask))
    out = O.add(O.matmul(ctx, p["wo"]), p["bo"])
    merged = window_merge(O.reshape(out, (B, nwin, t, C)), spec, T, H, W)
    if squeeze:
        merged = O.reshape(merged, (T, H, W, C))
    return merged


# ---------------------------------------------------------------------------
# receptive fields
# ---------------------------------------------------------------------------


def receptive_field(schedule: WindowSchedule, frame: int, frames: int) -> frozenset[int]:
    """Input frames that can influence the given output frame.

    Interval propagation: every layer with temporal window w expands the
    reachable set to the union of the aligned w-blocks it touches. Spatial
    merges never mix time steps, so they do not appear here.
    """
    if not 0 <= frame < frames:
        raise ScheduleError(f"frame {frame} outside [0, {frames})")
    reach = {frame}
    for stage in schedule.stages:
        w = stage.temporal_window
        if frames % w:
            raise ScheduleError(f"window {w} does not divide frame count {frames}")
        for _ in range(stage.layers):
            blocks = {f // w for f in reach}
            reach = set()
            for b in blocks:
                reach.update(range(b * w, (b + 1) * w))
    return frozenset(reach)

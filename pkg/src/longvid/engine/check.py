"""Central finite-difference gradient verification.

The numeric side never touches the tape: it re-runs the forward with
perturbed entries, which keeps it independent of the backward rules it
checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array import DiffArray, Tape, no_tape

DEFAULT_STEP = 1e-5


@dataclass
class GradMismatch:
    array_index: int
    flat_index: int
    analytic: float
    numeric: float

    @property
    def abs_diff(self) -> float:
        return abs(self.analytic - self.numeric)


@dataclass
class GradCheckResult:
    ok: bool
    max_abs_diff: float
    checked: int
    mismatches: list[GradMismatch] = field(default_factory=list)


def analytic_gradients(f, arrays: list[DiffArray]) -> list[np.ndarray]:
    """Gradients of the scalar f(*arrays) via one tape replay."""
    for a in arrays:
        a.zero_grad()
    with Tape() as tape:
        loss = f(*arrays)
        tape.backward(loss)
    return [np.zeros_like(a.data) if a.grad is None else a.grad.copy() for a in arrays]


def numeric_gradient(f, arrays: list[DiffArray], which: int, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of f w.r.t. one array, entry by entry."""
    target = arrays[which]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_tape():
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = f(*arrays).item()
            flat[i] = keep - h
            down = f(*arrays).item()
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(
    f,
    arrays: list[DiffArray],
    rtol: float = 1e-3,
    atol: float = 1e-6,
    h: float = DEFAULT_STEP,
) -> GradCheckResult:
    """Compare analytic and central-difference gradients entry by entry."""
    analytic = analytic_gradients(f, arrays)
    max_diff = 0.0
    checked = 0
    mismatches: list[GradMismatch] = []
    for k, a in enumerate(arrays):
        if not a.requires_grad:
            continue
        numeric = numeric_gradient(f, arrays, k, h=h)
        diff = np.abs(analytic[k] - numeric)
        tol = atol + rtol * np.abs(numeric)
        max_diff = max(max_diff, float(diff.max(initial=0.0)))
        checked += a.size
        bad = np.argwhere(diff > tol)
        for idx in bad:
            flat = int(np.ravel_multi_index(tuple(idx), a.data.shape)) if a.ndim else 0
            mismatches.append(
                GradMismatch(k, flat, float(analytic[k][tuple(idx)]), float(numeric[tuple(idx)]))
            )
    return GradCheckResult(ok=not mismatches, max_abs_diff=max_diff, checked=checked, mismatches=mismatches)

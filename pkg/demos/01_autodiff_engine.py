"""Tour of the float64 autodiff engine.

Builds a small computation, replays the tape backward, and confirms the
analytic gradients against central finite differences, the same oracle the
test suite uses everywhere.
"""

import numpy as np

from longvid.engine import (
    Tape,
    add,
    backward,
    check_gradients,
    constant,
    gelu,
    layernorm,
    matmul,
    parameter,
    softmax,
    sum as asum,
)

rng = np.random.default_rng(0)

# A two-layer network with a softmax read-out, recorded on a tape.
x = constant(rng.normal(size=(4, 8)))
w1 = parameter(rng.normal(size=(8, 16)) * 0.2)
b1 = parameter(np.zeros(16))
w2 = parameter(rng.normal(size=(16, 3)) * 0.2)
gain = parameter(np.ones(16))
bias = parameter(np.zeros(16))

with Tape() as tape:
    h = gelu(add(matmul(x, w1), b1))
    h = layernorm(h, gain, bias)
    probs = softmax(matmul(h, w2), axis=-1)
    loss = asum(probs * probs)
    backward(loss)

print(f"loss = {loss.item():.6f}")
print(f"tape length = {len(tape.ops)} ops, replayed = {tape.replayed_ops}")
print(f"|dL/dw1| max = {np.abs(w1.grad).max():.6f}")

# The finite-difference oracle re-runs the forward with perturbed entries;
# it never touches the backward rules it is checking.
result = check_gradients(
    lambda w1, b1, w2: asum(
        (lambda p: p * p)(softmax(matmul(layernorm(gelu(add(matmul(x, w1), b1)), gain, bias), w2), -1))
    ),
    [w1, b1, w2],
    rtol=1e-3,
    atol=1e-6,
)
print(f"finite differences: checked {result.checked} entries, "
      f"max |analytic - numeric| = {result.max_abs_diff:.2e}, ok = {result.ok}")

# Gradients accumulate additively across fan-out and across backward calls;
# zeroing is explicit.
x2 = parameter(np.array([3.0]))
x2.zero_grad()
with Tape():
    backward(asum(add(x2, x2)))
print(f"d(x + x)/dx = {x2.grad[0]} (fan-out accumulates)")

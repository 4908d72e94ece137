#!/usr/bin/env python3
"""Tour of the tensor engine: build graphs, backpropagate, verify with FD.

Every layer in this package bottoms out in a handful of float64 tensor
primitives with hand-written backward rules. This script builds a few
graphs by hand, walks their gradients, and shows the finite-difference
checker that keeps every rule honest.
"""

import numpy as np

from mmsent import tensor as tz
from mmsent.tensor import Tensor, grad_check

rng = np.random.default_rng(0)

# --- a tiny graph -----------------------------------------------------------
# f(x) = sum(sigmoid(x W)) for a 2x3 input and 3x2 weights
x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
loss = tz.sum_all(tz.sigmoid(tz.matmul(x, w)))
loss.backward()
print("loss:", loss.item())
print("dL/dx:\n", x.grad)
print("dL/dw:\n", w.grad)

# --- shared subexpressions accumulate ---------------------------------------
a = Tensor(2.0, requires_grad=True)
y = tz.add(tz.mul(a, a), a)  # a^2 + a -> gradient 2a + 1 = 5
y.backward()
print("\nd(a^2 + a)/da at a=2:", a.grad.item())

# --- the finite-difference checker ------------------------------------------
# central differences vs autodiff on a composite op
x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
g = Tensor(np.ones(5), requires_grad=True)
b = Tensor(np.zeros(5), requires_grad=True)
readout = Tensor(rng.normal(size=(4, 5)))
report = grad_check(
    lambda x, g, b: tz.sum_all(tz.mul(tz.layer_norm(x, g, b), readout)), [x, g, b]
)
print("\nlayer_norm gradient check:", report)

# the checker is a detector, not a formality: hide half the dependency in a
# detached constant and the relative error jumps to ~0.5
x = Tensor(rng.normal(size=4), requires_grad=True)
broken = grad_check(lambda x: tz.add(tz.sum_all(x), tz.sum_all(Tensor(x.data))), [x])
print("corrupted-graph check (should be large):", round(broken.max_rel_err, 3))

# --- the same machinery at the scale this package uses it --------------------
from mmsent.verify import format_table, run_gradcheck

print("\nfull per-operation verification table:")
print(format_table(run_gradcheck()))

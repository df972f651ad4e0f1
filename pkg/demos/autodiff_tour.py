"""
The gradient tape
=================

Operations on tensors are logged on whichever ``Tape`` is active, and
``Tape.backward`` walks that log in reverse.
"""

import numpy as np

from kandefect.nn import relu, softmax_cross_entropy
from kandefect.tensor import Tape, Tensor, matmul, mean_all

rng = np.random.default_rng(1)
W = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="W")
x = Tensor(rng.normal(size=(4, 5)))

with Tape() as tape:
    h = relu(matmul(W, x))
    loss = mean_all(h)

print("recorded ops:", tape.ops)
grads = tape.backward(loss)
print("dloss/dW:\n", np.round(grads[W], 4))

###############################################################################
# Gradients land in ``W.grad`` too, and keep adding up until cleared.

with Tape() as tape:
    loss = mean_all(relu(matmul(W, x)))
tape.backward(loss)
print("after two backward passes, grad == 2 * first:", np.allclose(W.grad, 2 * grads[W]))
W.zero_grad()

###############################################################################
# A quick finite-difference check on a classifier loss

labels = np.array([0, 2, 1])
z = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
with Tape() as tape:
    loss = softmax_cross_entropy(z, labels)
analytic = tape.backward(loss)[z]

h = 1e-6
numeric = np.zeros_like(z.data)
for idx in np.ndindex(z.shape):
    old = z.data[idx]
    z.data[idx] = old + h
    up = softmax_cross_entropy(z, labels).item()
    z.data[idx] = old - h
    down = softmax_cross_entropy(z, labels).item()
    z.data[idx] = old
    numeric[idx] = (up - down) / (2 * h)
print("max |analytic - numeric|:", np.abs(analytic - numeric).max())

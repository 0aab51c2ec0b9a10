"""A tour of the autodiff core: build a small graph, take gradients,
and confirm them against central finite differences."""

import numpy as np

from lookupvnet.gradcore import (
    Tensor,
    backward,
    conv2d,
    dense,
    finite_diff_grad,
    max_pool2d,
    max_rel_error,
    relu,
    reshape,
    softmax_cross_entropy,
)

rng = np.random.default_rng(0)

# A two-layer network on a random batch: conv -> relu -> pool -> dense.
x = Tensor(rng.normal(size=(4, 3, 8, 8)), requires_grad=True)
kernels = Tensor(rng.normal(size=(6, 3, 3, 3)) * 0.4, requires_grad=True)
weights = Tensor(rng.normal(size=(54, 5)) * 0.4, requires_grad=True)
bias = Tensor(np.zeros(5), requires_grad=True)
labels = rng.integers(0, 5, size=4)


def loss_fn():
    h = max_pool2d(relu(conv2d(x, kernels)))
    h = reshape(h, (4, -1))
    return softmax_cross_entropy(dense(h, weights, bias), labels)


loss = loss_fn()
print(f"loss on the random batch: {float(loss.data):.6f}")

grads = backward(loss)
print(f"gradient tensors returned: {len(grads)}")

for name, param in [("input", x), ("kernels", kernels), ("weights", weights), ("bias", bias)]:
    numeric = finite_diff_grad(loss_fn, param, h=1e-5)
    err = max_rel_error(grads[param], numeric)
    print(f"{name:8s} max relative error vs finite differences: {err:.2e}")

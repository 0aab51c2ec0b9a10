"""Tape-based reverse-mode differentiation over dense float64 arrays.

Provides exactly the operations the color-table networks need (2-D
cross-correlation, affine layers, relu, max pooling, softmax cross
entropy, a few elementwise helpers) plus a central-difference oracle
for verifying gradients. All math is double precision; graphs are
built dynamically and are single-threaded.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A node in the computation graph.

    Leaves are created directly from data (``requires_grad=True`` for
    learnable parameters); interior nodes are created by the ops below
    and carry a vector-Jacobian-product closure over their parents.
    Data buffers are treated as immutable once a node has consumers.
    """

    __slots__ = ("data", "requires_grad", "parents", "vjp", "op")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self.vjp = vjp
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"


# ---------------------------------------------------------------------------
# flop accounting (cost-model cross checks)

_active_counter = None


class OpCounter:
    """Accumulates forward float-op counts under the 2*fan_in+1 convention."""

    def __init__(self):
        self.flops = 0


@contextmanager
def count_flops():
    """Context manager; conv2d/dense add their forward costs to the counter."""
    global _active_counter
    prev, counter = _active_counter, OpCounter()
    _active_counter = counter
    try:
        yield counter
    finally:
        _active_counter = prev


def _tally(flops):
    if _active_counter is not None:
        _active_counter.flops += int(flops)


# ---------------------------------------------------------------------------
# operations


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data
    return Tensor(out, parents=(a, b), vjp=lambda g: (g, g), op="add")


def mul(a, b):
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data * b.data
    ad, bd = a.data, b.data
    return Tensor(out, parents=(a, b), vjp=lambda g: (g * bd, g * ad), op="mul")


def sum_all(x):
    """Sum of every entry, as a scalar node."""
    shape = x.data.shape
    return Tensor(x.data.sum(), parents=(x,), vjp=lambda g: (np.full(shape, float(g)),), op="sum")


def reshape(x, shape):
    old = x.data.shape
    return Tensor(x.data.reshape(shape), parents=(x,), vjp=lambda g: (g.reshape(old),), op="reshape")


def relu(x):
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), parents=(x,), vjp=lambda g: (g * mask,), op="relu")


def _im2col(x, k, stride):
    # x: padded [N,C,H,W] -> [N, C*k*k, Ho*Wo]; logical axis order (C, ki, kj)
    n, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    sn, sc, sh, sw = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return windows.reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(cols, n, c, k, hp, wp, ho, wo, stride):
    # adjoint of _im2col: scatter-add columns back into the padded image
    g6 = cols.reshape(n, c, k, k, ho, wo)
    gx = np.zeros((n, c, hp, wp))
    for ki in range(k):
        for kj in range(k):
            gx[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += g6[:, :, ki, kj]
    return gx


def conv2d(x, kernels, stride=1, padding=0):
    """2-D cross-correlation of [N,C,H,W] input with [J,C,k,k] kernels."""
    xd, kd = x.data, kernels.data
    if xd.ndim != 4 or kd.ndim != 4 or kd.shape[2] != kd.shape[3] or xd.shape[1] != kd.shape[1]:
        raise ShapeMismatchError(
            f"conv2d shape mismatch: input {tuple(xd.shape)} vs kernels {tuple(kd.shape)}"
        )
    n, c, h, w = xd.shape
    j, _, k, _ = kd.shape
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"conv2d output would be empty: input {tuple(xd.shape)}, kernels {tuple(kd.shape)}, "
            f"stride {stride}, padding {padding}"
        )

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols, ho, wo = _im2col(xp, k, stride)
    wmat = kd.reshape(j, c * k * k)
    out = np.matmul(wmat, cols).reshape(n, j, ho, wo)
    _tally(n * ho * wo * j * (2 * k * k * c + 1))

    hp, wp = xp.shape[2], xp.shape[3]

    def vjp(g):
        go = g.reshape(n, j, ho * wo)
        grad_w = np.tensordot(go, cols, axes=([0, 2], [0, 2])).reshape(kd.shape)
        grad_cols = np.matmul(wmat.T, go)
        gx = _col2im(grad_cols, n, c, k, hp, wp, ho, wo, stride)
        if padding:
            gx = gx[:, :, padding : hp - padding, padding : wp - padding]
        return gx, grad_w

    return Tensor(out, parents=(x, kernels), vjp=vjp, op="conv2d")


def dense(x, weights, bias):
    """Affine map rows @ weights + bias for [N,D] input."""
    xd, wd, bd = x.data, weights.data, bias.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[0] or bd.shape != (wd.shape[1],):
        raise ShapeMismatchError(
            f"dense shape mismatch: input {tuple(xd.shape)}, weights {tuple(wd.shape)}, "
            f"bias {tuple(bd.shape)}"
        )
    out = xd @ wd + bd
    _tally(xd.shape[0] * wd.shape[1] * (2 * wd.shape[0] + 1))

    def vjp(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return Tensor(out, parents=(x, weights, bias), vjp=vjp, op="dense")


def max_pool2d(x, window=2, stride=None):
    """Max pooling; window 2, stride 2 unless configured."""
    stride = window if stride is None else stride
    xd = x.data
    if xd.ndim != 4:
        raise ShapeMismatchError(f"max_pool2d expects [N,C,H,W], got {tuple(xd.shape)}")
    n, c, h, w = xd.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"max_pool2d output would be empty: input {tuple(xd.shape)}, window {window}"
        )
    sn, sc, sh, sw = xd.strides
    windows = np.lib.stride_tricks.as_strided(
        xd,
        shape=(n, c, ho, wo, window, window),
        strides=(sn, sc, stride * sh, stride * sw, sh, sw),
        writeable=False,
    )
    flat = windows.reshape(n, c, ho, wo, window * window)
    arg = flat.argmax(axis=-1)  # first max wins: deterministic ties
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gx = np.zeros_like(xd)
        ni, ci, hi, wi = np.indices((n, c, ho, wo))
        np.add.at(gx, (ni, ci, hi * stride + arg // window, wi * stride + arg % window), g)
        return (gx,)

    return Tensor(out, parents=(x,), vjp=vjp, op="max_pool2d")


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]; scalar node."""
    zd = logits.data
    if zd.ndim != 2:
        raise ShapeMismatchError(f"softmax_cross_entropy expects [N,K] logits, got {tuple(zd.shape)}")
    labels = np.asarray(labels)
    n, k = zd.shape
    if labels.shape != (n,):
        raise ShapeMismatchError(f"labels shape {tuple(labels.shape)} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0,{k}): {labels.min()}..{labels.max()}")
    shifted = zd - zd.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (float(g) / n),)

    return Tensor(loss, parents=(logits,), vjp=vjp, op="softmax_cross_entropy")


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss):
    """Gradients of a scalar loss for every reachable learnable leaf.

    Returns a map {leaf Tensor -> gradient array}; a parameter used along
    several paths receives the sum of all path gradients. Leaves that the
    loss does not depend on are absent from the map.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {loss.data.shape}")

    topo, visited = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.data)}
    leaf_grads = {}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.parents:
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        elif node.requires_grad:
            leaf_grads[node] = g
    return leaf_grads


def finite_diff_grad(loss_fn, param, h=1e-5):
    """Central-difference gradient of loss_fn w.r.t. every entry of param.

    loss_fn must be deterministic and re-read param.data on each call;
    entries are perturbed in place and restored.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    flat = param.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        hi = float(loss_fn().data)
        flat[i] = saved - h
        lo = float(loss_fn().data)
        flat[i] = saved
        grad[i] = (hi - lo) / (2.0 * h)
    return grad.reshape(param.data.shape)


def max_rel_error(approx, exact, floor=1e-3):
    """max |a-e| / max(|a|+|e|, floor); the floor keeps near-zero entries honest."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(np.abs(approx) + np.abs(exact), floor)
    return float(np.max(np.abs(approx - exact) / denom)) if approx.size else 0.0


def assert_finite(array, what="tensor"):
    if not np.all(np.isfinite(array)):
        raise FloatingPointError(f"non-finite values in {what}")

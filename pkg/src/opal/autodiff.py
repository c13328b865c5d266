"""Reverse-mode autodiff over a recorded graph of dense array ops.

Small on purpose: just enough primitives to express the three training
losses through a shared dense encoder. Every op builds a `Var` node whose
backward closure scatters adjoints into its parents; `backward()` walks the
graph in reverse topological order. Gradients accumulate, so a leaf used
twice receives the sum of both contributions.

Dtype follows the leaves: float32 networks get float32 gradients, float64
networks (used by the finite-difference suites) get float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "as_var",
    "add",
    "sub",
    "mul",
    "matmul",
    "relu",
    "gather_rows",
    "safe_sqrt",
    "sum_all",
    "sum_rows",
    "softmax_cross_entropy_mean",
    "backward",
]


class Var:
    """A node in the computation graph: value, accumulated gradient, parents."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape}, dtype={self.data.dtype})"


def as_var(x):
    return x if isinstance(x, Var) else Var(np.asarray(x))


def _accum(node, g):
    if node._parents or node._backward is not None or True:
        # leaves and interior nodes both accumulate; constants simply get
        # a grad nobody reads
        if node.grad is None:
            node.grad = np.zeros_like(node.data, dtype=node.data.dtype)
        node.grad += g


def _unbroadcast(g, shape):
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_var(a), as_var(b)
    out = Var(a.data + b.data, (a, b))

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.data.shape).astype(a.data.dtype, copy=False))
        _accum(b, _unbroadcast(g, b.data.shape).astype(b.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def sub(a, b):
    a, b = as_var(a), as_var(b)
    out = Var(a.data - b.data, (a, b))

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.data.shape).astype(a.data.dtype, copy=False))
        _accum(b, _unbroadcast(-g, b.data.shape).astype(b.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def mul(a, b):
    a, b = as_var(a), as_var(b)
    out = Var(a.data * b.data, (a, b))

    def backward_fn(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape).astype(a.data.dtype, copy=False))
        _accum(b, _unbroadcast(g * a.data, b.data.shape).astype(b.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def matmul(a, b):
    a, b = as_var(a), as_var(b)
    out = Var(a.data @ b.data, (a, b))

    def backward_fn(g):
        _accum(a, (g @ b.data.T).astype(a.data.dtype, copy=False))
        _accum(b, (a.data.T @ g).astype(b.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def relu(a):
    a = as_var(a)
    mask = a.data > 0
    out = Var(np.where(mask, a.data, 0), (a,))

    def backward_fn(g):
        _accum(a, np.where(mask, g, 0))

    out._backward = backward_fn
    return out


def gather_rows(a, idx):
    """Select rows of a 2D Var; backward scatter-adds into the source."""
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Var(a.data[idx], (a,))

    def backward_fn(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        _accum(a, acc)

    out._backward = backward_fn
    return out


def safe_sqrt(a):
    """Elementwise sqrt with the subgradient 0 at zero.

    Exact forward for nonnegative inputs; the zero-input case only arises
    for coincident pair members, where any subgradient is admissible.
    """
    a = as_var(a)
    root = np.sqrt(np.maximum(a.data, 0))
    out = Var(root, (a,))

    def backward_fn(g):
        denom = np.where(root > 0, 2.0 * root, 1.0)
        _accum(a, np.where(root > 0, g / denom, 0).astype(a.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def sum_all(a):
    a = as_var(a)
    out = Var(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,))

    def backward_fn(g):
        _accum(a, np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def sum_rows(a):
    """Sum a 2D Var over its last axis, one scalar per row."""
    a = as_var(a)
    out = Var(a.data.sum(axis=-1), (a,))

    def backward_fn(g):
        _accum(a, np.repeat(np.asarray(g)[..., None], a.data.shape[-1], axis=-1).astype(a.data.dtype, copy=False))

    out._backward = backward_fn
    return out


def softmax_cross_entropy_mean(logits, labels):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Log-sum-exp stabilized: rows are shifted by their max before
    exponentiation, so huge logit magnitudes stay finite. Backward is the
    usual (softmax - onehot) / batch.
    """
    logits = as_var(logits)
    labels = np.asarray(labels, dtype=np.intp)
    z = logits.data
    if z.ndim != 2:
        raise ValueError(f"logits must be 2D, got shape {z.shape}")
    if labels.shape != (z.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match batch {z.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ValueError("label index out of range")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    denom = expz.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    ce = -log_probs[np.arange(n), labels]
    out = Var(np.asarray(ce.mean(), dtype=z.dtype), (logits,))
    probs = expz / denom

    def backward_fn(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        _accum(logits, (grad * (g / n)).astype(z.dtype, copy=False))

    out._backward = backward_fn
    return out


def backward(out):
    """Run reverse-mode accumulation from a scalar (or any) output Var."""
    topo = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    out.grad = np.ones_like(out.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)

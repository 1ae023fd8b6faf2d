"""Minimal reverse-mode autodiff over dense float64 matrices, plus plain SGD.

Tensors hold 2-D (or scalar) numpy arrays and record their producing op on a
tape; calling ``backward()`` on a scalar loss accumulates exact gradients into
every reachable parameter. Only the primitives needed by the classification
heads are provided -- there is no general broadcasting beyond row-vector bias
addition and the outer (n,1)+(1,n) sum used by attention scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, GraphError, TrainingError


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim > 2:
        raise ConfigError(f"only scalars and 2-D matrices are supported, got ndim={arr.ndim}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return grad.sum()
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the autodiff tape wrapping a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple = ()

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        """Reverse-accumulate d(self)/d(leaf) into every reachable .grad.

        `self` must be a scalar (loss). Gradients add onto existing .grad
        contents, so leaves must be zeroed between optimizer step cycles.
        """
        if self.data.size != 1:
            raise ConfigError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad += g
            if node._backward is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward(g)):
                if pgrad is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] += pgrad
                else:
                    grads[id(parent)] = pgrad

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if any(isinstance(p, Tensor) and (p.requires_grad or p._parents) for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ConfigError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ConfigError(f"add shape mismatch: {a.data.shape} + {b.data.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * factor

    def backward(g):
        return (g * factor,)

    return _make(out, (x,), backward)


def transpose(x: Tensor) -> Tensor:
    out = x.data.T.copy()

    def backward(g):
        return (g.T,)

    return _make(out, (x,), backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with the bias row broadcast over the rows of x."""
    if b.data.ndim != 2 or b.data.shape[0] != 1 or b.data.shape[1] != w.data.shape[1]:
        raise ConfigError(f"affine bias must be 1x{w.data.shape[1]}, got {b.data.shape}")
    return add(matmul(x, w), b)


def rectify(x: Tensor, negative_slope: float = 0.0) -> Tensor:
    """Elementwise max(x, negative_slope * x); the branch at 0 is the slope side."""
    if negative_slope < 0:
        raise ConfigError("negative_slope must be >= 0")
    pos = x.data > 0.0
    out = np.where(pos, x.data, negative_slope * x.data)

    def backward(g):
        return (np.where(pos, g, negative_slope * g),)

    return _make(out, (x,), backward)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise softmax restricted to masked-in entries; masked-out are exactly 0.

    `mask` is a boolean (n, n) adjacency including self-loops, so every row has
    at least one admissible entry. Row maxima are subtracted for stability.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.data.shape:
        raise ConfigError(f"mask shape {mask.shape} != scores shape {scores.data.shape}")
    if not mask.any(axis=1).all():
        raise GraphError("masked_softmax: a row has no admissible entries")
    shifted = np.where(mask, scores.data, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    expd = np.where(mask, np.exp(shifted), 0.0)
    out = expd / expd.sum(axis=1, keepdims=True)

    def backward(g):
        # d softmax: alpha * (g - sum_j g_j alpha_j) per row, zero off-mask
        inner = (g * out).sum(axis=1, keepdims=True)
        return (np.where(mask, out * (g - inner), 0.0),)

    return _make(out, (scores,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over the batch; labels are class indices."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise DataError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise DataError(f"labels must lie in [0, {c})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    out = -log_probs[np.arange(n), labels].mean()

    def backward(g):
        grad = np.exp(log_probs)
        grad[np.arange(n), labels] -= 1.0
        return (grad * (float(g) / n),)

    return _make(np.float64(out), (logits,), backward)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Plain (non-differentiable) row softmax used at evaluation time."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over rows: (n, d) -> (1, d).

    Each column is summed in ascending value order, so the result is
    bit-identical under any permutation of the rows (the summand multiset is
    what determines the rounding). The gradient of a mean is uniform and
    unaffected by the summation order.
    """
    n = x.data.shape[0]
    if n == 0:
        raise DataError("mean_rows on an empty matrix")
    out = (np.sort(x.data, axis=0).sum(axis=0, keepdims=True) / n)

    def backward(g):
        return (np.repeat(g / n, n, axis=0),)

    return _make(out, (x,), backward)


def vstack(tensors: list[Tensor]) -> Tensor:
    if not tensors:
        raise DataError("vstack of an empty list")
    out = np.vstack([t.data for t in tensors])
    row_counts = [t.data.shape[0] for t in tensors]

    def backward(g):
        grads = []
        offset = 0
        for rows in row_counts:
            grads.append(g[offset:offset + rows])
            offset += rows
        return tuple(grads)

    return _make(out, tuple(tensors), backward)


@dataclass(frozen=True)
class LrSchedule:
    """Exponential decay: lr(e) = initial_lr * decay_per_epoch ** e."""

    initial_lr: float = 0.001
    decay_per_epoch: float = 0.995

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be positive")
        if not 0 < self.decay_per_epoch <= 1:
            raise ConfigError("decay_per_epoch must lie in (0, 1]")


def lr_at_epoch(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    return schedule.initial_lr * schedule.decay_per_epoch ** epoch


def sgd_step(params: list[Parameter], lr: float, weight_decay: float = 0.0):
    """p <- p - lr * (p.grad + weight_decay * p); zeroes grads afterward."""
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    for p in params:
        if not np.isfinite(p.grad).all():
            raise TrainingError("non-finite gradient encountered; aborting step")
    for p in params:
        p.data -= lr * (p.grad + weight_decay * p.data)
        p.grad[...] = 0.0

"""Differentiable primitives.

Each primitive computes its forward value with numpy and, when a tape is
active and some input requires a gradient, records a closure mapping the
output cotangent to one cotangent per input.  Vector primitives also accept
a leading batch axis so a whole mini-batch can share one tape.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tape import RowGrad, Tensor, current_tape, scatter_rows

PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(value, inputs: tuple, vjp) -> Tensor:
    tape = current_tape()
    track = tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=track)
    if track:
        tape.record(out, inputs, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _emit(x.value * x.value, (x,), lambda g: (2.0 * x.value * g,))


def tanh_op(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu_op(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0
    return _emit(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sigmoid_op(x) -> Tensor:
    x = as_tensor(x)
    v = x.value
    # split by sign so exp never overflows
    y = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp_op(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.value)
    return _emit(y, (x,), lambda g: (g * y,))


def log_op(x) -> Tensor:
    x = as_tensor(x)
    return _emit(np.log(x.value), (x,), lambda g: (g / x.value,))


def sum_op(x) -> Tensor:
    x = as_tensor(x)
    return _emit(np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_op(x) -> Tensor:
    x = as_tensor(x)
    n = x.value.size
    return _emit(np.mean(x.value), (x,), lambda g: (np.full(x.shape, g / n),))


# linear algebra ---------------------------------------------------------

def affine(W, x, b) -> Tensor:
    """``W @ x + b`` for ``x`` of shape ``[in]``, or row-wise for ``[n, in]``."""
    W, x, b = as_tensor(W), as_tensor(x), as_tensor(b)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.ndim not in (1, 2) or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: W{W.shape} x{x.shape} b{b.shape} do not conform")
    if x.ndim == 1:
        y = W.value @ x.value + b.value
        return _emit(y, (W, x, b), lambda g: (np.outer(g, x.value), W.value.T @ g, g))
    y = x.value @ W.value.T + b.value
    return _emit(y, (W, x, b), lambda g: (g.T @ x.value, g @ W.value, g.sum(axis=0)))


def dot(w, x) -> Tensor:
    """Inner product of vector ``w`` with ``x`` (``[k]`` -> scalar, ``[n, k]`` -> ``[n]``)."""
    w, x = as_tensor(w), as_tensor(x)
    if w.ndim != 1 or x.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"dot: w{w.shape} x{x.shape} do not conform")
    if x.ndim == 1:
        return _emit(w.value @ x.value, (w, x), lambda g: (g * x.value, g * w.value))
    return _emit(x.value @ w.value, (w, x), lambda g: (g @ x.value, np.outer(g, w.value)))


def concat(a, b) -> Tensor:
    """Concatenate along the last axis (the vector-join operator)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise ShapeError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat: row count mismatch {a.shape} vs {b.shape}")
    n = a.shape[-1]
    return _emit(np.concatenate([a.value, b.value], axis=-1), (a, b),
                 lambda g: (g[..., :n], g[..., n:]))


# indexing ---------------------------------------------------------------

def embedding_lookup(table: Tensor, index) -> Tensor:
    """Row ``index`` of ``table`` (an int gives ``[D]``, an int array ``[n, D]``).

    The backward pass returns a sparse row gradient, so only the rows that
    were read are touched.
    """
    rows = np.asarray(index)
    if not np.issubdtype(rows.dtype, np.integer):
        raise TypeError(f"embedding index must be integer, got {rows.dtype}")
    n_rows = table.shape[0]
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
        raise IndexError(f"embedding index out of range for table with {n_rows} rows")
    value = table.value[rows].copy()
    if rows.ndim == 0:
        return _emit(value, (table,), lambda g: (RowGrad(rows.reshape(1), g[None, :]),))
    return _emit(value, (table,), lambda g: (RowGrad(rows, g),))


def take(x, index) -> Tensor:
    """Gather entries along axis 0 of any tensor."""
    x = as_tensor(x)
    idx = np.asarray(index)
    value = x.value[idx]
    if idx.ndim == 0:
        return _emit(value, (x,), lambda g: (RowGrad(idx.reshape(1), np.asarray(g)[None, ...]),))
    return _emit(value, (x,), lambda g: (RowGrad(idx, g),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _emit(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def stack(items: Sequence[Tensor]) -> Tensor:
    items = [as_tensor(t) for t in items]
    if not items:
        raise ShapeError("stack: empty sequence")
    return _emit(np.stack([t.value for t in items]), tuple(items),
                 lambda g: tuple(g[i] for i in range(len(items))))


def unstack(x: Tensor) -> list[Tensor]:
    return [take(x, i) for i in range(x.shape[0])]


# normalization and aggregation -----------------------------------------

def softmax(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ShapeError("softmax: need a non-empty vector")
    e = np.exp(x.value - x.value.max())
    y = e / e.sum()
    return _emit(y, (x,), lambda g: (y * (g - g @ y),))


def softmax_over_set(scores: Sequence[Tensor]) -> list[Tensor]:
    """Normalise a set of scalar scores into positive weights summing to one."""
    if len(scores) == 0:
        raise ShapeError("softmax_over_set: empty score set")
    return unstack(softmax(stack(scores)))


def segment_sum(x, segments: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``n_segments`` buckets given per-row bucket ids."""
    x = as_tensor(x)
    seg = np.asarray(segments, dtype=np.intp)
    out = scatter_rows(seg, x.value, n_segments)
    return _emit(out, (x,), lambda g: (g[seg],))


def segment_softmax(scores, segments: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a flat score vector computed independently within each segment."""
    scores = as_tensor(scores)
    seg = np.asarray(segments, dtype=np.intp)
    s = scores.value
    top = np.full(n_segments, -np.inf)
    np.maximum.at(top, seg, s)
    e = np.exp(s - top[seg])
    denom = np.bincount(seg, weights=e, minlength=n_segments)
    y = e / denom[seg]

    def vjp(g):
        gy = np.bincount(seg, weights=g * y, minlength=n_segments)
        return (y * (g - gy[seg]),)

    return _emit(y, (scores,), vjp)


def weighted_sum(weights: Sequence, vectors: Sequence) -> Tensor:
    """``sum_i weights[i] * vectors[i]``, differentiable in both arguments."""
    if len(weights) != len(vectors):
        raise ShapeError(f"weighted_sum: {len(weights)} weights for {len(vectors)} vectors")
    if not weights:
        raise ShapeError("weighted_sum: empty input")
    ws = [as_tensor(w) for w in weights]
    vs = [as_tensor(v) for v in vectors]
    dim = vs[0].shape
    if any(v.shape != dim for v in vs):
        raise ShapeError("weighted_sum: vectors differ in shape")
    out = sum(float(w.value) * v.value for w, v in zip(ws, vs))

    def vjp(g):
        return tuple(g @ v.value for v in vs) + tuple(float(w.value) * g for w in ws)

    return _emit(out, tuple(ws) + tuple(vs), vjp)


# losses -----------------------------------------------------------------

def _as_vector(preds) -> Tensor:
    if isinstance(preds, Tensor):
        return preds if preds.ndim == 1 else stack([preds])
    return stack(list(preds))


def mse_loss(preds, targets) -> Tensor:
    """Half mean squared error: ``(1/2n) * sum (p - t)^2``."""
    p = _as_vector(preds)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape[0] != t.shape[0] or t.shape[0] == 0:
        raise ShapeError(f"mse_loss: {p.shape[0]} predictions for {t.shape[0]} targets")
    r = p.value - t
    n = t.shape[0]
    return _emit(0.5 * np.mean(r * r), (p,), lambda g: (g * r / n,))


def bce_loss(probs, labels) -> Tensor:
    """Summed negative log-likelihood of binary labels; probabilities clamped to [1e-12, 1-1e-12]."""
    p = _as_vector(probs)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if p.shape[0] != y.shape[0] or y.shape[0] == 0:
        raise ShapeError(f"bce_loss: {p.shape[0]} probabilities for {y.shape[0]} labels")
    pc = np.clip(p.value, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (p.value > PROB_CLAMP) & (p.value < 1.0 - PROB_CLAMP)
    value = -np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    return _emit(value, (p,), lambda g: (g * inside * ((1.0 - y) / (1.0 - pc) - y / pc),))


def bce_with_logits(logits, labels) -> Tensor:
    """``bce_loss(sigmoid_op(logits), labels)`` computed without forming ``1 - p``.

    ``log(1 - sigmoid(x))`` loses most of its digits once ``sigmoid(x)`` is
    near 1, which happens for ordinary ratings of 4 or 5.  The softplus form
    ``max(x, 0) - x*y + log1p(exp(-|x|))`` keeps full precision, needs no
    probability clamp, and its gradient is simply ``sigmoid(x) - y``.
    """
    x = _as_vector(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape[0] != y.shape[0] or y.shape[0] == 0:
        raise ShapeError(f"bce_with_logits: {x.shape[0]} logits for {y.shape[0]} labels")
    v = x.value
    value = np.sum(np.maximum(v, 0.0) - v * y + np.log1p(np.exp(-np.abs(v))))
    e = np.exp(-np.abs(v))
    prob = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit(value, (x,), lambda g: (g * (prob - y),))
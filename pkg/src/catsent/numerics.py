"""Dense float64 arrays with reverse-mode gradients over an explicit tape.

Every primitive takes an optional ``tape``; with ``tape=None`` it is a plain
forward computation. A tape is rebuilt for every forward pass and replayed
once backward. All math is float64 so finite-difference checks at eps=1e-4
are reliable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, LabelError, NumericDomainError

LOG_FLOOR = 1e-12


class NdArray:
    """A dense real array with an optional gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data, copy: bool = False):
        arr = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def copy(self) -> "NdArray":
        return NdArray(self.data, copy=True)

    def __repr__(self) -> str:
        return f"NdArray(shape={self.data.shape})"


def zeros(shape) -> NdArray:
    return NdArray(np.zeros(shape))


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Each entry holds the output array, the differentiable inputs, and a
    closure computing input gradients from the output gradient. Confined to
    one thread for one forward/backward pass.
    """

    def __init__(self):
        self._entries: list[tuple[NdArray, tuple[NdArray, ...], Callable]] = []

    def record(self, out: NdArray, inputs: tuple[NdArray, ...], backward: Callable) -> None:
        self._entries.append((out, inputs, backward))

    def backward(self, loss: NdArray, params: Sequence[NdArray]) -> None:
        """Populate ``p.grad`` for every param; unreachable params get zeros."""
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, bwd in reversed(self._entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gin in zip(inputs, bwd(g)):
                if gin is None:
                    continue
                acc = grads.get(id(inp))
                if acc is None:
                    grads[id(inp)] = gin
                else:
                    grads[id(inp)] = acc + gin
        for p in params:
            g = grads.get(id(p))
            p.grad = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)


def _record(tape: Tape | None, out: NdArray, inputs, backward) -> NdArray:
    if tape is not None:
        tape.record(out, tuple(inputs), backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a: NdArray, b: NdArray, tape: Tape | None = None) -> NdArray:
    out = NdArray(a.data + b.data)
    return _record(tape, out, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: NdArray, b: NdArray, tape: Tape | None = None) -> NdArray:
    out = NdArray(a.data - b.data)
    return _record(tape, out, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: NdArray, b: NdArray, tape: Tape | None = None) -> NdArray:
    out = NdArray(a.data * b.data)
    return _record(tape, out, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def scale(a: NdArray, c: float, tape: Tape | None = None) -> NdArray:
    out = NdArray(a.data * c)
    return _record(tape, out, (a,), lambda g: (g * c,))


def add_const(a: NdArray, c: np.ndarray | float, tape: Tape | None = None) -> NdArray:
    out = NdArray(a.data + c)
    return _record(tape, out, (a,), lambda g: (_unbroadcast(g, a.shape),))


def matmul(a: NdArray, b: NdArray, tape: Tape | None = None) -> NdArray:
    """Batched matrix product; operands must be at least 2-D."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = NdArray(np.matmul(a.data, b.data))

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _record(tape, out, (a, b), backward)


def reshape(a: NdArray, shape, tape: Tape | None = None) -> NdArray:
    old = a.shape
    out = NdArray(a.data.reshape(shape))
    return _record(tape, out, (a,), lambda g: (g.reshape(old),))


def transpose(a: NdArray, axes, tape: Tape | None = None) -> NdArray:
    inv = np.argsort(axes)
    out = NdArray(np.transpose(a.data, axes))
    return _record(tape, out, (a,), lambda g: (np.transpose(g, inv),))


def take(a: NdArray, indices, axis: int, tape: Tape | None = None) -> NdArray:
    """Index-select along ``axis``; backward scatter-adds (repeats allowed)."""
    idx = np.asarray(indices)
    out = NdArray(np.take(a.data, idx, axis=axis))

    def backward(g):
        ga = np.zeros_like(a.data)
        gm = np.moveaxis(ga, axis, 0)
        np.add.at(gm, idx.reshape(-1),
                  np.moveaxis(g, axis, 0).reshape((idx.size,) + gm.shape[1:]))
        return (ga,)

    return _record(tape, out, (a,), backward)


def stack(arrays: Sequence[NdArray], axis: int, tape: Tape | None = None) -> NdArray:
    out = NdArray(np.stack([a.data for a in arrays], axis=axis))

    def backward(g):
        pieces = np.moveaxis(g, axis, 0)
        return tuple(pieces[i] for i in range(len(arrays)))

    return _record(tape, out, tuple(arrays), backward)


def reduce_sum(a: NdArray, axis=None, keepdims: bool = False,
               tape: Tape | None = None) -> NdArray:
    out = NdArray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(tape, out, (a,), backward)


def reduce_mean(a: NdArray, axis=None, keepdims: bool = False,
                tape: Tape | None = None) -> NdArray:
    n = a.data.size if axis is None else a.shape[axis]
    s = reduce_sum(a, axis=axis, keepdims=keepdims, tape=tape)
    return scale(s, 1.0 / n, tape=tape)


def relu(a: NdArray, tape: Tape | None = None) -> NdArray:
    out = NdArray(np.maximum(a.data, 0.0))
    return _record(tape, out, (a,), lambda g: (g * (a.data > 0.0),))


def gelu(a: NdArray, tape: Tape | None = None) -> NdArray:
    """Smooth gelu (tanh form); the derivative is exact for this form, so
    finite-difference checks are kink-free."""
    c = np.sqrt(2.0 / np.pi)
    x = a.data
    xx = x * x
    t = np.tanh(c * (x + 0.044715 * (xx * x)))
    out = NdArray(0.5 * x * (1.0 + t))

    def backward(g):
        dinner = c * (1.0 + 3 * 0.044715 * xx)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _record(tape, out, (a,), backward)


def softmax(x: NdArray, tape: Tape | None = None) -> NdArray:
    """Stable softmax along the last axis."""
    if not np.isfinite(x.data).all():
        raise NumericDomainError("softmax input contains NaN/Inf")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    out = NdArray(p)

    def backward(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return _record(tape, out, (x,), backward)


def masked_softmax(x: NdArray, mask: np.ndarray, tape: Tape | None = None) -> NdArray:
    """Softmax along the last axis restricted to positions where mask==1.

    Masked positions get exactly zero weight. A fully masked row yields a
    uniform distribution (such rows are themselves masked downstream).
    """
    neg = np.where(mask > 0, 0.0, -np.inf)
    shifted = x.data + neg
    m = shifted.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    # masked entries are -inf after the (finite) shift, so exp gives exact 0
    e = np.exp(shifted - m)
    z = e.sum(axis=-1, keepdims=True)
    p = np.where(z > 0, e / np.where(z > 0, z, 1.0), 1.0 / x.shape[-1])
    out = NdArray(p)

    def backward(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        gx = p * (g - dot)
        return (np.where(mask > 0, gx, 0.0),)

    return _record(tape, out, (x,), backward)


def clamped_log(a: NdArray, floor: float = LOG_FLOOR, tape: Tape | None = None) -> NdArray:
    clamped = np.maximum(a.data, floor)
    out = NdArray(np.log(clamped))
    return _record(tape, out, (a,),
                   lambda g: (np.where(a.data > floor, g / clamped, 0.0),))


def dropout(a: NdArray, rate: float, rng: np.random.Generator,
            tape: Tape | None = None) -> NdArray:
    """Inverted dropout; identity when rate == 0."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = NdArray(a.data * keep)
    return _record(tape, out, (a,), lambda g: (g * keep,))


def layer_norm(x: NdArray, gain: NdArray, bias: NdArray, eps: float = 1e-6,
               tape: Tape | None = None) -> NdArray:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = NdArray(xhat * gain.data + bias.data)

    def backward(g):
        n = x.shape[-1]
        dxhat = g * gain.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        axes = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _record(tape, out, (x, gain, bias), backward)


def cross_entropy(p: NdArray, y_onehot: NdArray, tape: Tape | None = None) -> NdArray:
    """-y . log(p) with the log argument clamped at LOG_FLOOR."""
    y = y_onehot.data
    if p.shape != y.shape:
        raise DimensionError(f"cross_entropy shapes disagree: {p.shape} vs {y.shape}")
    hot = np.isclose(y, 1.0)
    if hot.sum() != 1 or not np.isclose(y.sum(), 1.0):
        raise LabelError("label vector is not one-hot")
    clamped = np.maximum(p.data, LOG_FLOOR)
    out = NdArray(-(y * np.log(clamped)).sum())

    def backward(g):
        gp = np.where(p.data > LOG_FLOOR, -g * y / clamped, 0.0)
        return (gp, None)

    return _record(tape, out, (p, y_onehot), backward)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def grad_check(f: Callable[[], float], params: Sequence[NdArray],
               eps: float = 1e-4,
               forward: Callable[[], float] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must run a full forward+backward pass (populating ``p.grad`` for
    every param) and return the scalar loss. It must be deterministic with
    dropout disabled. ``forward``, when given, is a cheaper loss-only
    evaluation used for the finite-difference probes.
    """
    loss0 = f()
    if not np.isfinite(loss0):
        raise NumericDomainError("grad_check: loss is not finite")
    probe = forward or f
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = probe()
            flat[i] = orig - eps
            down = probe()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    # restore analytic grads clobbered by any probe side effects
    for p, ga in zip(params, analytic):
        p.grad = ga
    return worst

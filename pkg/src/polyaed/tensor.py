"""Dense array values and the reverse-mode tape that records operations on them.

All arrays are numpy, row major, with axis order (time, frequency, channel)
for feature maps. Precision is carried by the array dtype: float64 ("high",
used by every oracle and gradient test) or float32 ("fast", used for training).
"""
from __future__ import annotations

import numpy as np

DTYPES = {"high": np.float64, "fast": np.float32}


class Tensor:
    """A value tracked by a tape. `grad` is populated by Tape.backward."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def grad_of(t: Tensor) -> np.ndarray:
    """Gradient of `t`, zero if it never appeared on the walked tape."""
    return t.grad if t.grad is not None else np.zeros_like(t.data)


class Tape:
    """Ordered record of executed operations, replayed in reverse by backward.

    A backward callback receives the output gradient and returns one gradient
    contribution per input (None when it has already accumulated in place or
    the input takes no gradient). Walking the same tape twice zeroes and
    re-accumulates everything, so repeated backward calls are bit-identical.

    A tape is single-threaded; distinct tapes over distinct tensors may run
    concurrently, and tensors are safe to hand between threads once no tape
    references them.
    """

    __slots__ = ("_records", "_tensors", "_seen")

    def __init__(self):
        self._records = []
        self._tensors = []
        self._seen = set()

    def watch(self, t: Tensor):
        if id(t) not in self._seen:
            self._seen.add(id(t))
            self._tensors.append(t)

    def record(self, out: Tensor, inputs, bwd):
        for t in inputs:
            self.watch(t)
        self.watch(out)
        self._records.append((out, inputs, bwd))

    def backward(self, loss: Tensor):
        if loss.data.shape != ():
            raise ValueError(
                f"backward needs a scalar loss, got shape {loss.data.shape}"
            )
        for t in self._tensors:
            t.grad = np.zeros_like(t.data)
        if loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        loss.grad = np.ones_like(loss.data)
        for out, inputs, bwd in reversed(self._records):
            gs = bwd(out.grad)
            for t, g in zip(inputs, gs):
                if g is not None:
                    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    if tape is not None:
        sa, sb = a.data.shape, b.data.shape
        tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))
    return out


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    if tape is not None:
        sa, sb = a.data.shape, b.data.shape
        tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))
    return out


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record(
            out,
            (a, b),
            lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        )
    return out


def cmul(tape, x: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or array (no gradient through c)."""
    c = np.asarray(c, dtype=x.dtype)
    out = Tensor(x.data * c)
    if tape is not None:
        tape.record(out, (x,), lambda g: (_unbroadcast(g * c, x.data.shape),))
    return out


def scale(tape, x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * x.dtype.type(c))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * x.dtype.type(c),))
    return out


def one_minus(tape, x: Tensor) -> Tensor:
    out = Tensor(x.dtype.type(1) - x.data)
    if tape is not None:
        tape.record(out, (x,), lambda g: (-g,))
    return out


def matmul(tape, a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul inner dims disagree: {a.data.shape[1]} vs {b.data.shape[0]}"
        )
    out = Tensor(a.data @ b.data)
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def concat(tape, parts, axis: int) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    if tape is not None:
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def bwd(g):
            return tuple(np.split(g, splits, axis=axis))

        tape.record(out, tuple(parts), bwd)
    return out


def slice_rows(tape, x: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(x.data[start:stop])
    if tape is not None:

        def bwd(g):
            x.grad[start:stop] += g
            return (None,)

        tape.record(out, (x,), bwd)
    return out


def reshape(tape, x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g.reshape(x.data.shape),))
    return out


def reduce_sum(tape, x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())
    if tape is not None:
        tape.record(out, (x,), lambda g: (np.broadcast_to(g, x.data.shape),))
    return out


def reduce_mean(tape, x: Tensor) -> Tensor:
    n = x.dtype.type(x.data.size)
    out = Tensor(x.data.mean())
    if tape is not None:
        tape.record(out, (x,), lambda g: (np.broadcast_to(g / n, x.data.shape),))
    return out


def mean_axes(tape, x: Tensor, axes) -> Tensor:
    """Mean over `axes`, keeping reduced dimensions with extent 1."""
    axes = tuple(axes)
    out = Tensor(x.data.mean(axis=axes, keepdims=True))
    if tape is not None:
        n = x.dtype.type(np.prod([x.data.shape[a] for a in axes]))
        tape.record(out, (x,), lambda g: (np.broadcast_to(g / n, x.data.shape),))
    return out


def max_axis(tape, x: Tensor, axis: int) -> Tensor:
    """Max over one axis (kept with extent 1); gradient routes to the first max."""
    if tape is None:
        return Tensor(x.data.max(axis=axis, keepdims=True))
    idx = x.data.argmax(axis=axis)
    out = Tensor(np.expand_dims(np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis), axis))

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), g, axis=axis)
        return (gx,)

    tape.record(out, (x,), bwd)
    return out


def gather_rows(tape, x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one column per row: out[t] = x[t, idx[t]]."""
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, idx])
    if tape is not None:

        def bwd(g):
            np.add.at(x.grad, (rows, idx), g)
            return (None,)

        tape.record(out, (x,), bwd)
    return out


def clamped_log(tape, x: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); flat (zero gradient) below the floor."""
    fl = x.dtype.type(floor)
    out = Tensor(np.log(np.maximum(x.data, fl)))
    if tape is not None:
        xd = x.data
        tape.record(out, (x,), lambda g: (np.where(xd > fl, g / xd, 0),))
    return out


def add_n(tape, tensors) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = add(tape, total, t)
    return total

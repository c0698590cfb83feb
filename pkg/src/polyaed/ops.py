"""Differentiable layers: convolution, pooling, normalization, activations, GRU.

Feature maps are (time, frequency, channel). Convolutions are stride 1 with
zero ("SAME") padding so spatial extents are preserved; the only pooling is a
1x2 max over frequency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor,
    add,
    concat,
    matmul,
    mul,
    one_minus,
    slice_rows,
)


def conv2d(tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3-d map (T,F,Cin) convolved with kernels (kh,kw,Cin,Cout) plus bias."""
    if x.data.ndim != 3:
        raise ValueError(f"conv2d input must be (T,F,C), got {x.data.ndim}-d")
    if w.data.ndim != 4:
        raise ValueError(f"conv2d kernel must be (kh,kw,Cin,Cout), got {w.data.ndim}-d")
    T, F, ci = x.data.shape
    kh, kw, wci, co = w.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    if wci != ci:
        raise ValueError(f"kernel expects {wci} input channels, input has {ci}")
    if b.data.shape != (co,):
        raise ValueError(f"bias must have shape ({co},), got {b.data.shape}")
    if kh == 1 and kw == 1:
        # pointwise: a plain per-cell channel map, no padding or gathering
        wmat = w.data[0, 0]
        flat = x.data.reshape(-1, ci)
        out = Tensor((flat @ wmat + b.data).reshape(T, F, co))
        if tape is not None:

            def bwd_pointwise(g):
                g2 = g.reshape(-1, co)
                gw = (flat.T @ g2).reshape(w.data.shape)
                return (g2 @ wmat.T).reshape(T, F, ci), gw, g2.sum(axis=0)

            tape.record(out, (x, w, b), bwd_pointwise)
        return out
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((T + 2 * ph, F + 2 * pw, ci), dtype=x.dtype)
    xp[ph : ph + T, pw : pw + F] = x.data
    cols = np.empty((T, F, kh, kw, ci), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j, :] = xp[i : i + T, j : j + F, :]
    cols2 = cols.reshape(T * F, kh * kw * ci)
    wmat = w.data.reshape(kh * kw * ci, co)
    out = Tensor((cols2 @ wmat + b.data).reshape(T, F, co))
    if tape is not None:

        def bwd(g):
            g2 = g.reshape(T * F, co)
            gw = (cols2.T @ g2).reshape(w.data.shape)
            gb = g2.sum(axis=0)
            gcols = (g2 @ wmat.T).reshape(T, F, kh, kw, ci)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[i : i + T, j : j + F, :] += gcols[:, :, i, j, :]
            return gxp[ph : ph + T, pw : pw + F, :], gw, gb

        tape.record(out, (x, w, b), bwd)
    return out


def pool_freq_max(tape, x: Tensor) -> Tensor:
    """Halve the frequency axis with a 1x2 max; ties go to the lower bin."""
    T, F, C = x.data.shape
    if F % 2 != 0:
        raise ValueError(f"frequency extent must be even to pool, got {F}")
    pairs = x.data.reshape(T, F // 2, 2, C)
    if tape is None:
        return Tensor(pairs.max(axis=2))
    idx = pairs.argmax(axis=2)
    out = Tensor(np.take_along_axis(pairs, idx[:, :, None, :], axis=2)[:, :, 0, :])

    def bwd(g):
        gp = np.zeros_like(pairs)
        np.put_along_axis(gp, idx[:, :, None, :], g[:, :, None, :], axis=2)
        return (gp.reshape(T, F, C),)

    tape.record(out, (x,), bwd)
    return out


class BatchNormState:
    """Running per-channel statistics, updated by exponential moving average."""

    def __init__(self, channels: int, dtype, momentum: float = 0.9, eps: float = 1e-5):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.updates = 0


def batch_norm(tape, x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: str) -> Tensor:
    """Normalize per channel (last axis) over every other axis, then affine."""
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown batch norm mode {mode!r}")
    axes = tuple(range(x.data.ndim - 1))
    eps = x.dtype.type(state.eps)
    if mode == "train":
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xc = x.data - mu
        xhat = xc * inv
        out = Tensor(gamma.data * xhat + beta.data)
        m = state.momentum
        state.mean = (m * state.mean + (1.0 - m) * mu).astype(state.mean.dtype)
        state.var = (m * state.var + (1.0 - m) * var).astype(state.var.dtype)
        state.updates += 1
        if tape is not None:
            n = x.dtype.type(np.prod([x.data.shape[a] for a in axes]))

            def bwd(g):
                dxhat = g * gamma.data
                dvar = (dxhat * xc).sum(axis=axes) * -0.5 * inv**3
                dmu = -(dxhat.sum(axis=axes)) * inv + dvar * (-2.0 / n) * xc.sum(axis=axes)
                gx = dxhat * inv + dvar * (2.0 / n) * xc + dmu / n
                return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

            tape.record(out, (x, gamma, beta), bwd)
        return out
    if state.updates == 0:
        raise ValueError("batch norm inference requested before any training statistics exist")
    inv = 1.0 / np.sqrt(state.var.astype(x.dtype) + eps)
    xhat = (x.data - state.mean.astype(x.dtype)) * inv
    out = Tensor(gamma.data * xhat + beta.data)
    if tape is not None:

        def bwd(g):
            return g * gamma.data * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        tape.record(out, (x, gamma, beta), bwd)
    return out


def relu(tape, x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    if tape is not None:
        mask = x.data > 0
        tape.record(out, (x,), lambda g: (g * mask,))
    return out


_UNIT_OPEN_BOUNDS = {}


def _unit_open_bounds(dtype):
    cached = _UNIT_OPEN_BOUNDS.get(dtype.char)
    if cached is None:
        one = dtype.type(1)
        cached = (np.nextafter(dtype.type(0), one), np.nextafter(one, dtype.type(0)))
        _UNIT_OPEN_BOUNDS[dtype.char] = cached
    return cached


def _sigmoid_values(xd: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(xd))  # one overflow-safe exp serves both branches
    y = np.where(xd >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    lo, hi = _unit_open_bounds(xd.dtype)
    return np.clip(y, lo, hi)


def sigmoid(tape, x: Tensor) -> Tensor:
    """Logistic function, clipped into the open interval (0, 1)."""
    out = Tensor(_sigmoid_values(x.data))
    if tape is not None:
        yd = out.data
        tape.record(out, (x,), lambda g: (g * yd * (1.0 - yd),))
    return out


def tanh(tape, x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data))
    if tape is not None:
        yd = out.data
        tape.record(out, (x,), lambda g: (g * (1.0 - yd * yd),))
    return out


def softmax_last(tape, x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=-1, keepdims=True))
    if tape is not None:
        yd = out.data

        def bwd(g):
            return (yd * (g - (g * yd).sum(axis=-1, keepdims=True)),)

        tape.record(out, (x,), bwd)
    return out


def dropout(tape, x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; rate 0 is the identity and records nothing."""
    if rate <= 0.0:
        return x
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.data.shape) >= rate).astype(x.dtype)
    factor = keep / x.dtype.type(1.0 - rate)
    out = Tensor(x.data * factor)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * factor,))
    return out


def dense(tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-row affine map: (T,D) @ (D,K) + (K,)."""
    return add(tape, matmul(tape, x, w), b)


@dataclass
class GruDirection:
    """One direction's parameters; update/reset/candidate gates."""

    wz: Tensor
    wr: Tensor
    wh: Tensor
    uz: Tensor
    ur: Tensor
    uh: Tensor
    bz: Tensor
    br: Tensor
    bh: Tensor


@dataclass
class GruParams:
    fw: GruDirection
    bw: GruDirection


def _gru_pass_raw(xd: np.ndarray, p: GruDirection, hidden: int, reverse: bool) -> np.ndarray:
    """Untaped recurrence; per-element arithmetic mirrors the taped path
    exactly (the z/r gates share one fused matrix product)."""
    steps = xd.shape[0]
    wzr = np.concatenate([p.wz.data, p.wr.data], axis=1)
    uzr = np.concatenate([p.uz.data, p.ur.data], axis=1)
    bzr = np.concatenate([p.bz.data, p.br.data])
    xzr, xh = xd @ wzr, xd @ p.wh.data
    uh, bh = p.uh.data, p.bh.data
    h = np.zeros((1, hidden), dtype=xd.dtype)
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    outputs = [None] * steps
    for t in order:
        zr = _sigmoid_values((xzr[t : t + 1] + h @ uzr) + bzr)
        z, r = zr[:, :hidden], zr[:, hidden:]
        c = np.tanh((xh[t : t + 1] + (r * h) @ uh) + bh)
        h = (1.0 - z) * h + z * c
        outputs[t] = h
    return np.concatenate(outputs, axis=0)


def _gru_pass(tape, x: Tensor, p: GruDirection, hidden: int, reverse: bool) -> Tensor:
    if tape is None:
        return Tensor(_gru_pass_raw(x.data, p, hidden, reverse))
    steps = x.data.shape[0]
    xz = matmul(tape, x, p.wz)
    xr = matmul(tape, x, p.wr)
    xh = matmul(tape, x, p.wh)
    h = Tensor(np.zeros((1, hidden), dtype=x.dtype))
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    outputs = [None] * steps
    for t in order:
        z = sigmoid(tape, add(tape, add(tape, slice_rows(tape, xz, t, t + 1), matmul(tape, h, p.uz)), p.bz))
        r = sigmoid(tape, add(tape, add(tape, slice_rows(tape, xr, t, t + 1), matmul(tape, h, p.ur)), p.br))
        c = tanh(tape, add(tape, add(tape, slice_rows(tape, xh, t, t + 1), matmul(tape, mul(tape, r, h), p.uh)), p.bh))
        h = add(tape, mul(tape, one_minus(tape, z), h), mul(tape, z, c))
        outputs[t] = h
    return concat(tape, outputs, axis=0)


def gru_bidirectional(tape, x: Tensor, params: GruParams, hidden: int) -> Tensor:
    """Run both directions over (T,D) and concatenate states per frame to (T,2H)."""
    if x.data.ndim != 2:
        raise ValueError(f"recurrent input must be (T,D), got {x.data.ndim}-d")
    din = x.data.shape[1]
    if params.fw.wz.data.shape != (din, hidden):
        raise ValueError(
            f"input weights expect shape ({din},{hidden}), got {params.fw.wz.data.shape}"
        )
    fw = _gru_pass(tape, x, params.fw, hidden, reverse=False)
    bw = _gru_pass(tape, x, params.bw, hidden, reverse=True)
    return concat(tape, [fw, bw], axis=1)

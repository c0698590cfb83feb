"""Independent naive-loop oracles used to check the vectorized implementations.

Everything here is deliberately written with plain Python loops and scalar
math so it shares no code path with the package under test.
"""
import math

import numpy as np


def conv2d_naive(x, w, b):
    """Direct SAME-padded stride-1 convolution, one multiply at a time."""
    T, F, ci = x.shape
    kh, kw, _, co = w.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((T, F, co), dtype=x.dtype)
    for t in range(T):
        for f in range(F):
            for o in range(co):
                acc = 0.0
                for i in range(kh):
                    for j in range(kw):
                        ti, fj = t + i - ph, f + j - pw
                        if 0 <= ti < T and 0 <= fj < F:
                            for c in range(ci):
                                acc += x[ti, fj, c] * w[i, j, c, o]
                out[t, f, o] = acc + b[o]
    return out


def pool_freq_max_naive(x):
    T, F, C = x.shape
    out = np.zeros((T, F // 2, C), dtype=x.dtype)
    for t in range(T):
        for f in range(F // 2):
            for c in range(C):
                out[t, f, c] = max(x[t, 2 * f, c], x[t, 2 * f + 1, c])
    return out


def batch_norm_naive(x, gamma, beta, eps=1e-5):
    """Per-channel standardization over all leading axes, then affine."""
    C = x.shape[-1]
    flat = x.reshape(-1, C)
    out = np.zeros_like(flat)
    n = flat.shape[0]
    for c in range(C):
        mu = sum(flat[i, c] for i in range(n)) / n
        var = sum((flat[i, c] - mu) ** 2 for i in range(n)) / n
        for i in range(n):
            out[i, c] = gamma[c] * (flat[i, c] - mu) / math.sqrt(var + eps) + beta[c]
    return out.reshape(x.shape)


def softmax_rows_naive(x):
    """Shifted exp/sum softmax, row by row."""
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        row = x[i]
        m = max(float(v) for v in row)
        exps = [math.exp(float(v) - m) for v in row]
        s = sum(exps)
        for j in range(x.shape[1]):
            out[i, j] = exps[j] / s
    return out


def _sig(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def gru_bidirectional_naive(x, p, hidden):
    """Step-by-step scalar GRU recurrence in both directions.

    `p` maps {fw,bw} -> dict with wz/wr/wh (D,H), uz/ur/uh (H,H), bz/br/bh (H,).
    State update: h = (1-z)*h_prev + z*tanh(x@wh + (r*h_prev)@uh + bh).
    """
    T, D = x.shape

    def run(direction, order):
        wz, wr, wh = direction["wz"], direction["wr"], direction["wh"]
        uz, ur, uh = direction["uz"], direction["ur"], direction["uh"]
        bz, br, bh = direction["bz"], direction["br"], direction["bh"]
        h = [0.0] * hidden
        out = [[0.0] * hidden for _ in range(T)]
        for t in order:
            z = [0.0] * hidden
            r = [0.0] * hidden
            c = [0.0] * hidden
            for k in range(hidden):
                az = sum(x[t, d] * wz[d, k] for d in range(D))
                az += sum(h[j] * uz[j, k] for j in range(hidden)) + bz[k]
                z[k] = _sig(az)
                ar = sum(x[t, d] * wr[d, k] for d in range(D))
                ar += sum(h[j] * ur[j, k] for j in range(hidden)) + br[k]
                r[k] = _sig(ar)
            for k in range(hidden):
                ac = sum(x[t, d] * wh[d, k] for d in range(D))
                ac += sum(r[j] * h[j] * uh[j, k] for j in range(hidden)) + bh[k]
                c[k] = math.tanh(ac)
            h = [(1.0 - z[k]) * h[k] + z[k] * c[k] for k in range(hidden)]
            out[t] = h
        return out

    fw = run(p["fw"], range(T))
    bw = run(p["bw"], range(T - 1, -1, -1))
    return np.array([fw[t] + bw[t] for t in range(T)])


def adam_naive(theta0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference bias-corrected update trajectory for a flat parameter vector."""
    theta = [float(v) for v in theta0]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    history = []
    for step, g in enumerate(grads, start=1):
        for i in range(len(theta)):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            mhat = m[i] / (1.0 - beta1**step)
            vhat = v[i] / (1.0 - beta2**step)
            theta[i] -= lr * mhat / (math.sqrt(vhat) + eps)
        history.append(list(theta))
    return history


def multitask_loss_naive(outputs, targets):
    """Scalar double loop: mean over tasks of per-frame -log p[target]."""
    total = 0.0
    for n, out in enumerate(outputs):
        task = 0.0
        for t in range(out.shape[0]):
            task -= math.log(max(float(out[t, targets[t, n]]), 1e-12))
        total += task / out.shape[0]
    return total / len(outputs)


def multilabel_loss_naive(p, y):
    """Scalar double loop binary cross-entropy."""
    total = 0.0
    T, Y = y.shape
    for t in range(T):
        for c in range(Y):
            prob = float(p[t, c])
            total -= y[t, c] * math.log(max(prob, 1e-12))
            total -= (1 - y[t, c]) * math.log(max(1.0 - prob, 1e-12))
    return total / (T * Y)


def prf_counts_naive(pred, truth):
    """Per-class TP/FP/FN by walking every frame and class."""
    T, Y = truth.shape
    tp = [0] * Y
    fp = [0] * Y
    fn = [0] * Y
    for t in range(T):
        for y in range(Y):
            if pred[t, y] and truth[t, y]:
                tp[y] += 1
            elif pred[t, y] and not truth[t, y]:
                fp[y] += 1
            elif not pred[t, y] and truth[t, y]:
                fn[y] += 1
    return tp, fp, fn


def f1_from_counts(tp, fp, fn):
    p = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    r = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def by_degree_naive(pred, truth, max_degree):
    """Micro F1 per ground-truth polyphony degree, brute-force pooled."""
    T, Y = truth.shape
    counts = {d: [0, 0, 0, 0] for d in range(1, max_degree + 1)}  # frames, tp, fp, fn
    for t in range(T):
        degree = 0
        for y in range(Y):
            degree += truth[t, y]
        if degree < 1 or degree > max_degree:
            continue
        row = counts[int(degree)]
        row[0] += 1
        for y in range(Y):
            if pred[t, y] and truth[t, y]:
                row[1] += 1
            elif pred[t, y] and not truth[t, y]:
                row[2] += 1
            elif not pred[t, y] and truth[t, y]:
                row[3] += 1
    return {
        d: (row[0], f1_from_counts(row[1], row[2], row[3]))
        for d, row in counts.items()
    }


def max_concurrency_naive(intervals):
    """Sweep-line maximum number of simultaneously open [onset, offset) intervals."""
    events = []
    for onset, offset in intervals:
        events.append((onset, 1))
        events.append((offset, -1))
    events.sort(key=lambda e: (e[0], e[1]))
    best = cur = 0
    for _, delta in events:
        cur += delta
        best = max(best, cur)
    return best

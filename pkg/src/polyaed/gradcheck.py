"""Central finite-difference verification of taped gradients."""
from __future__ import annotations

import numpy as np

from .tensor import Tape


def finite_diff_check(f, params, epsilon: float = 1e-4) -> float:
    """Compare analytic gradients of a scalar loss against central differences.

    `f(tape)` must rebuild the loss from the current parameter values; it is
    called with a fresh tape once for the analytic pass and with tape=None for
    every probe evaluation. Returns the worst relative error over all elements
    of all `params`: |analytic - fd| / max(1, |fd|).

    The loss must be deterministic (dropout disabled, batch norm mode fixed);
    two probe evaluations are compared up front and any mismatch is an error.
    """
    v1 = float(f(None).data)
    v2 = float(f(None).data)
    if v1 != v2:
        raise ValueError(
            f"loss function is not deterministic: {v1!r} vs {v2!r} on repeated evaluation"
        )
    tape = Tape()
    loss = f(tape)
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    tape.backward(loss)
    analytic = [
        np.array(p.grad, copy=True) if p.grad is not None else np.zeros_like(p.data)
        for p in params
    ]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + epsilon
            fp = float(f(None).data)
            flat[i] = saved - epsilon
            fm = float(f(None).data)
            flat[i] = saved
            fd = (fp - fm) / (2.0 * epsilon)
            err = abs(float(gflat[i]) - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    return worst

"""Cross-entropy losses, Adam, and the deterministic epoch loop.

The multi-task objective averages per-task categorical cross-entropy over
frames and tasks; the baseline uses per-category binary cross-entropy. Log
probabilities are clamped at 1e-12 so a saturated output can never produce a
non-finite loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import datasets, evaluation
from .labelspace import encode_targets
from .model import Model, forward_baseline, forward_multitask
from .tensor import (
    Tape,
    Tensor,
    add,
    add_n,
    clamped_log,
    cmul,
    gather_rows,
    grad_of,
    one_minus,
    reduce_mean,
    reduce_sum,
    scale,
)

LOG_HEADER = "epoch,step,train_loss,val_microF1"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 10
    seed: int = 42
    max_steps: int = 0  # 0 means run all epochs to completion

    def __post_init__(self):
        if self.lr < 0 or self.batch < 1 or self.epochs < 1:
            raise ValueError("learning rate must be >= 0, batch and epochs >= 1")


def multitask_loss(tape, outputs, targets: np.ndarray) -> Tensor:
    """Mean over tasks of the mean per-frame negative log target probability."""
    targets = np.asarray(targets)
    if targets.ndim != 2 or targets.shape[1] != len(outputs):
        raise ValueError(f"targets must be (T,{len(outputs)}), got {targets.shape}")
    terms = []
    for n, out in enumerate(outputs):
        frames, k = out.data.shape
        col = targets[:, n]
        if col.min() < 0 or col.max() >= k:
            bad = col[(col < 0) | (col >= k)][0]
            raise ValueError(f"target class {bad} out of range [0, {k}) for task {n + 1}")
        picked = gather_rows(tape, out, col)
        terms.append(scale(tape, reduce_sum(tape, clamped_log(tape, picked)), -1.0 / frames))
    return scale(tape, add_n(tape, terms), 1.0 / len(outputs))


def multilabel_loss(tape, output, targets: np.ndarray) -> Tensor:
    """Binary cross-entropy averaged over frames and categories."""
    targets = np.asarray(targets)
    if targets.shape != output.data.shape:
        raise ValueError(f"targets {targets.shape} do not match outputs {output.data.shape}")
    if not np.isin(targets, (0, 1)).all():
        raise ValueError("targets must be binary")
    y = targets.astype(output.dtype)
    hit = cmul(tape, clamped_log(tape, output), y)
    miss = cmul(tape, clamped_log(tape, one_minus(tape, output)), 1.0 - y)
    return scale(tape, reduce_mean(tape, add(tape, hit, miss)), -1.0)


class AdamState:
    """Per-parameter first/second moment buffers plus the shared step counter."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0


def adam_step(params, state: AdamState, lr: float):
    """One bias-corrected update; parameters are modified in place."""
    if len(params) != len(state.m):
        raise ValueError(f"optimizer state covers {len(state.m)} parameters, got {len(params)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correct1 = 1.0 - b1**state.step
    correct2 = 1.0 - b2**state.step
    for p, m, v in zip(params, state.m, state.v):
        g = grad_of(p)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)


def _segment_loss(tape, model: Model, values, labels):
    if model.config.kind == "multitask":
        outs = forward_multitask(tape, values, model, "train")
        return multitask_loss(tape, outs, encode_targets(labels, model.config.decomposition))
    out = forward_baseline(tape, values, model, "train")
    return multilabel_loss(tape, out, labels)


def _snapshot(model: Model):
    params = {k: t.data.copy() for k, t in model.params.items()}
    bn = {k: (s.mean.copy(), s.var.copy(), s.updates) for k, s in model.bn.items()}
    return params, bn


def _restore(model: Model, snap):
    params, bn = snap
    for k, t in model.params.items():
        t.data = params[k].copy()
    for k, s in model.bn.items():
        s.mean, s.var, s.updates = bn[k][0].copy(), bn[k][1].copy(), bn[k][2]


def validation_micro_f1(model: Model, recordings, segment_frames: int) -> float:
    """Micro F1 of inference-mode predictions pooled over whole recordings."""
    tp = fp = fn = 0
    for rec in recordings:
        pred, truth = evaluation.predict_recording(model, rec, segment_frames)
        tp += int(np.logical_and(pred == 1, truth == 1).sum())
        fp += int(np.logical_and(pred == 1, truth == 0).sum())
        fn += int(np.logical_and(pred == 0, truth == 1).sum())
    return evaluation.f1_score(tp, fp, fn)


def train_run(model: Model, corpus, cfg: TrainConfig):
    """Train over dense segments, checkpointing the best-validation epoch.

    Returns the per-epoch log lines (header included). The model is left
    holding the best epoch's parameters and batch-norm statistics. Fully
    deterministic under a fixed seed: shuffle order, dropout streams, and
    optimizer state all derive from it.
    """
    train_recs = corpus.splits.get("train", [])
    val_recs = corpus.splits.get("val", [])
    if not train_recs:
        raise ValueError("training split is empty")
    if not val_recs:
        raise ValueError("validation split is empty")
    seg_frames = corpus.feat.segment_frames
    index = datasets.dense_indices(train_recs, seg_frames)
    if not index:
        raise ValueError(f"no recording is long enough for a {seg_frames}-frame segment")
    model.stats = corpus.stats
    model.dropout_rng = np.random.default_rng([cfg.seed, 0xD0])
    params = model.parameters()
    adam = AdamState(params)
    best_f1 = -1.0
    best_snap = None
    lines = [LOG_HEADER]
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 0xE9, epoch]).permutation(len(index))
        batch_losses = []
        for start in range(0, len(order), cfg.batch):
            if cfg.max_steps and step >= cfg.max_steps:
                break
            tape = Tape()
            losses = []
            for i in order[start : start + cfg.batch]:
                rec, offset = index[i]
                values = rec.values[offset : offset + seg_frames]
                labels = rec.labels[offset : offset + seg_frames]
                losses.append(_segment_loss(tape, model, values, labels))
            total = scale(tape, add_n(tape, losses), 1.0 / len(losses))
            tape.backward(total)
            adam_step(params, adam, cfg.lr)
            batch_losses.append(float(total.data))
            step += 1
        mean_loss = float(np.mean(batch_losses)) if batch_losses else float("nan")
        val_f1 = validation_micro_f1(model, val_recs, seg_frames)
        lines.append(f"{epoch},{step},{mean_loss:.6f},{val_f1:.6f}")
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_snap = _snapshot(model)
        if cfg.max_steps and step >= cfg.max_steps:
            break
    _restore(model, best_snap)
    return lines

"""Frame-based precision, recall, and F1: per class, macro, micro, and per
polyphony degree.

F1 is the harmonic mean of precision TP/(TP+FP) and recall TP/(TP+FN),
pooled per class over frames. "Average" means the macro score (unweighted
mean of per-class F1) and "Overall" the micro score (pooled counts); the CSV
reports state this convention in their header so the reading is explicit.
0/0 ratios score 0, so every report entry is finite.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .features import FeatureConfig, Spectrogram, segment_stream
from .model import Model, predict_segment


def f1_score(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0


@dataclass
class EvalReport:
    categories: tuple[str, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    by_degree: dict[int, tuple[int, float]] | None = None


def _check_binary_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    if not np.isin(pred, (0, 1)).all() or not np.isin(truth, (0, 1)).all():
        raise ValueError("activity matrices must be binary")
    return pred.astype(bool), truth.astype(bool)


def frame_prf(pred, truth, categories=None) -> EvalReport:
    """Per-class counts over frames plus macro and micro (pooled) summaries."""
    pred, truth = _check_binary_pair(pred, truth)
    if categories is None:
        categories = tuple(f"class{i}" for i in range(truth.shape[1]))
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    per_p = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    per_r = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    per_f1 = np.where(per_p + per_r > 0, 2.0 * per_p * per_r / np.maximum(per_p + per_r, 1e-300), 0.0)
    pooled_tp, pooled_fp, pooled_fn = int(tp.sum()), int(fp.sum()), int(fn.sum())
    micro_p = pooled_tp / (pooled_tp + pooled_fp) if pooled_tp + pooled_fp else 0.0
    micro_r = pooled_tp / (pooled_tp + pooled_fn) if pooled_tp + pooled_fn else 0.0
    return EvalReport(
        categories=tuple(categories),
        tp=tp,
        fp=fp,
        fn=fn,
        precision=per_p,
        recall=per_r,
        f1=per_f1,
        macro_f1=float(per_f1.mean()),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=f1_score(pooled_tp, pooled_fp, pooled_fn),
    )


def degree_counts(pred, truth):
    """Pooled TP/FP/FN per ground-truth polyphony degree, degree 0 included."""
    pred, truth = _check_binary_pair(pred, truth)
    degrees = truth.sum(axis=1)
    out = {}
    for degree in range(int(degrees.max(initial=0)) + 1):
        rows = degrees == degree
        out[degree] = (
            int(rows.sum()),
            int((pred[rows] & truth[rows]).sum()),
            int((pred[rows] & ~truth[rows]).sum()),
            int((~pred[rows] & truth[rows]).sum()),
        )
    return out


def f1_by_degree(pred, truth, max_degree: int = 6) -> dict[int, tuple[int, float]]:
    """Micro F1 within each polyphony degree 1..max; degree-0 frames excluded."""
    counts = degree_counts(pred, truth)
    top = max(max_degree, max(counts))
    result = {}
    for degree in range(1, top + 1):
        frames, tp, fp, fn = counts.get(degree, (0, 0, 0, 0))
        result[degree] = (frames, f1_score(tp, fp, fn))
    return result


def predict_recording(model: Model, rec, segment_frames: int):
    """Tile a recording with non-overlapping windows, predict, drop padding."""
    feat = FeatureConfig(segment_frames=segment_frames, mel_bins=rec.values.shape[1])
    spec = Spectrogram(values=rec.values, hop_s=feat.hop_s, frame_s=feat.frame_s, sample_rate=feat.sample_rate)
    rows = []
    for segment in segment_stream(spec, "test", feat):
        pred = predict_segment(model, segment.values)
        real = segment_frames - segment.pad_len
        rows.append(pred[:real])
    pred = np.vstack(rows)
    if pred.shape[0] != rec.labels.shape[0]:
        raise ValueError(
            f"prediction covers {pred.shape[0]} frames, labels have {rec.labels.shape[0]}"
        )
    return pred, rec.labels


def evaluate_model(model: Model, recordings, categories, segment_frames: int = 128,
                   max_degree: int = 6) -> EvalReport:
    """Score a model over whole recordings (padded frames excluded)."""
    if not recordings:
        raise ValueError("nothing to evaluate: empty recording list")
    preds, truths = [], []
    for rec in recordings:
        p, t = predict_recording(model, rec, segment_frames)
        preds.append(p)
        truths.append(t)
    pred = np.vstack(preds)
    truth = np.vstack(truths)
    report = frame_prf(pred, truth, categories)
    report.by_degree = f1_by_degree(pred, truth, max_degree)
    return report


def write_reports(report: EvalReport, out_dir) -> tuple[str, str]:
    """Write per_class.csv and by_degree.csv (4 decimal places, dot decimal)."""
    os.makedirs(out_dir, exist_ok=True)
    per_class = os.path.join(out_dir, "per_class.csv")
    with open(per_class, "w", encoding="utf-8") as fh:
        fh.write("# Average = macro (unweighted mean of per-class F1); Overall = micro (pooled counts)\n")
        fh.write("name,TP,FP,FN,P,R,F1\n")
        for i, name in enumerate(report.categories):
            fh.write(
                f"{name},{report.tp[i]},{report.fp[i]},{report.fn[i]},"
                f"{report.precision[i]:.4f},{report.recall[i]:.4f},{report.f1[i]:.4f}\n"
            )
        fh.write(f"Average (macro),,,,,,{report.macro_f1:.4f}\n")
        fh.write(
            f"Overall (micro),{int(report.tp.sum())},{int(report.fp.sum())},{int(report.fn.sum())},"
            f"{report.micro_precision:.4f},{report.micro_recall:.4f},{report.micro_f1:.4f}\n"
        )
    by_degree = os.path.join(out_dir, "by_degree.csv")
    with open(by_degree, "w", encoding="utf-8") as fh:
        fh.write("degree,frames,F1\n")
        for degree, (frames, score) in sorted((report.by_degree or {}).items()):
            fh.write(f"{degree},{frames},{score:.4f}\n")
    return per_class, by_degree

"""Figure rendering for the report paths: evaluation summaries, attention
mask dumps, and training curves, written next to their delimited outputs."""
from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be fixed first)


def render_eval_figures(report, out_dir) -> list[str]:
    """Per-class F1 bars and the F1-vs-polyphony-degree curve."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.3 * len(report.categories) + 1)))
    pos = np.arange(len(report.categories))
    ax.barh(pos, report.f1, color="#4878a8")
    ax.axvline(report.micro_f1, color="#b04030", linestyle="--", linewidth=1,
               label=f"overall (micro) = {report.micro_f1:.3f}")
    ax.set_yticks(pos, report.categories)
    ax.invert_yaxis()
    ax.set_xlabel("F1")
    ax.set_xlim(0, 1)
    ax.set_title("Frame-based F1 per category")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "per_class_f1.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    if report.by_degree:
        degrees = sorted(report.by_degree)
        scores = [report.by_degree[d][1] for d in degrees]
        frames = [report.by_degree[d][0] for d in degrees]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.bar(degrees, scores, color="#4878a8")
        for d, s, n in zip(degrees, scores, frames):
            ax.text(d, s + 0.02, str(n), ha="center", fontsize=7, color="#555555")
        ax.set_xlabel("overlapping degree (frame count above bar)")
        ax.set_ylabel("micro F1")
        ax.set_ylim(0, 1.05)
        ax.set_title("F1 by polyphony degree")
        fig.tight_layout()
        path = os.path.join(out_dir, "f1_by_degree.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def render_mask_figures(tf_mask: np.ndarray, channel_mask: np.ndarray, out_dir,
                        tf_name: str, channel_name: str) -> list[str]:
    """Heat map of the time-frequency mask and bars for the channel mask."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    im = ax.imshow(tf_mask.T, origin="lower", aspect="auto", cmap="magma", vmin=0.0, vmax=1.0)
    ax.set_xlabel("frame")
    ax.set_ylabel("frequency bin")
    ax.set_title("time-frequency attention mask")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    path = os.path.join(out_dir, tf_name)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 2.6))
    ax.bar(np.arange(channel_mask.size), channel_mask, color="#4878a8", width=1.0)
    ax.set_xlabel("channel")
    ax.set_ylabel("gate")
    ax.set_ylim(0, 1)
    ax.set_title("channel attention mask")
    fig.tight_layout()
    path = os.path.join(out_dir, channel_name)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def render_training_curve(log_lines, out_dir) -> str:
    """Loss and validation F1 per epoch from the training log lines."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [line.split(",") for line in log_lines[1:]]
    epochs = [int(r[0]) for r in rows]
    losses = [float(r[2]) for r in rows]
    f1s = [float(r[3]) for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.plot(epochs, losses, marker="o", color="#b04030", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    twin = ax.twinx()
    twin.plot(epochs, f1s, marker="s", color="#4878a8", label="val micro F1")
    twin.set_ylabel("micro F1")
    twin.set_ylim(0, 1.05)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "train_curve.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_pgm(path, values: np.ndarray):
    """8-bit binary PGM of values in [0, 1], scaled to 0..255."""
    grid = np.atleast_2d(np.asarray(values))
    height, width = grid.shape
    data = np.clip(np.round(grid * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())

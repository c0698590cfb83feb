"""Command line front end: corpus generation, training, evaluation,
prediction, and attention-mask dumps.

Commands exit 0 on success, 1 on usage/configuration errors, and 2 on
data or model errors. Every artifact directory receives a `config.txt`
echo of the fully resolved configuration so runs can be replayed exactly.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import datasets, evaluation, training
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .features import FeatureConfig, log_mel, read_wav, segment_stream, standardize
from .labelspace import CategorySet
from .model import build_model, forward_multitask, predict_segment

LOG_NAME = "train_log.csv"
CHECKPOINT_NAME = "model.ckpt"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _echo_config(out_dir, cfg: RunConfig):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfgmod.resolved_text(cfg))


def _load_cfg(args) -> RunConfig:
    return cfgmod.load_run_config(args.config, overrides={"seed": args.seed})


def cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    spec = cfgmod.corpus_spec(cfg)
    names = datasets.generate_corpus(spec, args.out)
    _echo_config(args.out, cfg)
    total = sum(len(v) for v in names.values())
    print(f"generated {total} recordings under {args.out} "
          f"(train={len(names['train'])}, val={len(names['val'])}, test={len(names['test'])})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    corpus = datasets.prepare_corpus(args.corpus, cfgmod.feature_config(cfg))
    categories = corpus.categories.names
    model_cfg = cfgmod.model_config(cfg, categories)
    model = build_model(model_cfg, seed=cfg.seed)
    lines = training.train_run(model, corpus, cfgmod.train_config(cfg))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, LOG_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    extra = {
        "segment_frames": str(cfg.segment_frames),
        "seed": str(cfg.seed),
        "lr": repr(cfg.lr),
        "batch": str(cfg.batch),
        "epochs": str(cfg.epochs),
        "max_steps": str(cfg.max_steps),
    }
    save_checkpoint(os.path.join(args.out, CHECKPOINT_NAME), model, extra)
    _echo_config(args.out, cfg)
    from .figures import render_training_curve

    render_training_curve(lines, args.out)
    final_f1 = lines[-1].split(",")[-1]
    print(f"trained {cfg.model} model; best validation micro F1 = {final_f1}")
    print(f"checkpoint: {os.path.join(args.out, CHECKPOINT_NAME)}")
    return 0


def _load_model(path, args=None):
    """Load a checkpoint; model structure always comes from the checkpoint,
    but an explicit config file or environment variable may override the
    decision threshold."""
    if not os.path.exists(path):
        raise UsageError(f"checkpoint {path} does not exist")
    model, ckpt_cfg = load_checkpoint(path)
    if args is not None:
        explicit = args.config is not None or (cfgmod.ENV_PREFIX + "THRESHOLD") in os.environ
        if explicit:
            import dataclasses

            cfg = _load_cfg(args)
            model.config = dataclasses.replace(model.config, threshold=cfg.threshold)
    return model, ckpt_cfg


def cmd_eval(args) -> int:
    model, ckpt_cfg = _load_model(args.checkpoint, args)
    if model.stats is None:
        raise ValueError("checkpoint carries no feature statistics; was it trained?")
    segment_frames = int(ckpt_cfg.get("segment_frames", 128))
    feat = FeatureConfig(mel_bins=model.config.mel_bins, segment_frames=segment_frames)
    corpus = datasets.prepare_corpus(args.corpus, feat, stats=model.stats)
    if tuple(corpus.categories.names) != model.config.categories:
        raise ValueError(
            "corpus categories do not match the checkpoint: "
            f"{corpus.categories.names} vs {model.config.categories}"
        )
    recordings = corpus.splits.get(args.split, [])
    report = evaluation.evaluate_model(model, recordings, model.config.categories, segment_frames)
    per_class, by_degree = evaluation.write_reports(report, args.out)
    from .figures import render_eval_figures

    render_eval_figures(report, args.out)
    with open(os.path.join(args.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write("".join(f"{k} = {ckpt_cfg[k]}\n" for k in sorted(ckpt_cfg)))
    print(f"evaluated {len(recordings)} {args.split} recordings")
    print(f"macro F1 = {report.macro_f1:.4f}  micro F1 = {report.micro_f1:.4f}")
    print(f"reports: {per_class}, {by_degree}")
    return 0


def _segments_for_wav(model, ckpt_cfg, wav_path):
    waveform, rate = read_wav(wav_path)
    feat = FeatureConfig(
        mel_bins=model.config.mel_bins,
        segment_frames=int(ckpt_cfg.get("segment_frames", 128)),
    )
    spec = standardize(log_mel(waveform, rate, feat), model.stats)
    return segment_stream(spec, "test", feat), feat


def cmd_predict(args) -> int:
    model, ckpt_cfg = _load_model(args.checkpoint, args)
    if model.stats is None:
        raise ValueError("checkpoint carries no feature statistics; was it trained?")
    segments, feat = _segments_for_wav(model, ckpt_cfg, args.wav)
    rows = []
    for segment in segments:
        pred = predict_segment(model, segment.values)
        rows.append(pred[: feat.segment_frames - segment.pad_len])
    pred = np.vstack(rows)
    annotations = datasets.frames_to_annotations(
        pred, CategorySet(model.config.categories), hop_s=feat.hop_s, frame_s=feat.frame_s
    )
    datasets.write_annotations(args.out, annotations)
    print(f"wrote {len(annotations)} events to {args.out}")
    return 0


def cmd_attn_dump(args) -> int:
    model, ckpt_cfg = _load_model(args.checkpoint, args)
    if model.config.kind != "multitask":
        raise UsageError("attention dumps need a multitask checkpoint; the baseline has no masks")
    num_tasks = len(model.config.groups)
    levels = len(model.config.filters)
    if not 1 <= args.task <= num_tasks:
        raise UsageError(f"task id must be in 1..{num_tasks}, got {args.task}")
    if not 1 <= args.level <= levels:
        raise UsageError(f"level must be in 1..{levels}, got {args.level}")
    if model.stats is None:
        raise ValueError("checkpoint carries no feature statistics; was it trained?")
    segments, _ = _segments_for_wav(model, ckpt_cfg, args.wav)
    internals: dict = {}
    forward_multitask(None, segments[0].values, model, "infer", internals=internals)
    m_tf, m_c = internals["masks"][(args.task, args.level)]
    tf_mask = m_tf.data[:, :, 0]
    channel_mask = m_c.data[0, 0, :]
    os.makedirs(args.out, exist_ok=True)
    stem = f"task{args.task}_level{args.level}"
    tf_csv = os.path.join(args.out, f"tf_mask_{stem}.csv")
    with open(tf_csv, "w", encoding="utf-8") as fh:
        for row in tf_mask:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")
    ch_csv = os.path.join(args.out, f"channel_mask_{stem}.csv")
    with open(ch_csv, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"{v:.6f}" for v in channel_mask) + "\n")
    from .figures import render_mask_figures, write_pgm

    write_pgm(os.path.join(args.out, f"tf_mask_{stem}.pgm"), tf_mask)
    write_pgm(os.path.join(args.out, f"channel_mask_{stem}.pgm"), channel_mask)
    render_mask_figures(
        tf_mask, channel_mask, args.out, f"tf_mask_{stem}.png", f"channel_mask_{stem}.png"
    )
    with open(os.path.join(args.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write("".join(f"{k} = {ckpt_cfg[k]}\n" for k in sorted(ckpt_cfg)))
    print(f"dumped task {args.task} level {args.level} masks "
          f"({tf_mask.shape[0]}x{tf_mask.shape[1]} grid, {channel_mask.size} channels) to {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="polyaed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", required=True, help="output directory (or file for predict)")

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    common(p)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    common(p)
    p.add_argument("--corpus", required=True, help="corpus directory from gen")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="predict events for one WAV file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("attn-dump", help="dump one task's attention masks for a WAV file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--task", type=int, required=True, help="task id, 1-based")
    p.add_argument("--level", type=int, required=True, help="block level, 1-based")
    p.set_defaults(fn=cmd_attn_dump)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

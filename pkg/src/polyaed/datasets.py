"""Deterministic synthetic polyphonic corpus plus annotation ingestion.

Each category is rendered by its own parametric recipe (tone complex, swept
tone, chirp train, noise burst, AM noise, impulse train) so categories stay
separable in log-mel space. Event onsets are scheduled so the number of
simultaneously active events never exceeds the configured polyphony cap, and
everything (scheduling, synthesis, amplitudes) derives from one seeded
generator, so regeneration is byte-identical.

On disk a corpus is `<split>/<name>.wav` plus `<split>/<name>.txt` annotation
lines ("onset<TAB>offset<TAB>label", seconds with 3 decimals) and a
`corpus.meta` echo of the generating parameters.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import (
    SAMPLE_RATE,
    FeatureConfig,
    compute_feature_stats,
    log_mel,
    read_wav,
    standardize,
    write_wav,
)
from .labelspace import DEFAULT_CATEGORIES, CategorySet

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Annotation:
    onset: float
    offset: float
    category: str

    def __post_init__(self):
        if not (0.0 <= self.onset < self.offset):
            raise ValueError(
                f"annotation times must satisfy 0 <= onset < offset, got [{self.onset}, {self.offset})"
            )


# category -> (renderer name, renderer params, duration range in seconds)
RECIPES = {
    "alarms & sirens": ("sweep", dict(f_lo=600.0, f_hi=1200.0, rate_hz=0.5), (2.0, 5.0)),
    "baby crying": ("tone", dict(f0=450.0, harmonics=4, vibrato_hz=6.0, vibrato_depth=3.0), (1.5, 4.0)),
    "bird singing": ("chirps", dict(f_lo=2500.0, f_hi=4500.0, rate_hz=3.0), (1.0, 3.0)),
    "bus": ("tone", dict(f0=75.0, harmonics=8, noise=0.05), (3.0, 8.0)),
    "cat meowing": ("sweep", dict(f_lo=900.0, f_hi=400.0, rate_hz=0.0), (0.8, 2.0)),
    "crowd applause": ("noise", dict(f_lo=1500.0, f_hi=8000.0, crackle_hz=40.0), (2.0, 6.0)),
    "crowd cheering": ("noise", dict(f_lo=300.0, f_hi=3000.0, am_hz=3.0), (2.0, 6.0)),
    "dog barking": ("impulses", dict(rate_hz=4.0, f_lo=300.0, f_hi=1500.0, decay_s=0.12), (0.8, 2.5)),
    "footsteps": ("impulses", dict(rate_hz=2.0, f_lo=80.0, f_hi=400.0, decay_s=0.08), (2.0, 6.0)),
    "glass smash": ("burst", dict(f_lo=3000.0, f_hi=10000.0, decay_s=0.3), (0.4, 1.0)),
    "gun shot": ("burst", dict(f_lo=100.0, f_hi=8000.0, decay_s=0.15), (0.3, 0.8)),
    "horsewalk": ("impulses", dict(rate_hz=3.5, f_lo=100.0, f_hi=600.0, decay_s=0.09), (2.0, 6.0)),
    "mixer": ("tone", dict(f0=160.0, harmonics=6, am_hz=9.0), (3.0, 8.0)),
    "motorcycle": ("tone", dict(f0=110.0, harmonics=7, noise=0.1), (2.0, 6.0)),
    "rain": ("noise", dict(f_lo=500.0, f_hi=6000.0), (4.0, 10.0)),
    "thunder": ("burst", dict(f_lo=30.0, f_hi=300.0, decay_s=1.5), (1.5, 4.0)),
}


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 42
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    train_recordings: int = 60
    val_recordings: int = 20
    test_recordings: int = 20
    duration_s: float = 30.0
    events_per_recording: int = 12
    max_polyphony: int = 6

    def __post_init__(self):
        if not 1 <= self.max_polyphony <= 6:
            raise ValueError(f"max polyphony must be in [1, 6], got {self.max_polyphony}")
        if self.events_per_recording < 0:
            raise ValueError("events per recording must be >= 0")
        unknown = [c for c in self.categories if c not in RECIPES]
        if unknown:
            raise ValueError(f"no synthesis recipe for categories {unknown}")
        longest = max(RECIPES[c][2][1] for c in self.categories)
        if self.duration_s <= longest:
            raise ValueError(
                f"recording duration {self.duration_s}s must exceed the longest "
                f"event template ({longest}s)"
            )

    @property
    def split_counts(self):
        return {
            "train": self.train_recordings,
            "val": self.val_recordings,
            "test": self.test_recordings,
        }


def _envelope(n, sr, ramp_s=0.01):
    env = np.ones(n)
    ramp = min(int(ramp_s * sr), max(n // 4, 1))
    env[:ramp] = np.linspace(0.0, 1.0, ramp)
    env[-ramp:] = np.linspace(1.0, 0.0, ramp)
    return env


def _band_noise(rng, n, sr, f_lo, f_hi):
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sr)
    spectrum[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    band = np.fft.irfft(spectrum, n=n)
    peak = np.abs(band).max()
    return band / peak if peak > 0 else band


def _render_tone(rng, n, sr, f0, harmonics, vibrato_hz=0.0, vibrato_depth=0.0, am_hz=0.0, noise=0.0):
    t = np.arange(n) / sr
    phase = 2.0 * np.pi * f0 * t
    if vibrato_hz > 0:
        phase = phase + vibrato_depth * np.sin(2.0 * np.pi * vibrato_hz * t)
    sig = np.zeros(n)
    for h in range(1, harmonics + 1):
        sig += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    if am_hz > 0:
        sig *= 0.55 + 0.45 * np.sin(2.0 * np.pi * am_hz * t)
    if noise > 0:
        sig += noise * rng.standard_normal(n)
    return sig / np.abs(sig).max()


def _render_sweep(rng, n, sr, f_lo, f_hi, rate_hz):
    t = np.arange(n) / sr
    if rate_hz > 0:
        # triangle LFO between the two endpoint frequencies
        cycle = (t * rate_hz) % 1.0
        freq = f_lo + (f_hi - f_lo) * (1.0 - np.abs(2.0 * cycle - 1.0))
    else:
        freq = np.linspace(f_lo, f_hi, n)
    phase = 2.0 * np.pi * np.cumsum(freq) / sr
    return np.sin(phase + rng.uniform(0, 2 * np.pi))


def _render_chirps(rng, n, sr, f_lo, f_hi, rate_hz):
    period = int(sr / rate_hz)
    chirp_len = max(period // 2, 8)
    freq = np.linspace(f_lo, f_hi, chirp_len)
    one = np.sin(2.0 * np.pi * np.cumsum(freq) / sr) * _envelope(chirp_len, sr, 0.005)
    sig = np.zeros(n)
    for start in range(0, n, period):
        stop = min(start + chirp_len, n)
        sig[start:stop] += one[: stop - start]
    return sig


def _render_impulses(rng, n, sr, rate_hz, f_lo, f_hi, decay_s):
    period = int(sr / rate_hz)
    sig = np.zeros(n)
    click_len = min(int(3 * decay_s * sr), period, n)
    decay = np.exp(-np.arange(click_len) / (decay_s * sr))
    for start in range(0, n, period):
        stop = min(start + click_len, n)
        burst = _band_noise(rng, click_len, sr, f_lo, f_hi)
        sig[start:stop] += (burst * decay)[: stop - start]
    return sig


def _render_burst(rng, n, sr, f_lo, f_hi, decay_s):
    decay = np.exp(-np.arange(n) / (decay_s * sr))
    return _band_noise(rng, n, sr, f_lo, f_hi) * decay


def _render_noise(rng, n, sr, f_lo, f_hi, am_hz=0.0, crackle_hz=0.0):
    sig = _band_noise(rng, n, sr, f_lo, f_hi)
    t = np.arange(n) / sr
    if am_hz > 0:
        sig *= 0.55 + 0.45 * np.sin(2.0 * np.pi * am_hz * t)
    if crackle_hz > 0:
        # random telegraph gating between quiet and loud bursts
        gate = (rng.random(n) < crackle_hz / sr).astype(float).cumsum() % 2
        sig *= 0.4 + 0.6 * gate
    return sig


_RENDERERS = {
    "tone": _render_tone,
    "sweep": _render_sweep,
    "chirps": _render_chirps,
    "impulses": _render_impulses,
    "burst": _render_burst,
    "noise": _render_noise,
}


def render_event(rng, category: str, duration_s: float, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Synthesize one event instance of a category at its recipe's character."""
    kind, params, _ = RECIPES[category]
    n = int(round(duration_s * sr))
    wave = _RENDERERS[kind](rng, n, sr, **params)
    return wave * _envelope(n, sr)


def max_concurrency(annotations) -> int:
    """Largest number of simultaneously open [onset, offset) intervals."""
    events = []
    for a in annotations:
        events.append((a.onset, 1))
        events.append((a.offset, -1))
    events.sort(key=lambda e: (e[0], e[1]))
    best = cur = 0
    for _, delta in events:
        cur += delta
        best = max(best, cur)
    return best


def _fits(placed, candidate, cap):
    return max_concurrency(placed + [candidate]) <= cap


def _grid_place(placed, category, duration, spec):
    """First onset on a 50 ms grid where the event fits, None when none does."""
    onset = 0.0
    while onset <= spec.duration_s - duration + 1e-9:
        candidate = Annotation(round(onset, 3), round(onset + duration, 3), category)
        if _fits(placed, candidate, spec.max_polyphony):
            return candidate
        onset += 0.05
    return None


def _schedule_events(rng, spec: CorpusSpec):
    """Draw categories, durations, and onsets under the polyphony cap.

    Random placement is tried first; when the timeline is crowded, a
    deterministic grid scan finds a slot if one exists, falling back to the
    category's shortest duration before giving up.
    """
    placed: list[Annotation] = []
    for _ in range(spec.events_per_recording):
        category = spec.categories[int(rng.integers(len(spec.categories)))]
        lo, hi = RECIPES[category][2]
        duration = float(rng.uniform(lo, hi))
        chosen = None
        for _attempt in range(200):
            onset = round(float(rng.uniform(0.0, spec.duration_s - duration)), 3)
            candidate = Annotation(onset, round(onset + duration, 3), category)
            if _fits(placed, candidate, spec.max_polyphony):
                chosen = candidate
                break
        if chosen is None:
            chosen = _grid_place(placed, category, duration, spec)
        if chosen is None:
            chosen = _grid_place(placed, category, lo, spec)
        if chosen is None:
            raise ValueError(
                f"could not place {spec.events_per_recording} events in "
                f"{spec.duration_s}s without exceeding polyphony {spec.max_polyphony}"
            )
        placed.append(chosen)
    return sorted(placed, key=lambda a: (a.onset, a.offset, a.category))


def _mix_recording(rng, spec: CorpusSpec, annotations) -> np.ndarray:
    n = int(round(spec.duration_s * SAMPLE_RATE))
    mix = np.zeros(n)
    for a in annotations:
        event = render_event(rng, a.category, a.offset - a.onset)
        amp = float(rng.uniform(0.3, 1.0))
        start = int(round(a.onset * SAMPLE_RATE))
        stop = min(start + event.size, n)
        mix[start:stop] += amp * event[: stop - start]
    peak = np.abs(mix).max()
    if peak > 0:
        mix *= 0.9 / peak
    return mix


def write_annotations(path, annotations):
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotations:
            fh.write(f"{a.onset:.3f}\t{a.offset:.3f}\t{a.category}\n")


def load_annotations(path, categories: CategorySet):
    """Parse "onset offset label" lines; label may contain spaces."""
    annotations = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'onset offset label', got {line!r}")
            try:
                onset, offset = float(parts[0]), float(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: onset/offset are not numbers in {line!r}") from None
            label = parts[2].strip()
            if label not in categories.names:
                raise ValueError(f"{path}:{lineno}: unknown category {label!r}")
            try:
                annotations.append(Annotation(onset=onset, offset=offset, category=label))
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    return sorted(annotations, key=lambda a: (a.onset, a.offset, a.category))


def rasterize_labels(annotations, num_frames: int, categories: CategorySet,
                     hop_s: float = 0.02, frame_s: float = 0.04) -> np.ndarray:
    """Binary (T,Y) activity: a frame is active when its center falls in the event."""
    labels = np.zeros((num_frames, len(categories)), dtype=np.int64)
    centers = np.arange(num_frames) * hop_s + frame_s / 2.0
    tol = 1e-9  # absorb float noise at exact boundaries
    for a in annotations:
        col = categories.index(a.category)
        active = (centers >= a.onset - tol) & (centers < a.offset - tol)
        labels[active, col] = 1
    return labels


def frames_to_annotations(pred: np.ndarray, categories: CategorySet,
                          hop_s: float = 0.02, frame_s: float = 0.04):
    """Inverse of rasterize_labels: merge runs of active frames into events.

    A run k..m becomes [center(k) - hop/2, center(m) + hop/2), which the
    frame-center rule rasterizes back to exactly frames k..m.
    """
    pred = np.asarray(pred)
    annotations = []
    half = frame_s / 2.0
    for col, name in enumerate(categories.names):
        active = np.flatnonzero(pred[:, col])
        if active.size == 0:
            continue
        breaks = np.flatnonzero(np.diff(active) > 1)
        starts = np.concatenate([[0], breaks + 1])
        stops = np.concatenate([breaks, [active.size - 1]])
        for s, e in zip(starts, stops):
            onset = round(active[s] * hop_s + half - hop_s / 2.0, 3)
            offset = round(active[e] * hop_s + half + hop_s / 2.0, 3)
            annotations.append(Annotation(onset=onset, offset=offset, category=name))
    return sorted(annotations, key=lambda a: (a.onset, a.offset, a.category))


def _meta_text(spec: CorpusSpec) -> str:
    lines = [
        f"seed = {spec.seed}",
        "categories = " + ", ".join(spec.categories),
        f"train_recordings = {spec.train_recordings}",
        f"val_recordings = {spec.val_recordings}",
        f"test_recordings = {spec.test_recordings}",
        f"duration_s = {spec.duration_s!r}",
        f"events_per_recording = {spec.events_per_recording}",
        f"max_polyphony = {spec.max_polyphony}",
    ]
    return "\n".join(lines) + "\n"


def generate_corpus(spec: CorpusSpec, out_dir) -> dict[str, list[str]]:
    """Render every split to disk; returns recording names per split."""
    rng = np.random.default_rng(spec.seed)
    names: dict[str, list[str]] = {}
    for split in SPLITS:
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        names[split] = []
        for i in range(spec.split_counts[split]):
            name = f"rec{i:03d}"
            annotations = _schedule_events(rng, spec)
            mix = _mix_recording(rng, spec, annotations)
            write_wav(os.path.join(split_dir, f"{name}.wav"), mix)
            write_annotations(os.path.join(split_dir, f"{name}.txt"), annotations)
            names[split].append(name)
    with open(os.path.join(out_dir, "corpus.meta"), "w", encoding="utf-8") as fh:
        fh.write(_meta_text(spec))
    return names


def read_corpus_meta(corpus_dir) -> dict[str, str]:
    path = os.path.join(corpus_dir, "corpus.meta")
    if not os.path.exists(path):
        raise ValueError(f"{corpus_dir} has no corpus.meta; not a generated corpus?")
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, _, value = line.partition("=")
                meta[key.strip()] = value.strip()
    return meta


@dataclass
class RecordingData:
    """A recording reduced to aligned features and frame labels."""

    name: str
    values: np.ndarray  # (T,F) standardized log-mel
    labels: np.ndarray  # (T,Y) binary


@dataclass
class PreparedCorpus:
    categories: CategorySet
    splits: dict[str, list[RecordingData]]
    stats: object
    feat: FeatureConfig = field(default_factory=FeatureConfig)


def corpus_recordings(corpus_dir, split: str) -> list[str]:
    split_dir = os.path.join(corpus_dir, split)
    if not os.path.isdir(split_dir):
        return []
    return sorted(f[:-4] for f in os.listdir(split_dir) if f.endswith(".wav"))


def prepare_corpus(corpus_dir, feat: FeatureConfig = FeatureConfig(), stats=None) -> PreparedCorpus:
    """Load a corpus from disk into standardized spectrograms and labels.

    Statistics default to the training split's (the usual case for training);
    pass the checkpoint's statistics when scoring with a trained model.
    """
    meta = read_corpus_meta(corpus_dir)
    categories = CategorySet(tuple(n.strip() for n in meta["categories"].split(",")))
    specs: dict[str, list] = {}
    for split in SPLITS:
        specs[split] = []
        for name in corpus_recordings(corpus_dir, split):
            wav_path = os.path.join(corpus_dir, split, f"{name}.wav")
            waveform, rate = read_wav(wav_path)
            spectrogram = log_mel(waveform, rate, feat)
            annotations = load_annotations(os.path.join(corpus_dir, split, f"{name}.txt"), categories)
            specs[split].append((name, spectrogram, annotations))
    if stats is None:
        if not specs["train"]:
            raise ValueError(f"{corpus_dir} has no training recordings to compute statistics from")
        stats = compute_feature_stats([s for _, s, _ in specs["train"]])
    splits = {}
    for split in SPLITS:
        splits[split] = [
            RecordingData(
                name=name,
                values=standardize(spectrogram, stats).values,
                labels=rasterize_labels(annotations, spectrogram.num_frames, categories,
                                        hop_s=spectrogram.hop_s, frame_s=spectrogram.frame_s),
            )
            for name, spectrogram, annotations in specs[split]
        ]
    return PreparedCorpus(categories=categories, splits=splits, stats=stats, feat=feat)


def dense_indices(recordings, segment_frames: int):
    """(recording, offset) pairs for every training segment, without copies."""
    index = []
    for rec in recordings:
        total = rec.values.shape[0]
        if total < segment_frames:
            warnings.warn(
                f"recording {rec.name} has {total} frames, shorter than one "
                f"{segment_frames}-frame segment; skipped"
            )
            continue
        index.extend((rec, off) for off in range(total - segment_frames + 1))
    return index

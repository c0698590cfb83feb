"""Waveform to log-mel spectrogram conversion and fixed-length segmentation.

Frames are 40 ms with 50% overlap at 44100 Hz (1764-sample frames, 882-sample
hop), Hann windowed, magnitude spectrum over a 2048-point FFT, then a 64-band
triangular mel filterbank spanning 50..22050 Hz with unit-peak triangles and a
log floor of 1e-10.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 44100
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = SAMPLE_RATE
    frame_s: float = 0.040
    hop_fraction: float = 0.5
    fft_size: int = 2048
    mel_bins: int = 64
    fmin: float = 50.0
    fmax: float = 22050.0
    floor: float = LOG_FLOOR
    segment_frames: int = 128

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_s * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.frame_s * self.hop_fraction * self.sample_rate))

    @property
    def hop_s(self) -> float:
        return self.hop_samples / self.sample_rate


@dataclass
class Spectrogram:
    """T x F log-mel energies with frame timing metadata."""

    values: np.ndarray
    hop_s: float
    frame_s: float
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]


@dataclass
class Segment:
    """Fixed-length window cut from a spectrogram.

    `offset` is the source frame index of row 0; the trailing `pad_len` rows
    are synthetic padding and must be excluded from scoring.
    """

    values: np.ndarray
    offset: int
    pad_len: int = 0

    def __post_init__(self):
        if not 0 <= self.pad_len < self.values.shape[0]:
            raise ValueError(f"pad_len {self.pad_len} must be < segment length {self.values.shape[0]}")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Triangular filters (mel_bins x fft_size//2+1), unit peak, single lobe each."""
    edges_mel = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.mel_bins + 2)
    edges_hz = mel_to_hz(edges_mel)
    bin_hz = np.arange(config.fft_size // 2 + 1) * (config.sample_rate / config.fft_size)
    bank = np.zeros((config.mel_bins, bin_hz.size))
    for i in range(config.mel_bins):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def filterbank_centers(config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Peak frequency in Hz of each triangular filter."""
    edges = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.mel_bins + 2)
    return mel_to_hz(edges[1:-1])


def frame_count(num_samples: int, config: FeatureConfig = FeatureConfig()) -> int:
    return (num_samples - config.frame_samples) // config.hop_samples + 1


def log_mel(waveform: np.ndarray, sample_rate: int, config: FeatureConfig = FeatureConfig()) -> Spectrogram:
    """Hann-windowed magnitude spectra through the mel filterbank, log floored."""
    if sample_rate != config.sample_rate:
        raise ValueError(
            f"waveform must be sampled at {config.sample_rate} Hz, got {sample_rate}"
        )
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1:
        raise ValueError("waveform must be mono (1-d)")
    frame_len, hop = config.frame_samples, config.hop_samples
    if waveform.size < frame_len:
        raise ValueError(
            f"waveform too short: need at least one full {frame_len}-sample frame, got {waveform.size}"
        )
    frames = frame_count(waveform.size, config)
    window = np.hanning(frame_len)
    bank = mel_filterbank(config)
    out = np.empty((frames, config.mel_bins))
    for k in range(frames):
        chunk = waveform[k * hop : k * hop + frame_len] * window
        spectrum = np.abs(np.fft.rfft(chunk, n=config.fft_size))
        out[k] = np.log(np.maximum(bank @ spectrum, config.floor))
    return Spectrogram(values=out, hop_s=config.hop_s, frame_s=config.frame_s, sample_rate=sample_rate)


def segment_stream(spec: Spectrogram, mode: str, config: FeatureConfig = FeatureConfig()):
    """Cut a spectrogram into training (dense) or test (non-overlapping) segments.

    Training mode yields one segment for every start offset; test mode tiles
    the recording without overlap and pads the final partial window with the
    log floor, recording how many rows are padding.
    """
    seg = config.segment_frames
    total = spec.num_frames
    if mode == "train":
        if total < seg:
            raise ValueError(
                f"recording has {total} frames, shorter than one {seg}-frame training segment"
            )
        return [Segment(values=spec.values[k : k + seg], offset=k) for k in range(total - seg + 1)]
    if mode != "test":
        raise ValueError(f"unknown segmentation mode {mode!r}")
    segments = []
    pad_value = np.log(config.floor)
    for start in range(0, total, seg):
        window = spec.values[start : start + seg]
        pad = seg - window.shape[0]
        if pad:
            fill = np.full((pad, spec.num_bins), pad_value)
            window = np.vstack([window, fill])
        segments.append(Segment(values=window, offset=start, pad_len=pad))
    return segments


@dataclass
class FeatureStats:
    """Per-bin mean and standard deviation taken over training frames."""

    mean: np.ndarray
    std: np.ndarray


def compute_feature_stats(spectrograms) -> FeatureStats:
    stacked = np.vstack([s.values for s in spectrograms])
    return FeatureStats(mean=stacked.mean(axis=0), std=stacked.std(axis=0))


def standardize(spec: Spectrogram, stats: FeatureStats) -> Spectrogram:
    """Shift and scale each frequency bin by the training-set statistics."""
    if stats is None:
        raise ValueError("feature statistics missing; compute them over the training split first")
    if stats.mean.shape != (spec.num_bins,):
        raise ValueError(
            f"statistics cover {stats.mean.shape[0]} bins, spectrogram has {spec.num_bins}"
        )
    scaled = (spec.values - stats.mean) / np.maximum(stats.std, 1e-8)
    return Spectrogram(values=scaled, hop_s=spec.hop_s, frame_s=spec.frame_s, sample_rate=spec.sample_rate)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read 16-bit PCM mono WAV; anything else is rejected with a clear message."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        if wf.getcomptype() != "NONE":
            raise ValueError(f"{path}: expected uncompressed PCM, got {wf.getcomptype()}")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path, waveform: np.ndarray, sample_rate: int = SAMPLE_RATE):
    """Write float samples in [-1, 1] as 16-bit PCM mono."""
    clipped = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())

"""Signal-processing frontend: framing, FFT, mel filter-bank energies, accel RMS, noise mixing.

Everything here is a pure function of its arguments. Arrays are float64 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE_HZ = 16000
ACCEL_RATE_HZ = 100
STANDARD_GRAVITY = 9.80665  # m/s^2 per g


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono PCM clip with nominal amplitude range [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        object.__setattr__(self, "samples", _frozen_array(self.samples, 1, "samples"))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class AccelTrace:
    """Uniformly sampled (x, y, z) acceleration in g; row i is at t = i / rate_hz."""

    samples: np.ndarray
    rate_hz: int = ACCEL_RATE_HZ

    def __post_init__(self):
        if int(self.rate_hz) <= 0:
            raise ValueError("rate_hz must be positive")
        object.__setattr__(self, "rate_hz", int(self.rate_hz))
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        arr = _frozen_array(arr, 2, "samples")
        if arr.shape[1] != 3:
            raise ValueError(f"accel samples must have 3 columns, got {arr.shape[1]}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(len(self)) / self.rate_hz


@dataclass(frozen=True)
class DspConfig:
    frame_len: int = 320
    hop_len: int = 160
    fft_size: int = 512
    n_mels: int = 40
    fmin_hz: float = 20.0
    fmax_hz: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.frame_len <= self.fft_size:
            raise ValueError("need 0 < frame_len <= fft_size")
        if not 0 < self.hop_len <= self.frame_len:
            raise ValueError("need 0 < hop_len <= frame_len")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0 <= self.fmin_hz < self.fmax_hz:
            raise ValueError("need 0 <= fmin_hz < fmax_hz")
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")

    def check_rate(self, sample_rate_hz: int) -> None:
        if self.fmax_hz > sample_rate_hz / 2:
            raise ValueError(
                f"fmax_hz={self.fmax_hz} exceeds Nyquist for {sample_rate_hz} Hz audio"
            )


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """Log mel filter-bank energies, shape (n_frames, n_mels)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 2, "values"))

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AccelFeature:
    rms_x: float
    rms_y: float
    rms_z: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.rms_x, self.rms_y, self.rms_z)


def hamming_window(n: int) -> np.ndarray:
    """Symmetric Hamming window, w[i] = 0.54 - 0.46 cos(2 pi i / (n - 1))."""
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    i = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * i / (n - 1))


def frame_count(length: int, frame_len: int, hop_len: int) -> int:
    if length < frame_len:
        raise ValueError(f"signal of {length} samples is shorter than one frame ({frame_len})")
    return 1 + (length - frame_len) // hop_len


def frame_signal(clip: AudioClip, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Split into overlapping frames; a trailing partial frame is dropped.

    Returns a (n_frames, frame_len) array. Frame k starts at k * hop_len.
    """
    n = frame_count(len(clip), cfg.frame_len, cfg.hop_len)
    starts = np.arange(n)[:, None] * cfg.hop_len
    return clip.samples[starts + np.arange(cfg.frame_len)[None, :]]


def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx = idx >> 1
    return rev


def fft(x) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    Works on any leading batch shape. Unnormalized: X[k] = sum_n x[n] exp(-2 pi i k n / N).
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    batch = x.shape[:-1]
    out = x[..., _bit_reversal(n)]
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / m)
        blocks = out.reshape(*batch, n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*batch, n)
        m *= 2
    return out


def fft_power_spectrum(frame) -> np.ndarray:
    """|X[k]|^2 for bins 0..N/2 of a real frame (or a batch of frames along the last axis)."""
    spec = fft(frame)
    half = spec[..., : spec.shape[-1] // 2 + 1]
    return half.real**2 + half.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: DspConfig) -> np.ndarray:
    """The n_mels + 2 filter corner frequencies in Hz, equally spaced in mel."""
    mels = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_band_centers(cfg: DspConfig) -> np.ndarray:
    return mel_band_edges(cfg)[1:-1]


def mel_filterbank(cfg: DspConfig = DspConfig(), sample_rate_hz: int = SAMPLE_RATE_HZ) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_mels, fft_size // 2 + 1).

    Filter m rises linearly from edge m to edge m+1 and falls to zero at edge m+2,
    evaluated at the exact bin frequencies k * rate / fft_size.
    """
    cfg.check_rate(sample_rate_hz)
    edges = mel_band_edges(cfg)
    bins_hz = np.arange(cfg.fft_size // 2 + 1) * sample_rate_hz / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins_hz[None, :] - lo) / (mid - lo)
    falling = (hi - bins_hz[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"mel bands {empty.tolist()} cover no FFT bin; lower n_mels or raise fft_size"
        )
    return weights


def mfe_spectrogram(clip: AudioClip, cfg: DspConfig = DspConfig()) -> MelSpectrogram:
    """Log mel filter-bank energies (natural log) of a clip."""
    fbank = mel_filterbank(cfg, clip.sample_rate_hz)
    frames = frame_signal(clip, cfg) * hamming_window(cfg.frame_len)
    padded = np.zeros((frames.shape[0], cfg.fft_size))
    padded[:, : cfg.frame_len] = frames
    energies = fft_power_spectrum(padded) @ fbank.T
    return MelSpectrogram(np.log(np.maximum(energies, cfg.log_floor)))


def accel_rms(trace: AccelTrace) -> AccelFeature:
    if len(trace) == 0:
        raise ValueError("cannot take RMS of an empty accelerometer trace")
    rms = np.sqrt(np.mean(trace.samples**2, axis=0))
    return AccelFeature(*(float(v) for v in rms))


def mix_background(clip: AudioClip, noise: AudioClip, ratio: float) -> AudioClip:
    """clip + ratio * noise, hard-clipped to [-1, 1]. Noise is truncated to the clip length."""
    if clip.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError(
            f"sample rate mismatch: clip {clip.sample_rate_hz} Hz, noise {noise.sample_rate_hz} Hz"
        )
    if len(noise) < len(clip):
        raise ValueError(f"noise ({len(noise)} samples) shorter than clip ({len(clip)})")
    if not (ratio >= 0 and math.isfinite(ratio)):
        raise ValueError(f"mix ratio must be finite and non-negative, got {ratio}")
    mixed = clip.samples + ratio * noise.samples[: len(clip)]
    return AudioClip(np.clip(mixed, -1.0, 1.0), clip.sample_rate_hz)

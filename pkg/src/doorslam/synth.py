"""Deterministic synthetic door-close data: event audio, accelerometer traces, noise beds."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dsp import ACCEL_RATE_HZ, SAMPLE_RATE_HZ, AccelTrace, AudioClip
from .formats import write_accel_csv, write_wav

CLIP_S = 2.0
LABEL_NAMES = ("normal", "slam")
NOISE_KINDS = ("white", "hum", "babble")
BACKGROUND_RMS = 0.1


@dataclass(frozen=True)
class ClassParams:
    peak_amp: tuple[float, float]
    attack_ms: tuple[float, float]
    decay_ms: tuple[float, float]
    lowpass_hz: float | None  # None: full-band carrier
    accel_peak_g: tuple[float, float]


@dataclass(frozen=True)
class SynthParams:
    slam: ClassParams = ClassParams((0.6, 1.0), (2.0, 6.0), (40.0, 120.0), None, (2.0, 4.0))
    normal: ClassParams = ClassParams((0.1, 0.35), (10.0, 30.0), (120.0, 300.0), 2000.0, (0.3, 1.2))
    event_t_s: tuple[float, float] = (0.3, 1.5)
    pulse_ms: tuple[float, float] = (50.0, 150.0)
    accel_noise_g: float = 0.02

    def __post_init__(self):
        ranges = [self.event_t_s, self.pulse_ms]
        for cp in (self.slam, self.normal):
            ranges += [cp.peak_amp, cp.attack_ms, cp.decay_ms, cp.accel_peak_g]
        for lo, hi in ranges:
            if not lo < hi:
                raise ValueError(f"degenerate range ({lo}, {hi})")

    def for_label(self, label) -> ClassParams:
        return self.slam if label_code(label) == 1 else self.normal

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_PARAMS = SynthParams()


def label_code(label) -> int:
    if label in (0, 1):
        return int(label)
    if label in LABEL_NAMES:
        return LABEL_NAMES.index(label)
    raise ValueError(f"unknown label {label!r}; expected 'slam' or 'normal'")


def _rng(seed: int, stream: str) -> np.random.Generator:
    # independent streams per purpose so audio and accel draws do not interfere
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode())])


def _lowpass(x: np.ndarray, rate_hz: int, cutoff_hz: float) -> np.ndarray:
    spec = np.fft.rfft(x)
    spec[np.fft.rfftfreq(x.size, 1.0 / rate_hz) > cutoff_hz] = 0.0
    return np.fft.irfft(spec, n=x.size)


def _bandpass(x: np.ndarray, rate_hz: int, lo_hz: float, hi_hz: float) -> np.ndarray:
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / rate_hz)
    spec[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    return np.fft.irfft(spec, n=x.size)


def draw_event_time(seed: int, params: SynthParams = DEFAULT_PARAMS) -> float:
    """Transient onset time within a 2 s clip, as used by gen_dataset to align audio and accel."""
    return float(_rng(seed, "event_t").uniform(*params.event_t_s))


def gen_event_audio(
    label,
    seed: int,
    rate_hz: int = SAMPLE_RATE_HZ,
    event_t: float | None = None,
    params: SynthParams = DEFAULT_PARAMS,
    duration_s: float = CLIP_S,
) -> AudioClip:
    """A 2 s clip holding one door-close transient.

    The envelope rises as exp((t - t0) / attack) before the onset t0 and decays as
    exp(-(t - t0) / decay) after it. Slams use a white-noise carrier; normal closes
    use noise low-passed at 2 kHz. The clip is scaled so max |sample| equals the drawn peak.
    """
    cp = params.for_label(label)
    rng = _rng(seed, "audio")
    peak = rng.uniform(*cp.peak_amp)
    attack = rng.uniform(*cp.attack_ms) / 1000.0
    decay = rng.uniform(*cp.decay_ms) / 1000.0
    t0 = draw_event_time(seed, params) if event_t is None else float(event_t)
    n = int(round(duration_s * rate_hz))
    carrier = rng.standard_normal(n)
    if cp.lowpass_hz is not None:
        carrier = _lowpass(carrier, rate_hz, cp.lowpass_hz)
    t = np.arange(n) / rate_hz
    env = np.where(t < t0, np.exp(np.minimum(t - t0, 0.0) / attack), np.exp(-np.maximum(t - t0, 0.0) / decay))
    signal = env * carrier
    return AudioClip(signal * (peak / np.max(np.abs(signal))), rate_hz)


def accel_pulse(
    label,
    seed: int,
    rate_hz: int,
    event_t: float,
    n_samples: int,
    params: SynthParams = DEFAULT_PARAMS,
) -> np.ndarray:
    """Noise-free (n_samples, 3) door-swing pulse: a half-sine in the x-z plane centred on event_t.

    The pulse centre is snapped to the nearest sample so the sampled peak equals the drawn peak.
    """
    cp = params.for_label(label)
    rng = _rng(seed, "accel")
    peak = rng.uniform(*cp.accel_peak_g)
    width = rng.uniform(*params.pulse_ms) / 1000.0
    angle = rng.uniform(0.0, np.pi / 2)
    centre = round(event_t * rate_hz) / rate_hz
    t = np.arange(n_samples) / rate_hz
    phase = (t - centre) / width + 0.5
    shape = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    out = np.zeros((n_samples, 3))
    out[:, 0] = peak * np.cos(angle) * shape
    out[:, 2] = peak * np.sin(angle) * shape
    return out


def gen_event_accel(
    label,
    seed: int,
    rate_hz: int = ACCEL_RATE_HZ,
    event_t: float | None = None,
    params: SynthParams = DEFAULT_PARAMS,
    duration_s: float = CLIP_S,
) -> AccelTrace:
    """Accelerometer trace for one close: pulse on x and z, only sensor noise on y."""
    if event_t is None:
        event_t = draw_event_time(seed, params)
    if not 0 <= event_t < duration_s:
        raise ValueError(f"event_t={event_t} outside the {duration_s} s trace")
    n = int(round(duration_s * rate_hz))
    noise = _rng(seed, "accel_noise").normal(0.0, params.accel_noise_g, size=(n, 3))
    return AccelTrace(accel_pulse(label, seed, rate_hz, event_t, n, params) + noise, rate_hz)


def _scale_rms(x: np.ndarray, rms: float) -> np.ndarray:
    return x * (rms / np.sqrt(np.mean(x**2)))


def gen_background(kind: str, seed: int, duration_s: float, rate_hz: int = SAMPLE_RATE_HZ) -> AudioClip:
    """Background bed at RMS 0.1: 'white', 'hum' (50 Hz mains + harmonics) or 'babble'."""
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown background kind {kind!r}; expected one of {NOISE_KINDS}")
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s * rate_hz))
    rng = _rng(seed, "background_" + kind)
    t = np.arange(n) / rate_hz
    if kind == "white":
        x = rng.uniform(-1.0, 1.0, n)
    elif kind == "hum":
        phases = rng.uniform(0, 2 * np.pi, 4)
        x = sum(a * np.sin(2 * np.pi * 50.0 * h * t + ph) for h, a, ph in zip((1, 2, 3, 4), (1.0, 0.5, 0.3, 0.2), phases))
        x = x + 0.01 * rng.standard_normal(n)
    else:
        x = _bandpass(rng.standard_normal(n), rate_hz, 300.0, 3400.0)
        x = x * (1.0 + 0.5 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi)))
    return AudioClip(_scale_rms(x, BACKGROUND_RMS), rate_hz)


@dataclass(frozen=True)
class ManifestItem:
    clip_path: str
    accel_path: str
    label: str
    seed_used: int


@dataclass(frozen=True)
class DatasetManifest:
    items: tuple
    params: dict
    root: Path | None = None  # directory the relative item paths resolve against

    def resolve(self, relpath: str) -> Path:
        return (self.root or Path(".")) / relpath

    def to_json(self) -> str:
        return json.dumps(
            {"params": self.params, "items": [asdict(item) for item in self.items]}, indent=1, sort_keys=True
        )

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        obj = json.loads(path.read_text())
        items = tuple(ManifestItem(**item) for item in obj["items"])
        return cls(items, obj["params"], path.parent)


MANIFEST_NAME = "manifest.json"


def gen_dataset(
    n_per_class: int,
    seed: int,
    out_dir,
    params: SynthParams = DEFAULT_PARAMS,
    rate_hz: int = SAMPLE_RATE_HZ,
    accel_rate_hz: int = ACCEL_RATE_HZ,
) -> DatasetManifest:
    """Write n_per_class WAV+CSV pairs per label plus manifest.json; item i uses seed + i."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for index in range(2 * n_per_class):
        label = LABEL_NAMES[index % 2]
        child = seed + index
        stem = f"{label}_{index:05d}"
        event_t = draw_event_time(child, params)
        write_wav(out / f"{stem}.wav", gen_event_audio(label, child, rate_hz, event_t, params))
        write_accel_csv(out / f"{stem}.csv", gen_event_accel(label, child, accel_rate_hz, event_t, params))
        items.append(ManifestItem(f"{stem}.wav", f"{stem}.csv", label, child))
    manifest = DatasetManifest(
        tuple(items),
        {
            "n_per_class": n_per_class,
            "seed": seed,
            "sample_rate_hz": rate_hz,
            "accel_rate_hz": accel_rate_hz,
            "synth": json.loads(json.dumps(params.to_dict())),  # as it reads back from disk
        },
        out,
    )
    (out / MANIFEST_NAME).write_text(manifest.to_json())
    return manifest

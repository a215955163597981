"""On-disk formats owned by the DSP frontend: WAV audio, accelerometer CSV, spectrogram export."""

from __future__ import annotations

import csv
import json
import wave
from pathlib import Path

import numpy as np

from .dsp import AccelTrace, AudioClip, MelSpectrogram, SAMPLE_RATE_HZ

ACCEL_HEADER = ["t_s", "x_g", "y_g", "z_g"]


class AudioFormatError(ValueError):
    pass


def write_wav(path, clip: AudioClip) -> None:
    """Write 16-bit signed little-endian mono PCM. Samples are scaled by 32768 and saturated."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate_hz)
        w.writeframes(pcm.tobytes())


def read_wav(path, expected_rate_hz: int | None = SAMPLE_RATE_HZ) -> AudioClip:
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            data = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    if channels != 1 or width != 2:
        raise AudioFormatError(
            f"{path}: expected mono 16-bit PCM, got {channels} channel(s) of {8 * width}-bit"
        )
    if expected_rate_hz is not None and rate != expected_rate_hz:
        raise AudioFormatError(f"{path}: expected {expected_rate_hz} Hz, got {rate} Hz")
    return AudioClip(np.frombuffer(data, dtype="<i2") / 32768.0, rate)


def write_accel_csv(path, trace: AccelTrace) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(ACCEL_HEADER)
        for i, (x, y, z) in enumerate(trace.samples):
            out.writerow([repr(i / trace.rate_hz), repr(float(x)), repr(float(y)), repr(float(z))])


def read_accel_csv(path) -> AccelTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ACCEL_HEADER:
        raise ValueError(f"{path}: expected header {','.join(ACCEL_HEADER)}")
    table = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    if table.shape[0] < 2:
        raise ValueError(f"{path}: need at least two samples to infer the rate")
    steps = np.diff(table[:, 0])
    if np.any(steps <= 0):
        raise ValueError(f"{path}: t_s column is not strictly increasing")
    rate = int(round(1.0 / float(np.median(steps))))
    return AccelTrace(table[:, 1:], rate)


def spectrogram_to_json(spec: MelSpectrogram) -> str:
    return json.dumps(
        {"n_frames": spec.n_frames, "n_mels": spec.n_mels, "values": spec.values.ravel().tolist()}
    )


def spectrogram_from_json(text: str) -> MelSpectrogram:
    obj = json.loads(text)
    values = np.asarray(obj["values"], dtype=np.float64)
    return MelSpectrogram(values.reshape(obj["n_frames"], obj["n_mels"]))


def write_pgm(path, spec: MelSpectrogram) -> None:
    """Binary PGM (P5) with time on the x axis and low mel bands at the bottom."""
    img = spec.values.T[::-1]
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo) * 255.0
    pixels = np.round(scaled).astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())

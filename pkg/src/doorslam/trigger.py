"""Deployed-device loop: accelerometer threshold trigger, 6 s capture, 2 s window selection.

The detector is a three-state machine (idle -> capturing -> refractory -> idle)
advanced one accelerometer sample at a time by ``step``. ``run_device`` replays
time-aligned accelerometer and audio streams through it and classifies each
completed capture. Only the selected window of each capture leaves
``capture_window``; the rest of the captured audio is dropped there.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .dsp import AccelFeature, AccelTrace, AudioClip, DspConfig, accel_rms, mfe_spectrogram
from .model import LABELS, ModelSpec, Weights, predict

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class TriggerConfig:
    threshold_g: float = 1.8
    ignored_axis: str | None = "y"
    capture_duration_s: float = 6.0
    window_s: float = 2.0
    refractory_s: float = 6.0

    def __post_init__(self):
        if self.ignored_axis == "none":
            object.__setattr__(self, "ignored_axis", None)
        if self.ignored_axis is not None and self.ignored_axis not in AXES:
            raise ValueError(f"ignored_axis must be one of x, y, z or none; got {self.ignored_axis!r}")
        if not self.threshold_g > 0:
            raise ValueError("threshold_g must be positive")
        if not 0 < self.window_s <= self.capture_duration_s:
            raise ValueError("need 0 < window_s <= capture_duration_s")
        if self.refractory_s < self.capture_duration_s:
            raise ValueError("refractory_s must be >= capture_duration_s")


class Mode(enum.Enum):
    IDLE = "idle"
    CAPTURING = "capturing"
    REFRACTORY = "refractory"


LEGAL_TRANSITIONS = {
    (Mode.IDLE, Mode.IDLE),
    (Mode.IDLE, Mode.CAPTURING),
    (Mode.CAPTURING, Mode.CAPTURING),
    (Mode.CAPTURING, Mode.REFRACTORY),
    (Mode.REFRACTORY, Mode.REFRACTORY),
    (Mode.REFRACTORY, Mode.IDLE),
}


@dataclass(frozen=True)
class DetectorState:
    mode: Mode = Mode.IDLE
    capture_start_t: float | None = None
    peak_accel_g: float = 0.0
    last_t: float | None = None


@dataclass(frozen=True)
class TriggerFired:
    t: float
    magnitude_g: float


@dataclass(frozen=True)
class CaptureComplete:
    trigger_t: float
    t: float
    peak_accel_g: float


def magnitude(sample, ignored_axis: str | None = "y") -> float:
    """Euclidean norm of the acceleration over the axes that are not ignored."""
    x, y, z = (float(v) for v in sample)
    if ignored_axis == "x":
        return math.hypot(y, z)
    if ignored_axis == "y":
        return math.hypot(x, z)
    if ignored_axis == "z":
        return math.hypot(x, y)
    return math.sqrt(x * x + y * y + z * z)


def step(state: DetectorState, t: float, accel, cfg: TriggerConfig = TriggerConfig()):
    """Advance the detector by one sample. Returns (new_state, event or None).

    At most one mode transition happens per call.
    """
    if state.last_t is not None and not t > state.last_t:
        raise ValueError(f"sample time {t} does not follow previous time {state.last_t}")
    mag = magnitude(accel, cfg.ignored_axis)
    if state.mode is Mode.IDLE:
        if mag >= cfg.threshold_g:
            return DetectorState(Mode.CAPTURING, t, mag, t), TriggerFired(t, mag)
        return replace(state, last_t=t), None
    if state.mode is Mode.CAPTURING:
        if t >= state.capture_start_t + cfg.capture_duration_s:
            done = CaptureComplete(state.capture_start_t, t, state.peak_accel_g)
            return replace(state, mode=Mode.REFRACTORY, last_t=t), done
        return replace(state, peak_accel_g=max(state.peak_accel_g, mag), last_t=t), None
    if t >= state.capture_start_t + cfg.refractory_s:
        return DetectorState(Mode.IDLE, None, 0.0, t), None
    return replace(state, last_t=t), None


def detector_events(trace: AccelTrace, cfg: TriggerConfig = TriggerConfig(), t0: float = 0.0) -> list:
    """Run the detector over a whole trace and collect its events."""
    state = DetectorState()
    events = []
    for t, sample in zip(t0 + trace.times_s, trace.samples):
        state, event = step(state, float(t), sample, cfg)
        if event is not None:
            events.append(event)
    return events


def select_window(capture: AudioClip, window_s: float = 2.0, hop_s: float = 0.1) -> tuple[AudioClip, float]:
    """Highest-energy window among starts on the hop grid; ties go to the earliest start."""
    rate = capture.sample_rate_hz
    win = int(round(window_s * rate))
    hop = int(round(hop_s * rate))
    if win < 1 or hop < 1:
        raise ValueError("window_s and hop_s must each span at least one sample")
    if len(capture) < win:
        raise ValueError(f"capture of {capture.duration_s:.3f} s is shorter than the {window_s} s window")
    x = capture.samples
    starts = range(0, len(x) - win + 1, hop)
    energies = np.array([np.dot(x[s : s + win], x[s : s + win]) for s in starts])
    best = starts[int(np.argmax(energies))]
    return AudioClip(x[best : best + win], rate), best / rate


@dataclass(frozen=True, eq=False)
class CaptureResult:
    trigger_t: float
    window: AudioClip
    window_offset_s: float
    peak_accel_g: float
    accel_feature: AccelFeature


def capture_window(
    audio: AudioClip,
    accel: AccelTrace,
    done: CaptureComplete,
    cfg: TriggerConfig = TriggerConfig(),
    hop_s: float = 0.1,
) -> CaptureResult:
    """Cut the capture span out of the live streams and keep only its selected window."""
    rate = audio.sample_rate_hz
    start = int(round(done.trigger_t * rate))
    n = int(round(cfg.capture_duration_s * rate))
    if start + n > len(audio):
        raise ValueError(
            f"audio ends at {audio.duration_s:.3f} s, before the capture starting at {done.trigger_t:.3f} s completes"
        )
    window, offset = select_window(AudioClip(audio.samples[start : start + n], rate), cfg.window_s, hop_s)
    a0 = int(round(done.trigger_t * accel.rate_hz))
    a1 = a0 + int(round(cfg.capture_duration_s * accel.rate_hz))
    feature = accel_rms(AccelTrace(accel.samples[a0:a1], accel.rate_hz))
    return CaptureResult(done.trigger_t, window, offset, done.peak_accel_g, feature)


@dataclass(frozen=True, eq=False)
class DetectionEvent:
    trigger_t_s: float
    label: int
    confidence: float
    peak_accel_g: float
    window_offset_s: float
    window: AudioClip | None = None  # the classified audio; not serialized

    def to_dict(self) -> dict:
        return {
            "trigger_t_s": self.trigger_t_s,
            "label": LABELS[self.label],
            "confidence": self.confidence,
            "peak_accel_g": self.peak_accel_g,
            "window_offset_s": self.window_offset_s,
        }


def run_device(
    accel_stream: AccelTrace,
    audio_stream: AudioClip,
    spec: ModelSpec,
    weights: Weights,
    cfg: TriggerConfig = TriggerConfig(),
    dsp_cfg: DspConfig = DspConfig(),
    hop_s: float = 0.1,
) -> list[DetectionEvent]:
    """Replay both streams (aligned at t = 0) and classify every completed capture."""
    state = DetectorState()
    events = []
    audio_end = audio_stream.duration_s
    for t, sample in zip(accel_stream.times_s, accel_stream.samples):
        state, event = step(state, float(t), sample, cfg)
        if isinstance(event, TriggerFired) and event.t + cfg.capture_duration_s > audio_end + 1e-9:
            raise ValueError(
                f"trigger at {event.t:.3f} s needs audio until {event.t + cfg.capture_duration_s:.3f} s; "
                f"stream ends at {audio_end:.3f} s"
            )
        if isinstance(event, CaptureComplete):
            result = capture_window(audio_stream, accel_stream, event, cfg, hop_s)
            label, confidence = predict(spec, weights, mfe_spectrogram(result.window, dsp_cfg))
            events.append(
                DetectionEvent(
                    result.trigger_t, label, confidence, result.peak_accel_g, result.window_offset_s, result.window
                )
            )
    return events

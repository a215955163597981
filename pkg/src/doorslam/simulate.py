"""Scenario timelines for the device simulator: scheduled door events over continuous background."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ACCEL_RATE_HZ, SAMPLE_RATE_HZ, AccelTrace, AudioClip, mix_background
from .synth import DEFAULT_PARAMS, LABEL_NAMES, NOISE_KINDS, accel_pulse, gen_background, gen_event_audio
from .trigger import TriggerConfig

# onset position inside each synthesized 2 s event clip
EVENT_ONSET_IN_CLIP_S = 1.0


@dataclass(frozen=True)
class ScheduledEvent:
    label: str
    t_s: float


def parse_events(text: str) -> list[ScheduledEvent]:
    """Parse "slam@5,slam@25,normal@45" into time-ordered events."""
    events = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        label, sep, t = part.partition("@")
        if not sep or label not in LABEL_NAMES:
            raise ValueError(f"bad event {part!r}; expected slam@<seconds> or normal@<seconds>")
        try:
            t_s = float(t)
        except ValueError:
            raise ValueError(f"bad event time in {part!r}") from None
        events.append(ScheduledEvent(label, t_s))
    return sorted(events, key=lambda e: e.t_s)


def check_schedule(events, duration_s: float, cfg: TriggerConfig = TriggerConfig()) -> None:
    for e in events:
        if not 0 <= e.t_s or e.t_s + cfg.capture_duration_s > duration_s:
            raise ValueError(
                f"event at {e.t_s} s does not leave a full {cfg.capture_duration_s} s capture "
                f"inside the {duration_s} s scenario"
            )
    for a, b in zip(events, events[1:]):
        if b.t_s - a.t_s < cfg.refractory_s:
            raise ValueError(
                f"events at {a.t_s} s and {b.t_s} s are closer than the {cfg.refractory_s} s refractory period"
            )


@dataclass(frozen=True, eq=False)
class Scenario:
    accel: AccelTrace
    audio: AudioClip
    events: tuple


def build_scenario(
    events,
    duration_s: float,
    seed: int,
    background: str = "babble",
    noise_ratio: float = 0.5,
    cfg: TriggerConfig = TriggerConfig(),
    rate_hz: int = SAMPLE_RATE_HZ,
    accel_rate_hz: int = ACCEL_RATE_HZ,
    params=DEFAULT_PARAMS,
) -> Scenario:
    """Synthesize time-aligned accelerometer and microphone streams starting at t = 0.

    Event k uses child seed seed + 1 + k; the background bed and sensor noise use seed.
    """
    events = list(events)
    check_schedule(events, duration_s, cfg)
    if background not in NOISE_KINDS + ("none",):
        raise ValueError(f"unknown background {background!r}")
    n_audio = int(round(duration_s * rate_hz))
    n_accel = int(round(duration_s * accel_rate_hz))
    audio = np.zeros(n_audio)
    accel = np.random.default_rng([seed, 0xACC]).normal(0.0, params.accel_noise_g, size=(n_accel, 3))
    for k, event in enumerate(events):
        child = seed + 1 + k
        clip = gen_event_audio(event.label, child, rate_hz, EVENT_ONSET_IN_CLIP_S, params).samples
        start = int(round((event.t_s - EVENT_ONSET_IN_CLIP_S) * rate_hz))
        lo, hi = max(start, 0), min(start + clip.size, n_audio)
        audio[lo:hi] += clip[lo - start : hi - start]
        accel += accel_pulse(event.label, child, accel_rate_hz, event.t_s, n_accel, params)
    clip = AudioClip(np.clip(audio, -1.0, 1.0), rate_hz)
    if background != "none":
        clip = mix_background(clip, gen_background(background, seed, duration_s, rate_hz), noise_ratio)
    return Scenario(AccelTrace(accel, accel_rate_hz), clip, tuple(events))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doorslam.dsp import AccelTrace, AudioClip
from doorslam.model import default_spec, init_weights
from doorslam.trigger import (
    LEGAL_TRANSITIONS,
    CaptureComplete,
    DetectorState,
    Mode,
    TriggerConfig,
    TriggerFired,
    capture_window,
    detector_events,
    magnitude,
    run_device,
    select_window,
    step,
)
from oracles import exhaustive_window_scan


def spikes(times_and_g, duration_s=20.0, rate=100, base=0.1):
    s = np.zeros((int(duration_s * rate), 3))
    s[:, 0] = base
    for t, g in times_and_g:
        s[int(round(t * rate)), 0] = g
    return AccelTrace(s, rate)


class TestConfig:
    def test_defaults(self):
        cfg = TriggerConfig()
        assert (cfg.threshold_g, cfg.ignored_axis, cfg.capture_duration_s, cfg.window_s, cfg.refractory_s) == (
            1.8,
            "y",
            6.0,
            2.0,
            6.0,
        )

    @pytest.mark.parametrize(
        "kwargs",
        [{"threshold_g": 0}, {"window_s": 7.0}, {"refractory_s": 5.0}, {"ignored_axis": "w"}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TriggerConfig(**kwargs)

    def test_none_axis(self):
        assert TriggerConfig(ignored_axis="none").ignored_axis is None


class TestMagnitude:
    def test_ignore_y(self):
        assert magnitude((3, 4, 0), "y") == 3.0

    def test_unit(self):
        assert magnitude((0.6, 0, 0.8), "y") == pytest.approx(1.0, abs=1e-15)

    def test_all_axes(self):
        assert magnitude((1, 2, 2), None) == 3.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-1e6, 1e6))
    def test_y_invariance(self, x, y, z, y2):
        assert magnitude((x, y, z), "y") == magnitude((x, y2, z), "y")


class TestStep:
    def test_quiet_stream(self):
        assert detector_events(spikes([], 30.0)) == []

    def test_single_spike(self):
        events = detector_events(spikes([(1.0, 2.5)]))
        assert len(events) == 2
        fired, done = events
        assert isinstance(fired, TriggerFired) and fired.t == pytest.approx(1.0)
        assert isinstance(done, CaptureComplete) and done.t == pytest.approx(7.0) and done.peak_accel_g == 2.5

    def test_second_spike_inside_capture(self):
        events = detector_events(spikes([(1.0, 2.5), (3.0, 2.9)]))
        assert sum(isinstance(e, TriggerFired) for e in events) == 1
        assert events[-1].peak_accel_g == 2.9

    def test_rearms_after_refractory(self):
        events = detector_events(spikes([(1.0, 2.5), (7.5, 2.5)]))
        assert [e.t for e in events if isinstance(e, TriggerFired)] == pytest.approx([1.0, 7.5])

    def test_threshold_is_inclusive(self):
        state, event = step(DetectorState(), 0.0, (1.8, 0, 0))
        assert state.mode is Mode.CAPTURING and isinstance(event, TriggerFired)

    def test_time_must_increase(self):
        state, _ = step(DetectorState(), 1.0, (0, 0, 0))
        with pytest.raises(ValueError):
            step(state, 1.0, (0, 0, 0))

    def test_y_axis_spike_ignored(self):
        s = np.zeros((500, 3))
        s[100, 1] = 10.0
        assert detector_events(AccelTrace(s, 100)) == []

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.5, 3.0))
    def test_random_streams_follow_legal_transitions(self, seed, scale):
        rng = np.random.default_rng(seed)
        cfg = TriggerConfig()
        state = DetectorState()
        fired = 0
        n = 3000
        for i in range(n):
            t = i / 100
            new, event = step(state, t, rng.normal(0, scale, 3), cfg)
            if new.mode is not state.mode:
                assert (state.mode, new.mode) in LEGAL_TRANSITIONS
            if new.mode is not Mode.IDLE:
                assert new.peak_accel_g >= cfg.threshold_g
            if isinstance(event, TriggerFired):
                fired += 1
                assert state.mode is Mode.IDLE
            if isinstance(event, CaptureComplete):
                assert state.mode is Mode.CAPTURING and new.mode is Mode.REFRACTORY
            state = new
        assert fired <= math.ceil(n / 100 / cfg.refractory_s)


class TestSelectWindow:
    def clip(self, x, rate=1000):
        return AudioClip(np.asarray(x, dtype=float), rate)

    def test_centered_burst(self):
        x = np.zeros(6000)
        x[1500:3500] = 0.5  # a 2 s burst centred on 2.5 s
        win, offset = select_window(self.clip(x), 2.0, 0.1)
        assert offset == pytest.approx(1.5)
        assert np.array_equal(win.samples, x[1500:3500])

    def test_short_burst_earliest_covering_window(self):
        x = np.zeros(6000)
        x[2400:2600] = 0.5
        _, offset = select_window(self.clip(x), 2.0, 0.1)
        assert offset * 1000 == exhaustive_window_scan(x, 2000, 100)
        assert offset == pytest.approx(0.6)

    def test_silence_takes_first(self):
        _, offset = select_window(self.clip(np.zeros(6000)))
        assert offset == 0.0

    def test_burst_at_end(self):
        x = np.zeros(6000)
        x[5500:] = 0.3
        _, offset = select_window(self.clip(x))
        assert offset == pytest.approx(4.0)

    def test_capture_too_short(self):
        with pytest.raises(ValueError):
            select_window(self.clip(np.zeros(1999)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_exhaustive_scan(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 0.05, 6000)
        start = rng.integers(0, 6000)
        x[start : start + rng.integers(10, 1000)] += rng.uniform(0.1, 0.9)
        win, offset = select_window(self.clip(x))
        best = exhaustive_window_scan(x, 2000, 100)
        assert round(offset * 1000) == best
        assert np.array_equal(win.samples, x[best : best + 2000])


class TestCapture:
    def test_only_window_survives(self):
        audio = AudioClip(np.random.default_rng(0).uniform(-0.1, 0.1, 16000 * 10), 16000)
        accel = spikes([(1.0, 2.5)], 10.0)
        done = [e for e in detector_events(accel) if isinstance(e, CaptureComplete)][0]
        result = capture_window(audio, accel, done)
        assert result.window.duration_s == 2.0
        assert 0.0 <= result.window_offset_s <= 4.0
        assert result.accel_feature.rms_x > 0
        held = [v for v in vars(result).values() if isinstance(v, AudioClip)]
        assert sum(len(c) for c in held) == 32000

    def test_audio_must_cover_capture(self):
        audio = AudioClip(np.zeros(16000 * 6), 16000)
        accel = spikes([(1.0, 2.5)], 10.0)
        done = [e for e in detector_events(accel) if isinstance(e, CaptureComplete)][0]
        with pytest.raises(ValueError):
            capture_window(audio, accel, done)


@pytest.fixture(scope="module")
def untrained():
    spec = default_spec()
    return spec, init_weights(spec, 0)


class TestRunDevice:
    def test_flat_streams(self, untrained):
        spec, w = untrained
        events = run_device(spikes([], 20.0, base=0.0), AudioClip(np.zeros(16000 * 20), 16000), spec, w)
        assert events == []

    def test_three_spaced_events(self, untrained):
        spec, w = untrained
        accel = spikes([(2.0, 3.0), (22.0, 2.2), (42.0, 2.6)], 50.0)
        audio = AudioClip(np.random.default_rng(1).uniform(-0.1, 0.1, 16000 * 50), 16000)
        events = run_device(accel, audio, spec, w)
        assert [e.trigger_t_s for e in events] == pytest.approx([2.0, 22.0, 42.0])
        assert [e.peak_accel_g for e in events] == [3.0, 2.2, 2.6]
        # privacy: the only audio reachable from the results is one window per event
        assert sum(len(e.window) for e in events) == 3 * 32000
        assert all(set(e.to_dict()) == {"trigger_t_s", "label", "confidence", "peak_accel_g", "window_offset_s"} for e in events)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sub_threshold_streams_never_report(self, untrained, seed):
        spec, w = untrained
        rng = np.random.default_rng(seed)
        s = rng.uniform(-1.0, 1.0, (1000, 3))
        s[:, 1] *= 50.0  # the ignored axis may be arbitrarily large
        audio = AudioClip(rng.uniform(-0.5, 0.5, 16000 * 10), 16000)
        assert run_device(AccelTrace(s, 100), audio, spec, w) == []

    def test_truncated_audio_is_error(self, untrained):
        spec, w = untrained
        accel = spikes([(15.0, 3.0)], 20.0)
        with pytest.raises(ValueError):
            run_device(accel, AudioClip(np.zeros(16000 * 18), 16000), spec, w)

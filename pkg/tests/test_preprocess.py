import numpy as np
import pytest

from gaitdetect import dsp, preprocess
from gaitdetect.data import Epoch
from gaitdetect.errors import DataError

FS = 256.0
N = int(6.0 * FS)


class TestFootswitchOnset:
    def test_paper_offset(self):
        assert preprocess.onset_from_footswitch(12.0) == 11.5

    def test_boundary(self):
        assert preprocess.onset_from_footswitch(0.5) == 0.0

    def test_arithmetic(self):
        assert preprocess.onset_from_footswitch(100.25) == pytest.approx(99.75)

    def test_too_early(self):
        with pytest.raises(DataError):
            preprocess.onset_from_footswitch(0.3)


def _step_power_trial(step_time_s, n=int(8 * FS), amplitude=1.0):
    """Band-limited EMG-like trial whose envelope steps on at step_time_s."""
    rng = np.random.default_rng(99)
    t = np.arange(n) / FS
    carrier = np.sin(2 * np.pi * 110.0 * t + rng.uniform(0, 2 * np.pi))
    return amplitude * carrier * (t >= step_time_s)


class TestEmgOnset:
    def test_step_crossing_minus_100ms(self):
        trial = _step_power_trial(2.0)
        results = preprocess.onset_from_emg([(0, trial)], FS)
        assert len(results) == 1
        assert not results[0].rejected
        # onset = first crossing of 10% of averaged max, minus 100 ms
        assert results[0].onset_time_s == pytest.approx(1.9, abs=0.06)

    def test_zero_trial_rejected_among_active(self):
        active = _step_power_trial(2.0)
        silent = np.zeros_like(active)
        results = preprocess.onset_from_emg([(0, active), (1, silent)], FS)
        assert not results[0].rejected
        assert results[1].rejected
        assert results[1].reject_reason == "no EMG crossing"

    def test_scaling_invariance(self):
        trials = [(0, _step_power_trial(1.5)), (1, _step_power_trial(3.0))]
        base = preprocess.onset_from_emg(trials, FS)
        scaled = preprocess.onset_from_emg([(i, 250.0 * x) for i, x in trials], FS)
        for a, b in zip(base, scaled):
            assert a.onset_time_s == b.onset_time_s

    def test_unequal_lengths_rejected(self):
        with pytest.raises(DataError):
            preprocess.onset_from_emg([(0, np.zeros(100)), (1, np.zeros(90))], FS)

    def test_empty_input(self):
        with pytest.raises(DataError):
            preprocess.onset_from_emg([], FS)


class TestRejectProtocolViolations:
    def _onset(self, idx, t):
        return preprocess.OnsetResult(trial_index=idx, onset_time_s=t,
                                      method=preprocess.OnsetMethod.FOOTSWITCH)

    def test_onset_before_cue_rejected(self):
        out = preprocess.reject_protocol_violations([self._onset(0, 9.0)], [10.0])
        assert out[0].rejected
        assert out[0].reject_reason == "onset before cue"
        assert out[0].onset_time_s == 9.0  # value preserved, only flagged

    def test_onset_after_cue_kept(self):
        out = preprocess.reject_protocol_violations([self._onset(0, 12.0)], [10.0])
        assert not out[0].rejected

    def test_clean_dataset_zero_rejections(self):
        onsets = [self._onset(i, 10.0 * i + 7.5) for i in range(20)]
        cues = [10.0 * i + 5.5 for i in range(20)]
        out = preprocess.reject_protocol_violations(onsets, cues)
        assert sum(o.rejected for o in out) == 0

    def test_count_mismatch(self):
        with pytest.raises(DataError):
            preprocess.reject_protocol_violations([self._onset(0, 1.0)], [1.0, 2.0])

    def test_rejected_requires_reason(self):
        with pytest.raises(DataError):
            preprocess.OnsetResult(trial_index=0, onset_time_s=1.0,
                                   method=preprocess.OnsetMethod.EMG, rejected=True)


def _epochs_with_channel(traces):
    """One-channel epochs named Cz from a list of time series."""
    return [
        Epoch(trial_index=i, onset_time_s=10.0, data=x[None, :],
              sampling_rate_hz=FS, channel_names=("Cz",))
        for i, x in enumerate(traces)
    ]


class TestEffectSize:
    def test_self_normalization_near_zero_in_baseline(self):
        rng = np.random.default_rng(0)
        epochs = _epochs_with_channel([rng.standard_normal(N) for _ in range(6)])
        es = preprocess.effect_size(epochs, "Cz", "amplitude", FS)
        t = (np.arange(N) - (N - 1)) / FS
        mask = (t >= -5.5) & (t <= -4.0)
        assert abs(es.values[mask].mean()) < 1e-9
        assert es.values[mask].std() == pytest.approx(1.0, abs=1e-9)

    def test_two_sigma_step(self):
        rng = np.random.default_rng(1)
        base = rng.standard_normal(N)
        t = (np.arange(N) - (N - 1)) / FS
        mask = (t >= -5.5) & (t <= -4.0)
        sigma = base[mask].std()
        traces = [base + 2.0 * sigma * (t > -1.5) for _ in range(3)]
        es = preprocess.effect_size(_epochs_with_channel(traces), "Cz", "amplitude", FS)
        late = es.values[t > -1.4]
        base_vals = preprocess.effect_size(_epochs_with_channel([base] * 3),
                                           "Cz", "amplitude", FS).values[t > -1.4]
        assert np.allclose(late - base_vals, 2.0, atol=1e-9)

    def test_offset_invariance(self):
        rng = np.random.default_rng(2)
        traces = [rng.standard_normal(N) for _ in range(4)]
        a = preprocess.effect_size(_epochs_with_channel(traces), "Cz", "amplitude", FS)
        b = preprocess.effect_size(
            _epochs_with_channel([x + 42.0 for x in traces]), "Cz", "amplitude", FS)
        assert np.allclose(a.values, b.values, atol=1e-9)

    def test_phase_plv_kind_uses_plv_trace(self):
        rng = np.random.default_rng(3)
        t = np.arange(N) / FS
        jittered = [np.sin(2 * np.pi * 2.0 * t + rng.uniform(0, 0.2)) for _ in range(4)]
        es = preprocess.effect_size(_epochs_with_channel(jittered), "Cz", "phase_plv", FS)
        assert es.feature_kind == preprocess.FeatureKind.PHASE_PLV
        assert es.values.size == N

    def test_requires_two_epochs(self):
        with pytest.raises(DataError):
            preprocess.effect_size(_epochs_with_channel([np.zeros(N)]), "Cz",
                                   "amplitude", FS)

    def test_degenerate_baseline(self):
        traces = [np.ones(N) for _ in range(3)]
        with pytest.raises(DataError):
            preprocess.effect_size(_epochs_with_channel(traces), "Cz", "amplitude", FS)


class TestEnvelopePower:
    def test_envelope_of_modulated_carrier(self):
        t = np.arange(int(4 * FS)) / FS
        env = 1.0 + 0.5 * np.sin(2 * np.pi * 0.5 * t)
        x = env * np.sin(2 * np.pi * 60.0 * t)
        z = dsp.analytic_signal(x)
        interior = slice(256, -256)
        assert np.allclose(z.modulus[interior], env[interior], rtol=0.05)

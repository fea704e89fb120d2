"""Ground-truth synthetic sessions for exercising the full pipeline.

Each trial consists of 1/f-plus-white background noise, a slow carrier
whose instantaneous phase is smoothly steered onto a common track before
movement onset (phase reset), a negative slow-potential ramp on central
channels (amplitude correlate), and a high-frequency EMG burst starting at
onset. All randomness derives from the configured seed through per-trial
splitmix streams, so generation is a pure function of the configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Event, EventKind, Recording
from .errors import DataError
from .features import DEFAULT_CHANNELS

EMG_CHANNEL = "EMG"

# fixed scalp gain map for the injected templates, peak at Cz
DEFAULT_TOPOGRAPHY = {
    "Cz": 1.0, "C3": 0.8, "C4": 0.8, "FC1": 0.7, "FC2": 0.7,
    "Fz": 0.6, "CP1": 0.4, "CP2": 0.4, "F3": 0.4, "F4": 0.4,
}


def splitmix64(*values: int) -> int:
    """Deterministic 64-bit stream derivation (splitmix64 finalizer chain)."""
    state = 0
    for v in values:
        state = (state + int(v) + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        state = z ^ (z >> 31)
    return state


def _rng(*values: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(splitmix64(*values)))


@dataclass(frozen=True)
class SynthConfig:
    n_trials: int = 100
    fs: float = 256.0
    channels: tuple = DEFAULT_CHANNELS
    seed: int = 0

    # trial timing (seconds): cue inside each block, onset = cue + wait
    trial_block_s: float = 10.0
    cue_offset_s: float = 5.5
    wait_min_s: float = 1.5
    wait_max_s: float = 2.5

    # amplitude correlate: negative ramp peaking at onset
    mrcp_amplitude_uv: float = 20.0
    mrcp_onset_lead_s: float = 1.0

    # phase correlate: carrier steered onto a shared track before onset
    carrier_freq_hz: float = 0.5
    carrier_freq_jitter_hz: float = 0.0  # per-trial frequency half-range
    carrier_amplitude_uv: float = 5.0
    carrier_am_depth: float = 2.5  # per-trial amplitude jitter of the carrier
    carrier_am_rate_hz: float = 0.6  # knot density of the amplitude jitter
    phase_reset_lead_s: float = 1.5  # steering starts here before onset
    phase_lock_lead_s: float = 1.4  # fully on the shared track from here on
    reset_target_phase_rad: float = 2.6  # carrier phase at onset, in [pi/2, pi]

    # background noise: 1/f^alpha plus a white floor
    noise_exponent: float = 1.0
    noise_rms_uv: float = 3.0
    white_floor_db: float = -20.0

    # session-level confound on the amplitude correlate (set for "drifted"
    # follow-up sessions): the ramp depth decays linearly over the session,
    # losing this many microvolts by the final trial, as with slow
    # electrode-gel drying; the carrier phase correlate is untouched
    amplitude_drift_uv: float = 0.0

    emg_rise_ms: float = 100.0
    emg_onset_delay_ms: float = 100.0  # electromechanical lag of the burst
    emg_burst_amplitude: float = 1.0
    emg_baseline: float = 0.02
    include_footswitch: bool = True

    violation_fraction: float = 0.0

    def validate(self) -> None:
        if self.n_trials < 1:
            raise DataError("n_trials must be >= 1")
        if self.fs <= 2 * max(self.carrier_freq_hz, 125.0):
            raise DataError("sampling rate too low for the generated frequencies")
        if not (0 < self.phase_lock_lead_s <= self.phase_reset_lead_s < 6.0):
            raise DataError("phase leads must satisfy 0 < lock <= reset < 6 s")
        if not 0 < self.mrcp_onset_lead_s < 6.0:
            raise DataError("mrcp_onset_lead_s must lie in (0, 6) s")
        if not self.wait_min_s >= 1.5:
            raise DataError("protocol requires waiting at least 1.5 s after the cue")
        if self.wait_max_s < self.wait_min_s:
            raise DataError("wait_max_s < wait_min_s")
        if self.cue_offset_s + self.wait_max_s + 1.5 > self.trial_block_s:
            raise DataError("trial block too short for cue + wait + post-onset activity")


@dataclass(frozen=True)
class TrialTruth:
    trial_index: int
    cue_time_s: float
    onset_time_s: float
    violated: bool = False


@dataclass(frozen=True)
class GroundTruth:
    trials: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))

    @property
    def onset_times(self):
        return [t.onset_time_s for t in self.trials]

    @property
    def cue_times(self):
        return [t.cue_time_s for t in self.trials]


def sample_ground_truth(cfg: SynthConfig) -> GroundTruth:
    """Cue/onset schedule; onset times are snapped to the sample grid."""
    cfg.validate()
    trials = []
    for i in range(cfg.n_trials):
        rng = _rng(cfg.seed, 1, i)
        block_start = i * cfg.trial_block_s
        cue = block_start + cfg.cue_offset_s
        wait = rng.uniform(cfg.wait_min_s, cfg.wait_max_s)
        onset = round((cue + wait) * cfg.fs) / cfg.fs
        trials.append(TrialTruth(trial_index=i, cue_time_s=cue, onset_time_s=onset))
    return GroundTruth(trials=tuple(trials))


def inject_protocol_violations(gt: GroundTruth, fraction: float, seed: int) -> GroundTruth:
    """Move a random subset of onsets before their cues and mark them."""
    if not 0.0 <= fraction <= 1.0:
        raise DataError("fraction must lie in [0, 1]")
    n = len(gt.trials)
    n_violate = int(round(fraction * n))
    if n_violate == 0:
        return gt
    rng = _rng(seed, 2)
    chosen = set(rng.choice(n, size=n_violate, replace=False).tolist())
    trials = []
    for t in gt.trials:
        if t.trial_index in chosen:
            onset = t.cue_time_s - 0.3
            trials.append(replace(t, onset_time_s=onset, violated=True))
        else:
            trials.append(t)
    return GroundTruth(trials=tuple(trials))


def _colored_noise(rng: np.random.Generator, n: int, exponent: float) -> np.ndarray:
    """Unit-RMS 1/f^exponent noise via spectral shaping."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    shaping = np.ones_like(freqs)
    shaping[1:] = freqs[1:] ** (-exponent / 2.0)
    shaping[0] = 0.0
    shaped = np.fft.irfft(spectrum * shaping, n)
    rms = np.sqrt(np.mean(shaped ** 2))
    return shaped / rms if rms > 0 else shaped


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _wrap(angle: float) -> float:
    return float(np.angle(np.exp(1j * angle)))


def _carrier_phase_track(cfg: SynthConfig, t: np.ndarray, onset: float,
                         theta0: float, freq_hz: float = None) -> np.ndarray:
    """Free-running phase smoothly steered onto the pre-onset track.

    Every trial's track reaches ``reset_target_phase_rad`` exactly at onset
    and is ridden from ``phase_lock_lead_s`` before onset. With a per-trial
    frequency the tracks fan out going back in time, so inter-trial phase
    coherence is tightest at onset and relaxes earlier.
    """
    w = 2.0 * np.pi * (cfg.carrier_freq_hz if freq_hz is None else freq_hz)
    free = theta0 + w * (t - t[0])
    target_track = cfg.reset_target_phase_rad - w * (onset - t)
    t_start = onset - cfg.phase_reset_lead_s
    t_lock = onset - cfg.phase_lock_lead_s
    # offset between the free-run and the target track at steering start
    i_start = np.searchsorted(t, t_start)
    if i_start >= len(t):
        return free
    delta = _wrap(target_track[i_start] - free[i_start])
    span = max(t_lock - t_start, 1.0 / cfg.fs)
    u = (t - t_start) / span
    phase = free + delta * _smoothstep(u)
    locked = t >= t_lock
    phase[locked] = target_track[locked]
    return phase


def _mrcp_template(t: np.ndarray, onset: float, lead: float) -> np.ndarray:
    """0 -> -1 ramp peaking at onset, short recovery after.

    Squared half-cosine: a shallow early tail with the steep negativity
    concentrated just before onset, as in recorded pre-movement potentials.
    """
    template = np.zeros_like(t)
    ramp = (t >= onset - lead) & (t < onset)
    u = (t[ramp] - (onset - lead)) / lead
    template[ramp] = -(0.5 * (1.0 - np.cos(np.pi * u))) ** 2
    hold = (t >= onset) & (t < onset + 0.5)
    template[hold] = -1.0
    recover = (t >= onset + 0.5) & (t < onset + 1.5)
    u = (t[recover] - (onset + 0.5)) / 1.0
    template[recover] = -0.5 * (1.0 + np.cos(np.pi * u))
    return template


def _slow_envelope(rng: np.random.Generator, t: np.ndarray, depth: float,
                   rate_hz: float = 0.3) -> np.ndarray:
    """Positive per-trial amplitude jitter of the carrier."""
    if depth <= 0:
        return np.ones_like(t)
    n_knots = max(3, int((t[-1] - t[0]) * rate_hz) + 2)
    knots = rng.standard_normal(n_knots)
    knot_t = np.linspace(t[0], t[-1], n_knots)
    env = 1.0 + depth * np.interp(t, knot_t, knots)
    return np.clip(env, 0.1, None)


def _emg_band_noise(rng: np.random.Generator, n: int, fs: float) -> np.ndarray:
    """Unit-RMS noise restricted to the 100-125 Hz EMG band."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    spectrum[(freqs < 100.0) | (freqs > 125.0)] = 0.0
    shaped = np.fft.irfft(spectrum, n)
    rms = np.sqrt(np.mean(shaped ** 2))
    return shaped / rms if rms > 0 else shaped


def render_session(cfg: SynthConfig, gt: GroundTruth, session_id: str = "synthetic") -> Recording:
    """Render a Recording for a cue/onset schedule."""
    cfg.validate()
    fs = cfg.fs
    n_total = int(round(cfg.n_trials * cfg.trial_block_s * fs))
    channels = tuple(cfg.channels) + (EMG_CHANNEL,)
    samples = np.zeros((len(channels), n_total))
    gains = np.array([DEFAULT_TOPOGRAPHY.get(name, 0.3) for name in cfg.channels])

    white_scale = 10.0 ** (cfg.white_floor_db / 20.0)
    for ci in range(len(cfg.channels)):
        rng = _rng(cfg.seed, 3, ci)
        pink = _colored_noise(rng, n_total, cfg.noise_exponent)
        white = rng.standard_normal(n_total)
        samples[ci] = cfg.noise_rms_uv * (pink + white_scale * white)

    emg = np.zeros(n_total)
    events = []
    for truth in gt.trials:
        i = truth.trial_index
        rng = _rng(cfg.seed, 4, i)
        start = int(round(i * cfg.trial_block_s * fs))
        stop = min(int(round((i + 1) * cfg.trial_block_s * fs)), n_total)
        t = np.arange(start, stop) / fs
        onset = truth.onset_time_s

        theta0 = rng.uniform(-np.pi, np.pi)
        freq = cfg.carrier_freq_hz + rng.uniform(-1.0, 1.0) * cfg.carrier_freq_jitter_hz
        phase = _carrier_phase_track(cfg, t, onset, theta0, freq)
        envelope = _slow_envelope(rng, t, cfg.carrier_am_depth, cfg.carrier_am_rate_hz)
        carrier = cfg.carrier_amplitude_uv * envelope * np.cos(phase)
        mrcp_uv = cfg.mrcp_amplitude_uv
        if cfg.amplitude_drift_uv > 0.0 and cfg.n_trials > 1:
            decay = cfg.amplitude_drift_uv * i / (cfg.n_trials - 1)
            mrcp_uv = max(0.0, mrcp_uv - decay)
        mrcp = mrcp_uv * _mrcp_template(t, onset, cfg.mrcp_onset_lead_s)
        trial_eeg = carrier + mrcp
        samples[: len(cfg.channels), start:stop] += gains[:, None] * trial_eeg[None, :]

        burst_start = onset + cfg.emg_onset_delay_ms / 1000.0
        burst_env = 1.0 / (1.0 + np.exp(-(t - burst_start) / (cfg.emg_rise_ms / 1000.0 / 4.0)))
        burst_env[t < burst_start - 0.2] = 0.0
        emg_noise = _emg_band_noise(rng, len(t), fs)
        baseline_noise = _emg_band_noise(rng, len(t), fs)
        emg[start:stop] = (cfg.emg_baseline * baseline_noise
                           + cfg.emg_burst_amplitude * burst_env * emg_noise)

        events.append(Event(kind=EventKind.CUE, time_s=truth.cue_time_s, trial_index=i))
        if cfg.include_footswitch:
            events.append(Event(kind=EventKind.FOOTSWITCH_RELEASE,
                                time_s=onset + 0.5, trial_index=i))
        if (i + 1) % 10 == 0:
            events.append(Event(kind=EventKind.BLOCK_BREAK,
                                time_s=min(stop / fs, n_total / fs), trial_index=i))

    samples[len(cfg.channels)] = emg
    return Recording(
        session_id=session_id,
        sampling_rate_hz=fs,
        channel_names=channels,
        samples=samples,
        emg_channel_indices=(len(cfg.channels),),
        event_list=tuple(sorted(events, key=lambda e: (e.time_s, e.kind.value))),
    )


def generate_session(cfg: SynthConfig, session_id: str = "synthetic"):
    """Sample a schedule (injecting violations when configured) and render it.

    Returns (Recording, GroundTruth); deterministic given the config.
    """
    gt = sample_ground_truth(cfg)
    if cfg.violation_fraction > 0.0:
        gt = inject_protocol_violations(gt, cfg.violation_fraction, cfg.seed)
    return render_session(cfg, gt, session_id=session_id), gt

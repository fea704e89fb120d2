"""Movement-onset detection, protocol-violation rejection, effect sizes.

Onsets come either from footswitch release events (release minus 0.5 s) or
from EMG: the Hilbert envelope power of band-passed EMG is averaged across
trials, a threshold at 10% of the averaged trace's maximum is derived, and
each trial's onset is placed 100 ms before its first crossing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import dsp
from .data import Epoch
from .errors import DataError

BASELINE_WINDOW_S = (-5.5, -4.0)
EMG_THRESHOLD_FRACTION = 0.10
EMG_PRE_CROSSING_S = 0.100
DEFAULT_SMOOTH_MS = 50.0


class OnsetMethod(str, Enum):
    FOOTSWITCH = "footswitch"
    EMG = "emg"


class FeatureKind(str, Enum):
    AMPLITUDE = "amplitude"
    PHASE_PLV = "phase_plv"
    POWER = "power"


@dataclass(frozen=True)
class OnsetResult:
    trial_index: int
    onset_time_s: float
    method: OnsetMethod
    rejected: bool = False
    reject_reason: str | None = None

    def __post_init__(self):
        if self.rejected and not self.reject_reason:
            raise DataError("rejected onset must carry a reject_reason")


@dataclass(frozen=True)
class EffectSizeSeries:
    channel: str
    feature_kind: FeatureKind
    values: np.ndarray  # baseline standard-deviation units, one per epoch sample
    baseline_window_s: tuple[float, float] = BASELINE_WINDOW_S

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def onset_from_footswitch(release_time_s: float) -> float:
    """Movement onset = footswitch release minus half a second."""
    if release_time_s < 0.5:
        raise DataError(f"footswitch release at {release_time_s} s leaves no room for onset")
    return release_time_s - 0.5


def _envelope_power(x: np.ndarray, fs: float, smooth_ms: float) -> np.ndarray:
    power = dsp.analytic_signal(x).modulus ** 2
    width = max(1, int(round(smooth_ms / 1000.0 * fs)))
    if width > 1:
        kernel = np.full(width, 1.0 / width)
        power = np.convolve(power, kernel, mode="same")
    return power


def onset_from_emg(emg_trials, fs: float, smooth_ms: float = DEFAULT_SMOOTH_MS):
    """Per-trial EMG onsets from the averaged Hilbert-envelope power.

    ``emg_trials`` is a list of (trial_index, samples) with trials
    time-locked to their cue and already band-passed to the EMG band.
    Trials whose own power trace never crosses the threshold are returned
    rejected.
    """
    if not emg_trials:
        raise DataError("onset_from_emg requires at least one trial")
    traces = []
    for _idx, x in emg_trials:
        traces.append(_envelope_power(np.asarray(x, dtype=float), fs, smooth_ms))
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise DataError("EMG trials must have equal length")
    avg = np.mean(traces, axis=0)
    threshold = EMG_THRESHOLD_FRACTION * float(avg.max())
    results = []
    for (trial_index, _x), power in zip(emg_trials, traces):
        above = np.flatnonzero(power > threshold)
        if above.size == 0:
            results.append(
                OnsetResult(
                    trial_index=trial_index,
                    onset_time_s=float("nan"),
                    method=OnsetMethod.EMG,
                    rejected=True,
                    reject_reason="no EMG crossing",
                )
            )
        else:
            onset = above[0] / fs - EMG_PRE_CROSSING_S
            results.append(
                OnsetResult(trial_index=trial_index, onset_time_s=onset, method=OnsetMethod.EMG)
            )
    return results


def reject_protocol_violations(onsets, cue_times):
    """Reject trials whose onset precedes the movement-preparation cue."""
    if len(onsets) != len(cue_times):
        raise DataError(f"{len(onsets)} onsets but {len(cue_times)} cue times")
    out = []
    for onset, cue in zip(onsets, cue_times):
        if onset.rejected:
            out.append(onset)
        elif onset.onset_time_s < cue:
            out.append(
                OnsetResult(
                    trial_index=onset.trial_index,
                    onset_time_s=onset.onset_time_s,
                    method=onset.method,
                    rejected=True,
                    reject_reason="onset before cue",
                )
            )
        else:
            out.append(onset)
    return out


def _baseline_mask(epoch_len: int, fs: float, window_s) -> np.ndarray:
    t = (np.arange(epoch_len) - (epoch_len - 1)) / fs  # last sample is t = 0
    return (t >= window_s[0]) & (t <= window_s[1])


def effect_size(epochs, channel: str, feature_kind: FeatureKind, fs: float,
                baseline_window_s=BASELINE_WINDOW_S) -> EffectSizeSeries:
    """Baseline-normalized deviation of a trial-averaged feature trace.

    amplitude: trial-averaged band-passed signal; power: trial-averaged
    instantaneous power in dB; phase_plv: the across-trial PLV trace. The
    averaged trace has its baseline mean subtracted and is divided by the
    baseline standard deviation.
    """
    feature_kind = FeatureKind(feature_kind)
    if len(epochs) < 2:
        raise DataError("effect_size requires at least 2 epochs")
    rows = [ep.channel(channel) for ep in epochs]
    if feature_kind == FeatureKind.AMPLITUDE:
        trace = np.mean(rows, axis=0)
    elif feature_kind == FeatureKind.POWER:
        trace = np.mean(
            [dsp.instantaneous_power_db(dsp.analytic_signal(r)) for r in rows], axis=0
        )
    else:
        phases = np.vstack([dsp.instantaneous_phase(dsp.analytic_signal(r)) for r in rows])
        trace = dsp.plv(phases)
    mask = _baseline_mask(len(trace), fs, baseline_window_s)
    if not mask.any():
        raise DataError(f"baseline window {baseline_window_s} s outside the epoch")
    mean = float(trace[mask].mean())
    std = float(trace[mask].std(ddof=0))
    if std == 0.0:
        raise DataError("degenerate baseline: zero standard deviation")
    return EffectSizeSeries(
        channel=channel,
        feature_kind=feature_kind,
        values=(trace - mean) / std,
        baseline_window_s=tuple(baseline_window_s),
    )

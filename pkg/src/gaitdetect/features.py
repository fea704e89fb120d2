"""Sliding-window segmentation and feature extraction.

Epochs (-6..0 s) are cut into 1 s windows stepped by 125 ms: 41 windows per
trial under the defaults, the last 8 of which (window center later than
-1.5 s) form the pre-movement class. Two feature views are produced per
window: raw decimated amplitude samples, and the sine/cosine decomposition
of the instantaneous phase. Each feature vector is normalized to unit
Euclidean length.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .data import Epoch
from .errors import DataError

LABEL_RELAX = "relax"
LABEL_PREMOVEMENT = "premovement"

DEFAULT_CHANNELS = ("F3", "Fz", "F4", "FC1", "FC2", "C3", "Cz", "C4", "CP1", "CP2")

_COUNT_EPS = 1e-9


@dataclass(frozen=True)
class WindowSpec:
    length_s: float = 1.0
    step_s: float = 0.125
    epoch_span_s: tuple[float, float] = (-6.0, 0.0)
    premovement_boundary_s: float = -1.5

    @property
    def n_windows(self) -> int:
        span = self.epoch_span_s[1] - self.epoch_span_s[0]
        count = (span - self.length_s) / self.step_s + 1.0
        if abs(count - round(count)) > _COUNT_EPS:
            raise DataError(
                f"window spec does not tile the epoch: span {span} s, "
                f"length {self.length_s} s, step {self.step_s} s"
            )
        return int(round(count))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: str
    trial_index: int
    window_index: int  # 1-based
    window_center_s: float
    degenerate: bool = False  # all-zero window, left unnormalized

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class WindowDataset:
    """Per-trial sequences of labeled window feature vectors for one view."""

    kind: str  # "amplitude" or "phase"
    channels: tuple[str, ...]
    trials: tuple[tuple[int, tuple[FeatureVector, ...]], ...]
    spec: WindowSpec = field(default_factory=WindowSpec)

    def __post_init__(self):
        trials = tuple((t, tuple(fvs)) for t, fvs in self.trials)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "channels", tuple(self.channels))
        n_windows = self.spec.n_windows
        dims = set()
        for trial_index, fvs in trials:
            if len(fvs) != n_windows:
                raise DataError(
                    f"trial {trial_index} has {len(fvs)} windows, expected {n_windows}"
                )
            dims.update(fv.values.size for fv in fvs)
        if len(dims) > 1:
            raise DataError(f"inconsistent feature dimensionality: {sorted(dims)}")

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def n_features(self) -> int:
        return self.trials[0][1][0].values.size if self.trials else 0

    def to_arrays(self):
        """Flatten to (X, y, trial_pos, window_index); y is +-1 with
        pre-movement positive; trial_pos is the 0-based chronological trial
        position within this dataset."""
        X, y, trial_pos, window_idx = [], [], [], []
        for pos, (_, fvs) in enumerate(self.trials):
            for fv in fvs:
                X.append(fv.values)
                y.append(1 if fv.label == LABEL_PREMOVEMENT else -1)
                trial_pos.append(pos)
                window_idx.append(fv.window_index)
        return (
            np.asarray(X, dtype=float),
            np.asarray(y, dtype=int),
            np.asarray(trial_pos, dtype=int),
            np.asarray(window_idx, dtype=int),
        )

    def subset(self, trial_positions) -> "WindowDataset":
        trials = tuple(self.trials[p] for p in trial_positions)
        return WindowDataset(kind=self.kind, channels=self.channels, trials=trials, spec=self.spec)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = self.n_features
            writer.writerow(
                ["trial_index", "window_index", "label", "center_s"]
                + [f"f{i + 1}" for i in range(dim)]
            )
            for trial_index, fvs in self.trials:
                for fv in fvs:
                    writer.writerow(
                        [trial_index, fv.window_index, fv.label, repr(float(fv.window_center_s))]
                        + [repr(float(v)) for v in fv.values]
                    )

    @classmethod
    def read_csv(cls, path: str, kind: str, channels=(), spec: WindowSpec | None = None) -> "WindowDataset":
        spec = spec or WindowSpec()
        by_trial: dict[int, list[FeatureVector]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:4] != ["trial_index", "window_index", "label", "center_s"]:
                raise DataError(f"{path}: not a window-dataset CSV")
            for row in reader:
                trial_index = int(row[0])
                fv = FeatureVector(
                    values=np.asarray([float(v) for v in row[4:]]),
                    label=row[2],
                    trial_index=trial_index,
                    window_index=int(row[1]),
                    window_center_s=float(row[3]),
                )
                by_trial.setdefault(trial_index, []).append(fv)
        trials = tuple(
            (t, tuple(sorted(fvs, key=lambda fv: fv.window_index)))
            for t, fvs in sorted(by_trial.items())
        )
        return cls(kind=kind, channels=tuple(channels), trials=trials, spec=spec)


def make_windows(epoch_length_s: float, spec: WindowSpec | None = None):
    """Window layout over one epoch: list of (start_s, end_s, center_s, label).

    A window is pre-movement iff its center lies strictly after the
    boundary; under the defaults that is exactly the last 8 of 41 windows.
    """
    spec = spec or WindowSpec()
    if abs(epoch_length_s - (spec.epoch_span_s[1] - spec.epoch_span_s[0])) > _COUNT_EPS:
        raise DataError(
            f"epoch length {epoch_length_s} s does not match window spec span {spec.epoch_span_s}"
        )
    windows = []
    for i in range(spec.n_windows):
        start = spec.epoch_span_s[0] + i * spec.step_s
        end = start + spec.length_s
        center = start + spec.length_s / 2.0
        label = LABEL_PREMOVEMENT if center > spec.premovement_boundary_s else LABEL_RELAX
        windows.append((start, end, center, label))
    return windows


def _window_sample_slices(epoch: Epoch, spec: WindowSpec):
    fs = epoch.sampling_rate_hz
    n = epoch.n_samples
    length = int(round(spec.length_s * fs))
    offset = spec.epoch_span_s[0]
    slices = []
    for start_s, _end_s, _c, _l in make_windows(spec.epoch_span_s[1] - offset, spec):
        start = int(round((start_s - offset) * fs))
        stop = start + length
        if stop > n:
            raise DataError("window extends past the epoch")
        slices.append(slice(start, stop))
    return slices


def _select_channels(epoch: Epoch, channels):
    if not epoch.channel_names:
        raise DataError("epoch carries no channel names; cannot select channels")
    rows = []
    for name in channels:
        if name not in epoch.channel_names:
            raise DataError(f"unknown channel {name!r}")
        rows.append(epoch.channel_names.index(name))
    return epoch.data[rows, :]


def _normalize(values: np.ndarray):
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return values, True
    return values / norm, False


def _assemble(epoch: Epoch, spec: WindowSpec, blocks_per_window):
    windows = make_windows(spec.epoch_span_s[1] - spec.epoch_span_s[0], spec)
    out = []
    for (w_i, (_s, _e, center, label)), raw in zip(enumerate(windows, start=1), blocks_per_window):
        values, degenerate = _normalize(raw)
        out.append(
            FeatureVector(
                values=values,
                label=label,
                trial_index=epoch.trial_index,
                window_index=w_i,
                window_center_s=center,
                degenerate=degenerate,
            )
        )
    return out


def extract_amplitude_features(epoch: Epoch, spec: WindowSpec | None = None,
                               channels=DEFAULT_CHANNELS, decimation: int = 16):
    """Decimated raw samples per window, concatenated over channels, unit-norm.

    The epoch is expected to be band-passed to the analysis band already.
    """
    spec = spec or WindowSpec()
    data = _select_channels(epoch, channels)
    window_len = int(round(spec.length_s * epoch.sampling_rate_hz))
    if decimation < 1 or window_len % decimation != 0:
        raise DataError(f"decimation {decimation} must divide the window length {window_len}")
    slices = _window_sample_slices(epoch, spec)
    blocks = [data[:, sl][:, ::decimation].ravel() for sl in slices]
    return _assemble(epoch, spec, blocks)


def extract_phase_features(epoch: Epoch, spec: WindowSpec | None = None,
                           channels=DEFAULT_CHANNELS, decimation: int = 16):
    """cos(phi) and sin(phi) of the decimated instantaneous phase, unit-norm.

    The phase is computed over the full epoch (one Hilbert transform per
    channel) to keep transform edge effects away from the analysis windows;
    dimensionality is twice the amplitude view's.
    """
    spec = spec or WindowSpec()
    data = _select_channels(epoch, channels)
    window_len = int(round(spec.length_s * epoch.sampling_rate_hz))
    if decimation < 1 or window_len % decimation != 0:
        raise DataError(f"decimation {decimation} must divide the window length {window_len}")
    phases = np.vstack([dsp.instantaneous_phase(dsp.analytic_signal(ch)) for ch in data])
    slices = _window_sample_slices(epoch, spec)
    blocks = []
    for sl in slices:
        phi = phases[:, sl][:, ::decimation]
        blocks.append(np.concatenate([np.cos(phi).ravel(), np.sin(phi).ravel()]))
    return _assemble(epoch, spec, blocks)


def build_window_dataset(epochs, kind: str, spec: WindowSpec | None = None,
                         channels=DEFAULT_CHANNELS, decimation: int = 16) -> WindowDataset:
    """Extract one feature view for a chronological list of epochs."""
    spec = spec or WindowSpec()
    extract = {"amplitude": extract_amplitude_features, "phase": extract_phase_features}
    if kind not in extract:
        raise DataError(f"unknown feature kind {kind!r}")
    trials = tuple(
        (ep.trial_index, tuple(extract[kind](ep, spec, channels, decimation))) for ep in epochs
    )
    return WindowDataset(kind=kind, channels=tuple(channels), trials=trials, spec=spec)

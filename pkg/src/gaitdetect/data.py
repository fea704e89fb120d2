"""Session data model and the CSV session format.

A session on disk is three files sharing a base path:

* ``<base>.header.csv``  -- rows ``key,value`` with keys ``sampling_rate_hz``,
  ``channels`` (``;``-separated names) and ``emg_channels`` (``;``-separated
  names, may be empty).
* ``<base>.data.csv``    -- one row per sample, one column per channel, in
  header channel order, decimal text.
* ``<base>.events.csv``  -- header row ``kind,time_s,trial_index`` then one
  row per event.

All times are seconds from the start of the file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DataError, EpochOutOfBoundsError, ParseError

EPOCH_SPAN_S = 6.0

HEADER_SUFFIX = ".header.csv"
DATA_SUFFIX = ".data.csv"
EVENTS_SUFFIX = ".events.csv"


class EventKind(str, Enum):
    CUE = "cue"
    FOOTSWITCH_RELEASE = "footswitch_release"
    ONSET = "onset"
    BLOCK_BREAK = "block_break"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    time_s: float
    trial_index: int

    def __post_init__(self):
        if self.trial_index < 0:
            raise DataError(f"event trial_index must be >= 0, got {self.trial_index}")


@dataclass(frozen=True)
class Recording:
    """Multi-channel time series (EEG + EMG) with event markers.

    ``samples`` is a read-only [channels x time] float array; EEG channels in
    microvolts, EMG channels in millivolts.
    """

    session_id: str
    sampling_rate_hz: float
    channel_names: tuple[str, ...]
    samples: np.ndarray
    emg_channel_indices: tuple[int, ...] = ()
    event_list: tuple[Event, ...] = ()

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise DataError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise DataError(f"samples must be [channels x time], got shape {samples.shape}")
        if samples.shape[0] != len(self.channel_names):
            raise DataError(
                f"{len(self.channel_names)} channel names but {samples.shape[0]} sample rows"
            )
        if samples.shape[1] < 1:
            raise DataError("recording must contain at least one sample")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise DataError("channel names must be unique")
        for idx in self.emg_channel_indices:
            if not 0 <= idx < samples.shape[0]:
                raise DataError(f"EMG channel index {idx} out of range")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "emg_channel_indices", tuple(self.emg_channel_indices))
        object.__setattr__(self, "event_list", tuple(self.event_list))
        duration = samples.shape[1] / self.sampling_rate_hz
        for ev in self.event_list:
            if not 0.0 <= ev.time_s <= duration:
                raise DataError(
                    f"event at {ev.time_s} s outside recording duration {duration:.3f} s"
                )

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz

    @property
    def eeg_channel_indices(self) -> tuple[int, ...]:
        emg = set(self.emg_channel_indices)
        return tuple(i for i in range(self.n_channels) if i not in emg)

    def channel_index(self, name: str) -> int:
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise DataError(f"unknown channel {name!r}") from None

    def events_of_kind(self, kind: EventKind) -> list[Event]:
        return [ev for ev in self.event_list if ev.kind == kind]

    def with_samples(self, samples: np.ndarray) -> "Recording":
        """Copy of this recording with replaced sample matrix (same layout)."""
        return Recording(
            session_id=self.session_id,
            sampling_rate_hz=self.sampling_rate_hz,
            channel_names=self.channel_names,
            samples=samples,
            emg_channel_indices=self.emg_channel_indices,
            event_list=self.event_list,
        )


@dataclass(frozen=True)
class Epoch:
    """One trial's [channels x time] segment covering -6..0 s before onset.

    The last sample corresponds to t = 0 (nearest-sample alignment).
    """

    trial_index: int
    onset_time_s: float
    data: np.ndarray
    sampling_rate_hz: float
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        expected = int(round(EPOCH_SPAN_S * self.sampling_rate_hz))
        if data.ndim != 2 or data.shape[1] != expected:
            raise DataError(
                f"epoch data must be [channels x {expected}] at fs={self.sampling_rate_hz}, "
                f"got shape {data.shape}"
            )
        if self.channel_names and len(self.channel_names) != data.shape[0]:
            raise DataError("channel_names length does not match epoch data")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def time_axis(self) -> np.ndarray:
        """Per-sample times in seconds relative to onset; last sample is 0."""
        n = self.n_samples
        return (np.arange(n) - (n - 1)) / self.sampling_rate_hz

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channel_names:
            raise DataError(f"unknown channel {name!r}")
        return self.data[self.channel_names.index(name)]


@dataclass(frozen=True)
class SessionSet:
    """Chronologically ordered sessions of one subject."""

    subject_id: str
    sessions: tuple[tuple[str, tuple[Epoch, ...]], ...] = field(default_factory=tuple)

    def __post_init__(self):
        sessions = tuple((sid, tuple(eps)) for sid, eps in self.sessions)
        object.__setattr__(self, "sessions", sessions)
        n_channels = {ep.data.shape[0] for _, eps in sessions for ep in eps}
        if len(n_channels) > 1:
            raise DataError(f"inconsistent epoch channel counts across sessions: {n_channels}")
        ids = [sid for sid, _ in sessions]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate session ids")


def _resolve_base(path: str) -> str:
    for suffix in (HEADER_SUFFIX, DATA_SUFFIX, EVENTS_SUFFIX):
        if path.endswith(suffix):
            return path[: -len(suffix)]
    return path


def parse_recording(path: str) -> Recording:
    """Read a session from disk.

    ``path`` is the session base path, or the path of any of the three
    session files.
    """
    base = _resolve_base(os.fspath(path))
    header_path = base + HEADER_SUFFIX
    data_path = base + DATA_SUFFIX
    events_path = base + EVENTS_SUFFIX
    for p in (header_path, data_path, events_path):
        if not os.path.exists(p):
            raise ParseError("session file not found", path=p)

    header: dict[str, str] = {}
    with open(header_path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "," not in line:
                raise ParseError("expected 'key,value'", path=header_path, line=lineno)
            key, value = line.split(",", 1)
            header[key.strip()] = value.strip()
    for key in ("sampling_rate_hz", "channels"):
        if key not in header:
            raise ParseError(f"missing header key {key!r}", path=header_path)
    try:
        fs = float(header["sampling_rate_hz"])
    except ValueError:
        raise ParseError(
            f"sampling_rate_hz is not a number: {header['sampling_rate_hz']!r}",
            path=header_path,
        ) from None
    channels = [c for c in header["channels"].split(";") if c]
    emg_names = [c for c in header.get("emg_channels", "").split(";") if c]
    emg_indices = []
    for name in emg_names:
        if name not in channels:
            raise ParseError(f"emg channel {name!r} not in channel list", path=header_path)
        emg_indices.append(channels.index(name))

    rows = []
    with open(data_path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(channels):
                raise ParseError(
                    f"expected {len(channels)} columns, got {len(parts)}",
                    path=data_path,
                    line=lineno,
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError("non-numeric sample value", path=data_path, line=lineno) from None
    if not rows:
        raise ParseError("no samples", path=data_path)
    samples = np.asarray(rows, dtype=float).T

    events = []
    with open(events_path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.replace(" ", "") == "kind,time_s,trial_index":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError("expected 'kind,time_s,trial_index'", path=events_path, line=lineno)
            kind_raw, time_raw, trial_raw = (p.strip() for p in parts)
            try:
                kind = EventKind(kind_raw)
            except ValueError:
                raise ParseError(f"unknown event kind {kind_raw!r}", path=events_path, line=lineno) from None
            try:
                events.append(Event(kind=kind, time_s=float(time_raw), trial_index=int(trial_raw)))
            except ValueError:
                raise ParseError("malformed event row", path=events_path, line=lineno) from None

    session_id = os.path.basename(base)
    try:
        return Recording(
            session_id=session_id,
            sampling_rate_hz=fs,
            channel_names=tuple(channels),
            samples=samples,
            emg_channel_indices=tuple(emg_indices),
            event_list=tuple(events),
        )
    except DataError as exc:
        raise ParseError(str(exc), path=base) from exc


def write_recording(rec: Recording, base_path: str) -> None:
    """Write a session to ``<base_path>.{header,data,events}.csv``.

    Numeric text uses ``repr`` so that parse(write(rec)) round-trips
    bit-exactly.
    """
    base = _resolve_base(os.fspath(base_path))
    os.makedirs(os.path.dirname(os.path.abspath(base)), exist_ok=True)
    emg_names = [rec.channel_names[i] for i in rec.emg_channel_indices]
    with open(base + HEADER_SUFFIX, "w", newline="") as fh:
        fh.write(f"sampling_rate_hz,{float(rec.sampling_rate_hz)!r}\n")
        fh.write("channels," + ";".join(rec.channel_names) + "\n")
        fh.write("emg_channels," + ";".join(emg_names) + "\n")
    with open(base + DATA_SUFFIX, "w", newline="") as fh:
        for row in rec.samples.T:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(base + EVENTS_SUFFIX, "w", newline="") as fh:
        fh.write("kind,time_s,trial_index\n")
        for ev in rec.event_list:
            fh.write(f"{ev.kind.value},{float(ev.time_s)!r},{ev.trial_index}\n")


def slice_epoch(rec: Recording, onset_time_s: float, trial_index: int = -1) -> Epoch:
    """Cut the [-6, 0] s segment ending at the sample nearest ``onset_time_s``."""
    fs = rec.sampling_rate_hz
    n = int(round(EPOCH_SPAN_S * fs))
    end = int(round(onset_time_s * fs))
    start = end - n
    if start < 0 or end > rec.n_samples:
        raise EpochOutOfBoundsError(
            f"epoch [-6, 0] s around onset {onset_time_s} s lies outside the recording",
            trial_index=trial_index,
        )
    return Epoch(
        trial_index=trial_index,
        onset_time_s=onset_time_s,
        data=rec.samples[:, start:end],
        sampling_rate_hz=fs,
        channel_names=rec.channel_names,
    )

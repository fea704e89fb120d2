"""Pipeline configuration: an INI-style ``key = value`` document.

Sections: ``[pipeline]``, ``[windows]``, ``[features]``, ``[filters]``,
``[cv]`` and one ``[subject:<id>]`` section per subject listing its session
base paths in chronological order. Every key is optional except the subject
sessions; validation errors name the offending section and key.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field

from .data import DATA_SUFFIX, EVENTS_SUFFIX, HEADER_SUFFIX
from .errors import ConfigError
from .features import DEFAULT_CHANNELS, WindowSpec
from .learn import DETECTOR_KINDS

_SUBJECT_PREFIX = "subject:"


@dataclass(frozen=True)
class FilterConfig:
    order: int = 2
    eeg_band_hz: tuple = (0.1, 30.0)
    mrcp_band_hz: tuple = (0.1, 1.0)
    emg_band_hz: tuple = (100.0, 125.0)


@dataclass(frozen=True)
class CvConfig:
    outer_folds: int = 5
    inner_folds: int = 5
    grid_log2_min: float = -5.0
    grid_log2_max: float = 5.0
    grid_points: int = 5


@dataclass(frozen=True)
class PipelineConfig:
    subjects: tuple = ()  # tuple of (subject_id, tuple of session base paths)
    seed: int = 0
    out_dir: str = "out"
    jobs: int = 1
    models: tuple = DETECTOR_KINDS
    strict_forward: bool = False
    window_spec: WindowSpec = field(default_factory=WindowSpec)
    channels: tuple = DEFAULT_CHANNELS
    decimation: int = 16
    filters: FilterConfig = field(default_factory=FilterConfig)
    cv: CvConfig = field(default_factory=CvConfig)

    def validate(self) -> None:
        if not self.subjects:
            raise ConfigError("no [subject:<id>] sections with sessions configured")
        for subject_id, sessions in self.subjects:
            if not sessions:
                raise ConfigError(f"[subject:{subject_id}] lists no sessions")
            for base in sessions:
                for suffix in (HEADER_SUFFIX, DATA_SUFFIX, EVENTS_SUFFIX):
                    path = base + suffix
                    if not os.path.exists(path):
                        raise ConfigError(f"[subject:{subject_id}] session file missing: {path}")
        for kind in self.models:
            if kind not in DETECTOR_KINDS:
                raise ConfigError(f"[pipeline] models: unknown model kind {kind!r}")
        for name, band in (("eeg_band_hz", self.filters.eeg_band_hz),
                           ("mrcp_band_hz", self.filters.mrcp_band_hz),
                           ("emg_band_hz", self.filters.emg_band_hz)):
            if len(band) != 2 or not 0 < band[0] < band[1]:
                raise ConfigError(f"[filters] {name}: invalid band {band}")
        if self.decimation < 1:
            raise ConfigError("[features] decimation must be >= 1")
        if self.cv.outer_folds < 2 or self.cv.inner_folds < 2:
            raise ConfigError("[cv] fold counts must be >= 2")

    def canonical_dict(self) -> dict:
        return {
            "subjects": [[sid, list(sessions)] for sid, sessions in self.subjects],
            "seed": self.seed,
            "models": list(self.models),
            "strict_forward": self.strict_forward,
            "windows": [self.window_spec.length_s, self.window_spec.step_s,
                        list(self.window_spec.epoch_span_s),
                        self.window_spec.premovement_boundary_s],
            "channels": list(self.channels),
            "decimation": self.decimation,
            "filters": {
                "order": self.filters.order,
                "eeg_band_hz": list(self.filters.eeg_band_hz),
                "mrcp_band_hz": list(self.filters.mrcp_band_hz),
                "emg_band_hz": list(self.filters.emg_band_hz),
            },
            "cv": {
                "outer_folds": self.cv.outer_folds,
                "inner_folds": self.cv.inner_folds,
                "grid_log2_min": self.cv.grid_log2_min,
                "grid_log2_max": self.cv.grid_log2_max,
                "grid_points": self.cv.grid_points,
            },
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _csv_list(raw: str):
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def _pair(raw: str):
    parts = _csv_list(raw)
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return (float(parts[0]), float(parts[1]))


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def load_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    subjects = []
    for section in parser.sections():
        if not section.startswith(_SUBJECT_PREFIX):
            continue
        subject_id = section[len(_SUBJECT_PREFIX):]
        if not parser.has_option(section, "sessions"):
            raise ConfigError(f"[{section}] missing key 'sessions'")
        base_dir = os.path.dirname(os.path.abspath(path))
        sessions = tuple(
            p if os.path.isabs(p) else os.path.join(base_dir, p)
            for p in _csv_list(parser.get(section, "sessions"))
        )
        subjects.append((subject_id, sessions))

    spec = WindowSpec(
        length_s=_get(parser, "windows", "length_s", float, 1.0),
        step_s=_get(parser, "windows", "step_s", float, 0.125),
        premovement_boundary_s=_get(parser, "windows", "premovement_boundary_s", float, -1.5),
    )
    filters = FilterConfig(
        order=_get(parser, "filters", "order", int, 2),
        eeg_band_hz=_get(parser, "filters", "eeg_band_hz", _pair, (0.1, 30.0)),
        mrcp_band_hz=_get(parser, "filters", "mrcp_band_hz", _pair, (0.1, 1.0)),
        emg_band_hz=_get(parser, "filters", "emg_band_hz", _pair, (100.0, 125.0)),
    )
    cv = CvConfig(
        outer_folds=_get(parser, "cv", "outer_folds", int, 5),
        inner_folds=_get(parser, "cv", "inner_folds", int, 5),
        grid_log2_min=_get(parser, "cv", "grid_log2_min", float, -5.0),
        grid_log2_max=_get(parser, "cv", "grid_log2_max", float, 5.0),
        grid_points=_get(parser, "cv", "grid_points", int, 5),
    )
    cfg = PipelineConfig(
        subjects=tuple(subjects),
        seed=_get(parser, "pipeline", "seed", int, 0),
        out_dir=_get(parser, "pipeline", "out_dir", str, "out"),
        jobs=_get(parser, "pipeline", "jobs", int, 1),
        models=_get(parser, "pipeline", "models", _csv_list, DETECTOR_KINDS),
        strict_forward=_get(parser, "pipeline", "strict_forward", _bool, False),
        window_spec=spec,
        channels=_get(parser, "features", "channels", _csv_list, DEFAULT_CHANNELS),
        decimation=_get(parser, "features", "decimation", int, 16),
        filters=filters,
        cv=cv,
    )
    cfg.validate()
    return cfg

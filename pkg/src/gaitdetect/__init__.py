"""Offline detection of gait intention from low-frequency EEG.

Pipeline stages: session ingestion, zero-phase band-pass filtering,
movement-onset detection, epoching, analytic-signal amplitude/phase
features over sliding windows, RBF-SVM detectors with probability
calibration, LDA fusion of the two feature views, and a trial-based
evaluation protocol (intrasession, intersession, intersubject).
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, GaitDetectError, ParseError

__all__ = ["GaitDetectError", "DataError", "ParseError", "ConfigError", "__version__"]

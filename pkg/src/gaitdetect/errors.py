"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else -> 1.
"""


class GaitDetectError(Exception):
    """Base class for all package errors."""


class DataError(GaitDetectError):
    """Invalid or inconsistent data (validation failures, bad epochs...)."""


class ParseError(DataError):
    """Malformed session file.

    Carries the file path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class ConfigError(GaitDetectError):
    """Invalid user configuration or command-line usage."""


class EpochOutOfBoundsError(DataError):
    """Requested epoch extends outside the recording."""

    def __init__(self, message, trial_index=None):
        self.trial_index = trial_index
        if trial_index is not None and trial_index >= 0:
            message = f"trial {trial_index}: {message}"
        super().__init__(message)

"""Filtering and analytic-signal machinery.

Butterworth band-pass design, zero-phase (forward-backward) filtering,
the discrete analytic signal z(t) = s(t) + j*HT(s(t)), instantaneous
phase/amplitude/power, and the phase-locking value across trials.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import DataError

log = logging.getLogger(__name__)

POWER_FLOOR = 1e-30


@dataclass(frozen=True)
class IirFilter:
    """Digital IIR filter as transfer-function coefficients (a[0] = 1)."""

    b: np.ndarray
    a: np.ndarray
    order: int
    low_hz: float
    high_hz: float
    fs: float

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if a[0] != 1.0:
            raise DataError("feedback coefficients must be normalized (a[0] = 1)")
        poles = np.roots(a)
        if poles.size and np.max(np.abs(poles)) >= 1.0:
            raise DataError("unstable filter: pole on or outside the unit circle")
        b.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    def frequency_response(self, freqs_hz) -> np.ndarray:
        """Complex response H(e^{j 2 pi f / fs}) at the given frequencies."""
        _, h = sps.freqz(self.b, self.a, worN=2 * np.pi * np.asarray(freqs_hz, float) / self.fs)
        return h


@dataclass(frozen=True)
class AnalyticSeries:
    """Real signal and its Hilbert transform, i.e. z(t) = real + j*imag."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        real = np.asarray(self.real, dtype=float)
        imag = np.asarray(self.imag, dtype=float)
        if real.shape != imag.shape or real.ndim != 1:
            raise DataError("real and imaginary parts must be 1-d arrays of equal length")
        real.setflags(write=False)
        imag.setflags(write=False)
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "imag", imag)

    @property
    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @property
    def modulus(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


def design_butterworth_bandpass(order: int, low_hz: float, high_hz: float, fs: float) -> IirFilter:
    """Digital Butterworth band-pass (analog prototype + pre-warped bilinear)."""
    if order < 1:
        raise DataError(f"filter order must be >= 1, got {order}")
    if not (0.0 < low_hz < high_hz < fs / 2.0):
        raise DataError(
            f"band edges must satisfy 0 < low < high < fs/2, got ({low_hz}, {high_hz}) at fs={fs}"
        )
    b, a = sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs)
    return IirFilter(b=b, a=a, order=order, low_hz=low_hz, high_hz=high_hz, fs=fs)


def filtfilt(filt: IirFilter, x) -> np.ndarray:
    """Forward-backward filtering: zero net phase, squared magnitude response.

    Edges are handled with odd-reflection padding of length
    3 * max(len(a), len(b)) on each side.
    """
    x = np.asarray(x, dtype=float)
    padlen = 3 * max(len(filt.a), len(filt.b))
    if x.shape[-1] <= padlen:
        raise DataError(f"signal too short for zero-phase filtering: need > {padlen} samples")
    return sps.filtfilt(filt.b, filt.a, x, padtype="odd", padlen=padlen)


def analytic_signal(x) -> AnalyticSeries:
    """Discrete analytic signal via the frequency-domain construction.

    Negative frequencies are zeroed and positive ones doubled (DC and
    Nyquist unchanged); the transform length equals the signal length, so
    the real part reproduces the input exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise DataError("analytic_signal requires a 1-d signal of at least 8 samples")
    z = sps.hilbert(x)
    return AnalyticSeries(real=x, imag=np.imag(z))


def instantaneous_phase(z: AnalyticSeries) -> np.ndarray:
    """Phase phi(t) = atan2(imag, real), wrapped to (-pi, pi].

    Samples with zero modulus get phase 0 and are reported in the log.
    """
    degenerate = (z.real == 0.0) & (z.imag == 0.0)
    if degenerate.any():
        log.warning("instantaneous_phase: %d zero-modulus samples, phase set to 0",
                    int(degenerate.sum()))
    return np.arctan2(z.imag, z.real)


def instantaneous_amplitude(z: AnalyticSeries) -> np.ndarray:
    """Envelope A(t) = |z(t)|."""
    return z.modulus


def instantaneous_power_db(z: AnalyticSeries) -> np.ndarray:
    """10*log10(A(t)^2), with A^2 floored at 1e-30 before the log."""
    power = np.maximum(z.modulus ** 2, POWER_FLOOR)
    return 10.0 * np.log10(power)


def plv(phases) -> np.ndarray:
    """Phase-locking value per time point over a [trials x time] phase matrix.

    PLV(t) = |mean over trials of exp(j*phi)|, in [0, 1]: 1 for identical
    phases across trials, 0 for uniformly spread ones.
    """
    phases = np.asarray(phases, dtype=float)
    if phases.ndim != 2 or phases.shape[0] < 1:
        raise DataError("plv requires a [trials x time] matrix with at least one trial")
    values = np.abs(np.exp(1j * phases).mean(axis=0))
    # |mean of unit vectors| can exceed 1 only by rounding noise
    return np.minimum(values, 1.0)

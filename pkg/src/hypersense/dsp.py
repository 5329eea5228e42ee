"""Spectral estimation, channelization and envelope computation.

Everything here is a pure function of its inputs.  Power quantities are
floored at ``EPS_POWER`` before dB conversion so downstream level
segmentation never sees -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sig

from .errors import EmptyInputError, InsufficientDataError, ParameterError
from .iqio import IqRecording
from .noisefloor import DetectedComponent

EPS_POWER = 1e-30

_WINDOWS = ("hann", "hamming", "rect")


def db10(p: np.ndarray | float) -> np.ndarray | float:
    """Power to dB with the epsilon floor."""
    return 10.0 * np.log10(np.maximum(p, EPS_POWER))


@dataclass
class PowerSpectrum:
    """Averaged periodogram in dB over a baseband frequency axis."""

    values_db: np.ndarray
    freq_start_hz: float
    freq_step_hz: float
    fft_size: int
    averaging_count: int

    @property
    def freqs_hz(self) -> np.ndarray:
        return self.freq_start_hz + self.freq_step_hz * np.arange(self.fft_size)

    @property
    def axis(self) -> tuple[float, float]:
        return (self.freq_start_hz, self.freq_step_hz)


@dataclass
class FirFilter:
    """Linear-phase FIR with its design parameters."""

    taps: np.ndarray
    fc_hz: float
    bw_hz: float
    transition_hz: float
    stop_atten_db: float


def _window(kind: str, n: int) -> np.ndarray:
    if kind == "hann":
        return np.hanning(n)
    if kind == "hamming":
        return np.hamming(n)
    if kind == "rect":
        return np.ones(n)
    raise ParameterError(f"unknown window {kind!r}, expected one of {_WINDOWS}")


def welch_psd(
    iq: IqRecording,
    fft_size: int = 1024,
    window: str = "hann",
    overlap: float = 0.5,
) -> PowerSpectrum:
    """Averaged, window-compensated periodogram in dB.

    Scaling is such that the mean of the linear-domain spectrum equals the
    mean input power (exactly so for the rectangular window).  The axis is
    baseband, ordered -fs/2 upward in steps of fs/fft_size.
    """
    if fft_size < 8 or fft_size & (fft_size - 1):
        raise ParameterError(f"fft_size must be a power of two >= 8, got {fft_size}")
    if not 0.0 <= overlap < 1.0:
        raise ParameterError(f"overlap must be in [0, 1), got {overlap}")
    x = np.asarray(iq.samples)
    if x.size < fft_size:
        raise InsufficientDataError(
            f"recording has {x.size} samples, need at least fft_size={fft_size}"
        )
    w = _window(window, fft_size)
    hop = max(1, int(round(fft_size * (1.0 - overlap))))
    n_seg = (x.size - fft_size) // hop + 1
    segs = np.lib.stride_tricks.sliding_window_view(x, fft_size)[::hop][:n_seg]
    spec = np.fft.fft(segs * w, axis=1)
    p = np.mean(np.abs(spec) ** 2, axis=0) / np.sum(w**2)
    p = np.fft.fftshift(p)
    fs = iq.sample_rate_hz
    return PowerSpectrum(
        values_db=db10(p),
        freq_start_hz=-fs / 2.0,
        freq_step_hz=fs / fft_size,
        fft_size=fft_size,
        averaging_count=int(n_seg),
    )


def design_bandpass(
    fc_hz: float,
    bw_hz: float,
    fs_hz: float,
    transition_hz: float,
    stop_atten_db: float = 60.0,
) -> FirFilter:
    """Kaiser-windowed linear-phase FIR passing [fc - bw/2, fc + bw/2].

    The taps are real, so for complex baseband input the response is
    mirrored about DC; channelization mixes the band of interest to DC
    first and then uses the lowpass case.  A passband covering the whole
    representable band degenerates to an identity filter.
    """
    if bw_hz <= 0:
        raise ParameterError(f"bandwidth must be positive, got {bw_hz}")
    if transition_hz <= 0:
        raise ParameterError(f"transition width must be positive, got {transition_hz}")
    nyq = fs_hz / 2.0
    lo = fc_hz - bw_hz / 2.0
    hi = fc_hz + bw_hz / 2.0
    if hi > nyq or lo < -nyq:
        raise ParameterError(
            f"band [{lo:g}, {hi:g}] Hz does not fit inside (+-{nyq:g}) Hz"
        )
    if lo <= -nyq + 1e-9 * fs_hz and hi >= nyq - 1e-9 * fs_hz:
        return FirFilter(
            taps=np.array([1.0]),
            fc_hz=fc_hz,
            bw_hz=bw_hz,
            transition_hz=transition_hz,
            stop_atten_db=stop_atten_db,
        )
    if hi + transition_hz >= nyq or lo - transition_hz <= -nyq:
        raise ParameterError("transition band does not fit inside the Nyquist band")

    numtaps, beta = sig.kaiserord(stop_atten_db, transition_hz / nyq)
    numtaps |= 1  # force odd length (type I, symmetric)
    abs_lo, abs_hi = abs(fc_hz) - bw_hz / 2.0, abs(fc_hz) + bw_hz / 2.0
    if abs_lo <= 0.0:
        cutoff: float | list[float] = abs_hi
        pass_zero = True
    else:
        cutoff = [abs_lo, abs_hi]
        pass_zero = False
    taps = sig.firwin(numtaps, cutoff, window=("kaiser", beta), fs=fs_hz, pass_zero=pass_zero)
    return FirFilter(
        taps=taps,
        fc_hz=fc_hz,
        bw_hz=bw_hz,
        transition_hz=transition_hz,
        stop_atten_db=stop_atten_db,
    )


def apply_fir(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Filter with group-delay compensation (centered convolution)."""
    if taps.size == 1:
        return x * taps[0]
    return sig.fftconvolve(x, taps, mode="same")


def channelize(
    iq: IqRecording,
    component: DetectedComponent,
    guard_factor: float = 1.25,
    stop_atten_db: float = 60.0,
    decimate: bool = True,
) -> IqRecording:
    """Isolate one detected component: mix to DC, lowpass, decimate.

    ``component.center`` is an absolute frequency; the baseband offset is
    taken against the recording's center frequency.  The passband is the
    component width times ``guard_factor``.  Decimation keeps the largest
    power-of-two divisor whose output rate is still >= 2.5x the passband.
    """
    if guard_factor <= 0:
        raise ParameterError("guard_factor must be positive")
    fs = iq.sample_rate_hz
    offset = component.center - iq.center_freq_hz
    if abs(offset) > fs / 2.0:
        raise ParameterError(
            f"component center {component.center:g} Hz outside the recording band"
        )
    bw = min(component.width * guard_factor, fs)

    x = np.asarray(iq.samples)
    if abs(offset) > 0.0:
        n = np.arange(x.size)
        x = x * np.exp(-2j * np.pi * offset / fs * n)

    if bw >= fs * (1.0 - 1e-9):
        filt = FirFilter(np.array([1.0]), 0.0, bw, 0.0, stop_atten_db)
    else:
        transition = min(0.15 * bw, (fs / 2.0 - bw / 2.0) * 0.9)
        filt = design_bandpass(0.0, bw, fs, transition, stop_atten_db)
    y = apply_fir(x, filt.taps)

    factor = 1
    if decimate:
        while fs / (factor * 2) >= 2.5 * bw:
            factor *= 2
    if factor > 1:
        y = y[::factor]
    return IqRecording(
        samples=y,
        sample_rate_hz=fs / factor,
        center_freq_hz=component.center,
        description=iq.description,
    )


def power_envelope(
    iq: IqRecording, smooth_len: int = 1
) -> tuple[np.ndarray, tuple[float, float]]:
    """Moving-average instantaneous power in dB, with its time axis.

    Returns ``(values_db, (t0, dt))``; dt is the sample period.  Edges use
    nearest-sample extension, so only the first/last smooth_len samples
    deviate from the interior average.
    """
    x = np.asarray(iq.samples)
    if x.size == 0:
        raise EmptyInputError("empty recording")
    if smooth_len < 1:
        raise ParameterError(f"smooth_len must be >= 1, got {smooth_len}")
    p = np.abs(x) ** 2
    if smooth_len > 1:
        from scipy.ndimage import uniform_filter1d

        p = uniform_filter1d(p, size=smooth_len, mode="nearest")
    return db10(p), (0.0, 1.0 / iq.sample_rate_hz)

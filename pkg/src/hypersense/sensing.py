"""Narrowband sensing and identification methods.

Implemented methods: energy detection, cyclic-profile scanning (with the
cyclic autocorrelation as the underlying statistic), cyclic-prefix
detection via the sample autocorrelation, time-domain matched filtering
and frequency-domain template matching.  The remaining registry rows are
metadata only; selecting one raises ``UnsupportedMethodError``.

Peak extraction on every method's output axis is delegated to the noise
floor detector, so the detection behavior is uniform across axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import signal as sig
from scipy.stats import norm

from .dsp import EPS_POWER, PowerSpectrum, db10
from .errors import (
    EmptyInputError,
    InsufficientDataError,
    ParameterError,
    UnsupportedMethodError,
)
from .iqio import IqRecording
from .noisefloor import DetectedComponent, NoiseFloorParams, detect

# Margin in dB a peak must clear the estimated floor threshold by before it
# counts as a detection on spiky axes (cyclic profiles, lag profiles).
PEAK_MARGIN_DB = 6.0

METHOD_ENERGY = "energy"
METHOD_CYCLO = "cyclo"
METHOD_AUTOCORR = "autocorr"
METHOD_MATCHED_FILTER = "matched_filter"
METHOD_TEMPLATE_MATCH = "template_match"


@dataclass
class MethodInfo:
    key: str
    name: str
    dimension: str
    sensing_parameter: str
    result: str
    implemented: bool


METHOD_REGISTRY: tuple[MethodInfo, ...] = (
    MethodInfo(METHOD_ENERGY, "Energy Detection", "time/frequency", "signal energy",
               "detection only", True),
    MethodInfo(METHOD_MATCHED_FILTER, "Matched Filter", "time",
               "time-domain signal structure (pulse shape, packet format, guard time, burst duration)",
               "detection and identification", True),
    MethodInfo(METHOD_CYCLO, "Cyclostationary Feature Detection", "frequency/code",
               "chip rate, data rate, CP size, symbol duration, carrier spacing and number",
               "detection and identification", True),
    MethodInfo("statistical_tests", "Statistical Tests", "time", "signal distribution",
               "detection only", False),
    MethodInfo("entropy", "Entropy Based", "frequency", "signal entropy",
               "detection only", False),
    MethodInfo("eigenvalue", "Eigenvalue Based", "time/angle",
               "signal eigenvalues, direction of arrival", "detection only", False),
    MethodInfo(METHOD_AUTOCORR, "Autocorrelation", "time",
               "cyclic prefix, midamble, preamble, PN sequence",
               "detection and identification", True),
    MethodInfo(METHOD_TEMPLATE_MATCH, "Template Matching", "frequency",
               "frequency-domain filter characteristics",
               "detection and identification", True),
    MethodInfo("multitaper", "Multitaper Based", "frequency", "signal energy",
               "detection only", False),
    MethodInfo("wavelet", "Wavelet", "frequency", "signal energy",
               "detection only", False),
    MethodInfo("multiband_joint", "Multiband Joint Detection", "frequency",
               "signal energy", "detection only", False),
)


def lookup_method(key_or_name: str) -> MethodInfo:
    wanted = key_or_name.strip().lower()
    for info in METHOD_REGISTRY:
        if wanted in (info.key, info.name.lower()):
            return info
    raise UnsupportedMethodError(f"unknown sensing method {key_or_name!r}")


def require_method(key_or_name: str) -> MethodInfo:
    info = lookup_method(key_or_name)
    if not info.implemented:
        raise UnsupportedMethodError(
            f"sensing method {info.name!r} is registered for reference only "
            "and has no algorithm behind it"
        )
    return info


@dataclass
class Evidence:
    """Outcome of one sensing method run."""

    method: str
    peaks: list[DetectedComponent]
    statistic: float
    threshold: float
    detected: bool
    flags: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)


@dataclass
class CyclicProfile:
    """Max-over-lag cyclic autocorrelation magnitude per cyclic frequency."""

    alpha_grid: np.ndarray   # Hz, strictly increasing
    magnitude_db: np.ndarray
    tau_range: tuple[int, int]


def energy_detect(iq: IqRecording, noise_var: float, pfa: float = 0.05) -> Evidence:
    """Total-energy test with a Gaussian-approximated noise-only threshold."""
    if noise_var <= 0:
        raise ParameterError(f"noise_var must be positive, got {noise_var}")
    if not 0.0 < pfa < 0.5:
        raise ParameterError(f"pfa must be in (0, 0.5), got {pfa}")
    x = np.asarray(iq.samples)
    m = x.size
    if m < 100:
        raise InsufficientDataError(
            f"need >= 100 samples for the Gaussian threshold approximation, got {m}"
        )
    statistic = float(np.sum(np.abs(x) ** 2))
    threshold = m * noise_var + norm.isf(pfa) * noise_var * np.sqrt(m)
    return Evidence(
        method=METHOD_ENERGY,
        peaks=[],
        statistic=statistic,
        threshold=float(threshold),
        detected=bool(statistic > threshold),
    )


def cyclic_autocorrelation(
    iq: IqRecording, alpha_hz: float, tau_range: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray, bool]:
    """R(alpha, tau) = (1/T) sum_t x(t) conj(x(t+tau)) e^{-j2pi alpha t}.

    Returns (taus, values, truncated); lags reaching past the end of the
    recording are truncated rather than rejected, with the flag set.
    """
    x = np.asarray(iq.samples)
    if x.size == 0:
        raise EmptyInputError("empty recording")
    fs = iq.sample_rate_hz
    if abs(alpha_hz) >= fs / 2.0:
        raise ParameterError(f"|alpha| must be below fs/2 = {fs/2:g} Hz")
    lo, hi = int(tau_range[0]), int(tau_range[1])
    if lo < 0 or hi < lo:
        raise ParameterError(f"bad tau range ({lo}, {hi})")
    truncated = hi >= x.size
    hi = min(hi, x.size - 1)
    taus = np.arange(lo, hi + 1)
    t = np.arange(x.size)
    w = x * np.exp(-2j * np.pi * alpha_hz / fs * t)
    values = np.empty(taus.size, dtype=np.complex128)
    for i, tau in enumerate(taus):
        values[i] = np.dot(w[: x.size - tau], np.conj(x[tau:])) / x.size
    return taus, values, truncated


def scan_cyclic(
    iq: IqRecording, alpha_grid: np.ndarray, tau_range: tuple[int, int] | None = None
) -> CyclicProfile:
    """Cyclic-line profile over a grid of cyclic frequencies.

    Each grid point reports the strongest line magnitude (max over lags,
    in dB) within its half-step cell, so features between grid points are
    not lost; the underlying resolution is fs / len(recording).
    """
    x = np.asarray(iq.samples)
    if x.size == 0:
        raise EmptyInputError("empty recording")
    alphas = np.asarray(alpha_grid, dtype=float)
    if alphas.size == 0:
        raise ParameterError("empty cyclic-frequency grid")
    if alphas.size > 1 and not np.all(np.diff(alphas) > 0):
        raise ParameterError("cyclic-frequency grid must be strictly increasing")
    fs = iq.sample_rate_hz
    if alphas[0] < 0 or alphas[-1] >= fs / 2.0:
        raise ParameterError("cyclic-frequency grid must lie within [0, fs/2)")
    if tau_range is None:
        tau_range = (0, min(256, x.size // 4))
    lo, hi = int(tau_range[0]), int(tau_range[1])
    if lo < 0 or hi < lo or hi >= x.size:
        raise ParameterError(f"bad tau range ({lo}, {hi})")

    T = x.size
    L = sfft.next_fast_len(T)
    step = float(np.min(np.diff(alphas))) if alphas.size > 1 else fs / T
    # each grid point owns the half-step cell around it, in FFT-bin units
    starts = np.round((alphas - step / 2.0) / fs * L).astype(np.int64)
    ends = np.round((alphas + step / 2.0) / fs * L).astype(np.int64)
    starts = np.clip(starts, 0, L - 1)
    ends = np.clip(np.maximum(ends, starts + 1), 1, L - 1)
    idx = np.empty(2 * alphas.size, dtype=np.int64)
    idx[0::2] = starts
    idx[1::2] = ends
    idx = np.maximum.accumulate(idx)

    best = np.full(alphas.size, 0.0)
    buf = np.zeros(L, dtype=np.complex128)
    for tau in range(lo, hi + 1):
        buf[:] = 0.0
        buf[: T - tau] = x[: T - tau] * np.conj(x[tau:])
        mag = np.abs(sfft.fft(buf)) / T
        cellmax = np.maximum.reduceat(mag, idx)[0::2]
        np.maximum(best, cellmax, out=best)
    return CyclicProfile(
        alpha_grid=alphas,
        magnitude_db=db10(best),
        tau_range=(lo, hi),
    )


def cyclic_evidence(
    profile: CyclicProfile,
    params: NoiseFloorParams | None = None,
    windows: list[tuple[float, float]] | None = None,
) -> Evidence:
    """Peak extraction on a cyclic profile via the noise floor detector.

    Random-data modulation gives the profile a smooth continuum that slopes
    away from zero, so a single global floor over a wide grid is
    meaningless.  ``windows`` (cyclic-frequency intervals) run the floor
    detector per interval, where the local floor is flat; peaks must clear
    their local threshold by ``PEAK_MARGIN_DB``.  Without windows the whole
    grid is one interval.
    """
    params = params or NoiseFloorParams(min_width_bins=1, merge_gap_bins=0)
    grid = profile.alpha_grid
    step = float(grid[1] - grid[0]) if grid.size > 1 else 1.0
    if windows is None:
        windows = [(float(grid[0]), float(grid[-1]))]

    strong: list = []
    all_peaks: list = []
    flags: list[str] = []
    best_stat = -np.inf
    best_thr = -np.inf
    for lo, hi in windows:
        sel = np.flatnonzero((grid >= lo - step / 2.0) & (grid <= hi + step / 2.0))
        if sel.size < 2:
            continue
        values = profile.magnitude_db[sel]
        try:
            estimate, comps = detect(values, (float(grid[sel[0]]), step), params)
        except Exception:
            continue
        if estimate.all_tied and "nfspem_tied" not in flags:
            flags.append("nfspem_tied")
        for c in comps:
            # re-anchor run indices onto the full grid
            c.start_index += int(sel[0])
            c.end_index += int(sel[0])
            c.peak_index += int(sel[0])
        all_peaks.extend(comps)
        window_best = max((c.peak_value_db for c in comps), default=estimate.threshold_db)
        if window_best - estimate.threshold_db > best_stat - best_thr:
            best_stat, best_thr = window_best, float(estimate.threshold_db)
        strong.extend(
            c for c in comps if c.peak_value_db - estimate.threshold_db >= PEAK_MARGIN_DB
        )
    strong.sort(key=lambda c: c.start_index)
    if not np.isfinite(best_stat):
        best_stat = float(profile.magnitude_db.max())
        best_thr = best_stat
    return Evidence(
        method=METHOD_CYCLO,
        peaks=strong,
        statistic=float(best_stat),
        threshold=float(best_thr),
        detected=bool(strong),
        flags=flags,
        extras={"all_peaks": all_peaks},
    )


def sample_autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """r(tau) = (1/T) sum_t x(t) conj(x(t+tau)) for tau = 0..max_lag."""
    T = x.size
    L = sfft.next_fast_len(T + max_lag + 1)
    X = sfft.fft(x, L)
    c = sfft.ifft(np.abs(X) ** 2)  # c[tau] = sum_t x(t+tau) conj(x(t))
    return np.conj(c[: max_lag + 1]) / T


def _fold_profile(z: np.ndarray, period: int) -> np.ndarray:
    n_periods = z.size // period
    return np.abs(z[: n_periods * period].reshape(n_periods, period).mean(axis=0))


def _half_prominence_support(profile: np.ndarray) -> int:
    base = float(np.median(profile))
    thr = base + 0.5 * (float(profile.max()) - base)
    above = profile > thr
    if above.all():
        return profile.size
    # longest circular run
    ext = np.concatenate([above, above])
    best = cur = 0
    for v in ext:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return min(best, profile.size)


def cp_autocorr_detect(
    iq: IqRecording,
    lag_range: tuple[int, int] = (1, 256),
    params: NoiseFloorParams | None = None,
) -> Evidence:
    """Detect repeated-tail structure from the sample autocorrelation.

    A lag peak at u marks the repeat distance.  The product
    z(t) = x(t) conj(x(t+u)) is coherent only while the repeated segment is
    active, so folding z over candidate periods in (u, 2u] and picking the
    most coherent fold recovers the full symbol period; the prefix length
    is the half-prominence support of the folded magnitude.  Absence of a
    lag peak is a non-detection, not an error.
    """
    x = np.asarray(iq.samples)
    if x.size == 0:
        raise EmptyInputError("empty recording")
    lo, hi = int(lag_range[0]), int(lag_range[1])
    if lo < 1 or hi <= lo or hi >= x.size:
        raise ParameterError(f"bad lag range ({lo}, {hi})")
    params = params or NoiseFloorParams(min_width_bins=1, merge_gap_bins=0)

    r = sample_autocorrelation(x, hi)
    mag_db = db10(np.abs(r[lo:]) ** 2)
    estimate, comps = detect(mag_db, (float(lo), 1.0), params)
    strong = [c for c in comps if c.peak_value_db - estimate.threshold_db >= PEAK_MARGIN_DB]
    flags = ["nfspem_tied"] if estimate.all_tied else []
    evidence = Evidence(
        method=METHOD_AUTOCORR,
        peaks=strong,
        statistic=float(mag_db.max()),
        threshold=float(estimate.threshold_db),
        detected=bool(strong),
        flags=flags,
    )
    if not strong:
        return evidence

    best = max(strong, key=lambda c: c.peak_value_db)
    seg = mag_db[best.start_index : best.end_index + 1]
    u = lo + best.start_index + int(np.argmax(seg))

    z = x[: x.size - u] * np.conj(x[u:])
    best_period, best_score, best_fold = 0, -np.inf, None
    for period in range(u + 1, 2 * u + 1):
        if z.size // period < 4:
            break
        folded = _fold_profile(z, period)
        score = float(folded.max() / (np.median(folded) + EPS_POWER))
        if score > best_score:
            best_period, best_score, best_fold = period, score, folded
    if best_fold is None:
        evidence.extras["useful_length"] = u
        return evidence

    cp_from_period = best_period - u
    cp_support = _half_prominence_support(best_fold)
    evidence.extras.update(
        {
            "useful_length": int(u),
            "cp_length": int(cp_from_period),
            "symbol_period": int(best_period),
            "cp_support": int(cp_support),
            "useful_s": u / iq.sample_rate_hz,
            "cp_s": cp_from_period / iq.sample_rate_hz,
        }
    )
    return evidence


def matched_filter_detect(
    iq: IqRecording, template: np.ndarray, pfa: float = 1e-3
) -> Evidence:
    """Template cross-correlation with a noise-calibrated threshold.

    The correlator output is normalized by the template norm and by a
    robust (median-based) estimate of the per-sample output power under
    noise, so the threshold and detections are invariant to input scaling.
    Peak components sit on the time axis in seconds.
    """
    template = np.asarray(template, dtype=np.complex128)
    if template.size == 0:
        raise ParameterError("empty template")
    x = np.asarray(iq.samples)
    if template.size > x.size:
        raise ParameterError("template longer than the recording")
    if not 0.0 < pfa < 0.5:
        raise ParameterError(f"pfa must be in (0, 0.5), got {pfa}")

    tnorm = np.linalg.norm(template)
    if tnorm == 0:
        raise ParameterError("template has zero energy")
    y = sig.fftconvolve(x, np.conj(template[::-1]), mode="valid") / tnorm
    p = np.abs(y) ** 2
    # under noise |y|^2 is exponential; median/ln2 estimates its mean
    noise_power = float(np.median(p)) / np.log(2.0)
    if noise_power <= 0.0:
        noise_power = EPS_POWER
    threshold = noise_power * np.log(1.0 / pfa)

    values_db = db10(p / noise_power)
    threshold_db = db10(threshold / noise_power)
    mask = p > threshold
    peaks: list[DetectedComponent] = []
    if mask.any():
        padded = np.concatenate(([False], mask, [False]))
        d = np.diff(padded.astype(np.int8))
        dt = 1.0 / iq.sample_rate_hz
        for s, e in zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1):
            seg = p[s : e + 1]
            peak_idx = s + int(np.argmax(seg))
            peaks.append(
                DetectedComponent(
                    start_index=int(peak_idx),
                    end_index=int(e),
                    center=peak_idx * dt,
                    width=(e - s + 1) * dt,
                    peak_value_db=float(values_db[peak_idx]),
                    mean_excess_db=float(np.mean(values_db[s : e + 1] - threshold_db)),
                )
            )
    return Evidence(
        method=METHOD_MATCHED_FILTER,
        peaks=peaks,
        statistic=float(p.max() / noise_power),
        threshold=float(threshold / noise_power),
        detected=bool(peaks),
        extras={"peak_index": int(np.argmax(p))} if peaks else {},
    )


def spectral_template_match(
    psd: PowerSpectrum, template_psd: np.ndarray, min_score: float = 0.9
) -> Evidence:
    """Slide a dB-shape template across the spectrum, Pearson-correlating.

    Flat inputs (zero variance on either side) score 0 and set the
    ``flat_input`` flag instead of dividing by zero.
    """
    template = np.asarray(template_psd, dtype=float)
    values = np.asarray(psd.values_db, dtype=float)
    if template.size < 2:
        raise ParameterError("template must have at least 2 points")
    if template.size >= values.size:
        raise ParameterError("template must be shorter than the spectrum")

    t = template - template.mean()
    tnorm = np.linalg.norm(t)
    windows = np.lib.stride_tricks.sliding_window_view(values, template.size)
    w = windows - windows.mean(axis=1, keepdims=True)
    wnorm = np.linalg.norm(w, axis=1)
    flags = []
    if tnorm == 0.0 or np.all(wnorm == 0.0):
        flags.append("flat_input")
        scores = np.zeros(windows.shape[0])
    else:
        denom = np.where(wnorm > 0, wnorm * tnorm, np.inf)
        scores = (w @ t) / denom

    peaks: list[DetectedComponent] = []
    if scores.size and not flags:
        order = np.argsort(scores)[::-1]
        taken: list[int] = []
        min_sep = max(1, template.size // 2)
        for idx in order:
            if scores[idx] < min_score:
                break
            if all(abs(idx - j) >= min_sep for j in taken):
                taken.append(int(idx))
        step = psd.freq_step_hz
        for idx in sorted(taken):
            center = psd.freq_start_hz + (idx + (template.size - 1) / 2.0) * step
            peaks.append(
                DetectedComponent(
                    start_index=int(idx),
                    end_index=int(idx + template.size - 1),
                    center=float(center),
                    width=template.size * step,
                    peak_value_db=float(scores[idx]),
                    mean_excess_db=float(scores[idx] - min_score),
                )
            )
    best = float(scores.max()) if scores.size else 0.0
    return Evidence(
        method=METHOD_TEMPLATE_MATCH,
        peaks=peaks,
        statistic=best,
        threshold=float(min_score),
        detected=bool(peaks),
        flags=flags,
        extras={"best_offset": int(np.argmax(scores))} if scores.size else {},
    )

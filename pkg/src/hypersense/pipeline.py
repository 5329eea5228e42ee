"""End-to-end identification: spectrum, floor, per-component narrowband work.

Stages: Welch spectrum -> noise-floor detection -> per-component plan
matching -> channelization -> optional burst detection -> selected sensing
method -> verdict.  Components are processed independently; one failing
component records its error and leaves the others untouched.  Reports are
deterministic for identical inputs (timing is kept out of the canonical
serialization unless asked for).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import classify, sensing
from .dsp import channelize, power_envelope, welch_psd
from .errors import DegenerateSpectrumError, ParameterError
from .iqio import IqRecording
from .noisefloor import DetectedComponent, NoiseFloorEstimate, NoiseFloorParams, detect

# Matched-filter templates: id -> callable(sample_rate_hz) -> complex array.
TEMPLATE_REGISTRY: dict[str, Callable[[float], np.ndarray]] = {}
# Spectral-shape templates: id -> dB array over wideband spectrum bins.
SPECTRAL_TEMPLATE_REGISTRY: dict[str, np.ndarray] = {}


def register_template(template_id: str, factory: Callable[[float], np.ndarray]) -> None:
    TEMPLATE_REGISTRY[template_id] = factory


def register_spectral_template(template_id: str, shape_db: np.ndarray) -> None:
    SPECTRAL_TEMPLATE_REGISTRY[template_id] = np.asarray(shape_db, dtype=float)


@dataclass
class PipelineConfig:
    fft_size: int = 1024
    window: str = "hann"
    overlap: float = 0.5
    floor_k: float = 1.0
    floor_min_width_bins: int = 3
    floor_merge_gap_bins: int = 2
    guard_factor: float = 1.25
    stop_atten_db: float = 60.0
    decimate: bool = True
    channelize_enabled: bool = True
    burst_detection: str = "auto"  # auto | on | off
    envelope_smooth_len: int = 128
    cyclic_step_hz: float = 10e3
    tau_max: int = 256
    peak_k: float = 1.0
    energy_pfa: float = 0.05
    mf_pfa: float = 1e-3
    template_min_score: float = 0.9
    parallel: bool = False

    def floor_params(self) -> NoiseFloorParams:
        return NoiseFloorParams(self.floor_k, self.floor_min_width_bins, self.floor_merge_gap_bins)

    def peak_params(self) -> NoiseFloorParams:
        return NoiseFloorParams(self.peak_k, min_width_bins=1, merge_gap_bins=0)

    def to_dict(self) -> dict:
        return dict(vars(self))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ParameterError(f"unknown pipeline config field {key!r}")
            setattr(cfg, key, value)
        if cfg.burst_detection not in ("auto", "on", "off"):
            raise ParameterError(f"bad burst_detection {cfg.burst_detection!r}")
        return cfg


@dataclass
class BurstRecord:
    start_s: float
    duration_s: float
    mean_power_db: float


@dataclass
class ComponentResult:
    component: DetectedComponent
    verdict: classify.IdentificationVerdict | None
    bursts: list[BurstRecord]
    burst_flags: list[str]
    error: str | None
    timing_s: dict


@dataclass
class IdentificationReport:
    recording: dict
    config: dict
    noise_floor: dict
    results: list[ComponentResult]
    flags: list[str]
    timing_s: dict


def detect_bursts(
    iq: IqRecording, config: PipelineConfig
) -> tuple[list[BurstRecord], list[str]]:
    """Envelope-domain run of the floor detector; bursts are components.

    A constant envelope (a continuous tone, or pure silence) has no level
    structure to segment; that is reported as zero bursts with the
    ``continuous_signal`` flag rather than as an error.
    """
    env_db, (t0, dt) = power_envelope(iq, config.envelope_smooth_len)
    params = NoiseFloorParams(
        k=config.floor_k,
        min_width_bins=max(3, config.envelope_smooth_len // 2),
        merge_gap_bins=config.envelope_smooth_len,
    )
    try:
        estimate, comps = detect(env_db, (t0, dt), params)
    except DegenerateSpectrumError:
        return [], ["continuous_signal"]
    flags = ["nfspem_tied"] if estimate.all_tied else []
    records = [
        BurstRecord(
            start_s=t0 + c.start_index * dt,
            duration_s=c.width,
            mean_power_db=estimate.threshold_db + c.mean_excess_db,
        )
        for c in comps
    ]
    return records, flags


def _cyclic_windows(
    candidate: classify.CandidateSignature,
    fs: float,
    step: float,
    widen: float = 1.0,
) -> list[tuple[float, float]]:
    """Search windows around the candidate's expected cyclic features.

    Each window is wide enough for the local floor statistics but narrow
    enough that the modulation continuum stays flat across it; overlapping
    windows are merged.
    """
    targets: list[tuple[float, float]] = [
        (f.freq_hz, f.tolerance_hz) for f in candidate.cyclic_features_hz
    ]
    if candidate.carrier_spacing_hz > 0.0:
        tol = max((f.tolerance_hz for f in candidate.cyclic_features_hz), default=0.0)
        tol = tol or 0.01 * candidate.carrier_spacing_hz
        targets += [
            (j * candidate.carrier_spacing_hz, tol)
            for j in range(1, candidate.max_carriers)
        ]
    alpha_cap = fs / 2.0 - step
    windows = []
    for target, tol in targets:
        if target > alpha_cap:
            continue
        radius = widen * max(10.0 * tol, 0.1 * target, 12.0 * step)
        windows.append((max(step, target - radius), min(alpha_cap, target + radius)))
    if not windows:
        raise ParameterError("no cyclic features to scan inside the channel rate")
    windows.sort()
    merged = [list(windows[0])]
    for lo, hi in windows[1:]:
        if lo <= merged[-1][1] + step:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def _grid_from_windows(windows: list[tuple[float, float]], step: float) -> np.ndarray:
    points: list[float] = []
    for lo, hi in windows:
        k0, k1 = int(np.ceil(lo / step)), int(np.floor(hi / step))
        points.extend(step * k for k in range(k0, k1 + 1))
    return np.array(sorted(set(points)))


def _run_method(
    method: str,
    candidate: classify.CandidateSignature,
    channelized: IqRecording,
    psd,
    noise_var: float,
    config: PipelineConfig,
    widened: bool,
    passband_hz: float,
) -> sensing.Evidence:
    fs = channelized.sample_rate_hz
    n = len(channelized.samples)
    if method == sensing.METHOD_CYCLO:
        windows = _cyclic_windows(
            candidate, fs, config.cyclic_step_hz, widen=2.0 if widened else 1.0
        )
        grid = _grid_from_windows(windows, config.cyclic_step_hz)
        profile = sensing.scan_cyclic(channelized, grid, (0, min(config.tau_max, n // 4)))
        return sensing.cyclic_evidence(profile, config.peak_params(), windows)
    if method == sensing.METHOD_AUTOCORR:
        # a band-limited channel is self-correlated out to ~fs/bandwidth
        # lags; start the search above that
        lo = 1
        if passband_hz < fs:
            lo = max(1, int(np.ceil(2.5 * fs / passband_hz)))
        hi = min(256, n // 4)
        if candidate.cp_feature is not None:
            expected_u = candidate.cp_feature.useful_s * fs
            lo = min(lo, max(1, int(expected_u / 2)))
            period = (candidate.cp_feature.useful_s + candidate.cp_feature.cp_s) * fs
            hi = min(max(hi, int(2.5 * period)), n // 4)
        return sensing.cp_autocorr_detect(channelized, (lo, hi), config.peak_params())
    if method == sensing.METHOD_MATCHED_FILTER:
        template_id = candidate.preamble_template_id or ""
        if template_id not in TEMPLATE_REGISTRY:
            raise ParameterError(f"unknown preamble template {template_id!r}")
        template = TEMPLATE_REGISTRY[template_id](fs)
        return sensing.matched_filter_detect(channelized, template, config.mf_pfa)
    if method == sensing.METHOD_TEMPLATE_MATCH:
        template_id = candidate.spectral_template_id or ""
        if template_id not in SPECTRAL_TEMPLATE_REGISTRY:
            raise ParameterError(f"unknown spectral template {template_id!r}")
        template = SPECTRAL_TEMPLATE_REGISTRY[template_id]
        return sensing.spectral_template_match(psd, template, config.template_min_score)
    return sensing.energy_detect(channelized, noise_var, config.energy_pfa)


def _process_component(
    iq: IqRecording,
    psd,
    estimate: NoiseFloorEstimate,
    noise_var_fullband: float,
    component: DetectedComponent,
    plan: classify.ChannelPlan,
    config: PipelineConfig,
) -> ComponentResult:
    timing: dict[str, float] = {}
    t_start = time.perf_counter()
    try:
        candidates = classify.scb_match(component, plan)
        labels = [c.label for c in candidates]
        top = candidates[0] if candidates else None

        t0 = time.perf_counter()
        guard = config.guard_factor
        if top is not None and top.cyclic_features_hz:
            # a cyclic line at alpha correlates spectral content alpha apart;
            # keep enough passband around the component for those pairs
            alpha_max = max(f.freq_hz for f in top.cyclic_features_hz)
            if top.carrier_spacing_hz > 0.0:
                alpha_max = max(alpha_max, (top.max_carriers - 1) * top.carrier_spacing_hz)
            guard = max(guard, 1.6 * alpha_max / max(component.width, 1.0))
        if config.channelize_enabled:
            channelized = channelize(
                iq,
                component,
                guard_factor=guard,
                stop_atten_db=config.stop_atten_db,
                decimate=config.decimate,
            )
        else:
            channelized = iq
        timing["channelize"] = time.perf_counter() - t0

        noise_var = noise_var_fullband * channelized.sample_rate_hz / iq.sample_rate_hz
        passband_hz = (
            min(component.width * guard, iq.sample_rate_hz)
            if config.channelize_enabled
            else iq.sample_rate_hz
        )
        evidences: list[sensing.Evidence] = []
        if len(channelized.samples) >= 100:
            evidences.append(
                sensing.energy_detect(channelized, noise_var, config.energy_pfa)
            )

        bursts: list[BurstRecord] = []
        burst_flags: list[str] = []
        want_bursts = config.burst_detection == "on" or (
            config.burst_detection == "auto" and top is not None and top.burst_header
        )
        if want_bursts:
            t0 = time.perf_counter()
            bursts, burst_flags = detect_bursts(channelized, config)
            timing["burst_detection"] = time.perf_counter() - t0

        verdict = None
        if top is not None:
            method = classify.ssmsb_select(top)
            t0 = time.perf_counter()
            evidences.append(
                _run_method(
                    method, top, channelized, psd, noise_var, config,
                    widened=False, passband_hz=passband_hz,
                )
            )
            timing["sensing"] = time.perf_counter() - t0
            if estimate.all_tied:
                for ev in evidences:
                    if "nfspem_tied" not in ev.flags:
                        ev.flags.append("nfspem_tied")
            verdict = classify.decide(top, evidences, component, labels)
            if (
                verdict.verdict != classify.VERDICT_IDENTIFIED
                and method == sensing.METHOD_CYCLO
            ):
                # one widened rescan before settling on a downgrade
                t0 = time.perf_counter()
                evidences.append(
                    _run_method(
                        method, top, channelized, psd, noise_var, config,
                        widened=True, passband_hz=passband_hz,
                    )
                )
                timing["rescan"] = time.perf_counter() - t0
                if estimate.all_tied and "nfspem_tied" not in evidences[-1].flags:
                    evidences[-1].flags.append("nfspem_tied")
                verdict = classify.decide(top, evidences, component, labels)
                verdict.extras["rescanned"] = True
        else:
            if estimate.all_tied:
                for ev in evidences:
                    if "nfspem_tied" not in ev.flags:
                        ev.flags.append("nfspem_tied")
            verdict = classify.decide(None, evidences, component, labels)

        timing["total"] = time.perf_counter() - t_start
        return ComponentResult(component, verdict, bursts, burst_flags, None, timing)
    except Exception as exc:  # per-component isolation
        timing["total"] = time.perf_counter() - t_start
        return ComponentResult(component, None, [], [], f"{type(exc).__name__}: {exc}", timing)


def run_identification(
    iq: IqRecording, config: PipelineConfig, plan: classify.ChannelPlan
) -> IdentificationReport:
    """Identify every detected component of the recording against the plan."""
    timing: dict[str, float] = {}
    t0 = time.perf_counter()
    psd = welch_psd(iq, config.fft_size, config.window, config.overlap)
    timing["psd"] = time.perf_counter() - t0

    axis_abs = (iq.center_freq_hz + psd.freq_start_hz, psd.freq_step_hz)
    t0 = time.perf_counter()
    estimate, components = detect(psd.values_db, axis_abs, config.floor_params())
    timing["wideband_sensing"] = time.perf_counter() - t0

    linear = np.power(10.0, psd.values_db / 10.0)
    noise_bins = psd.values_db <= estimate.threshold_db
    noise_var_fullband = float(np.mean(linear[noise_bins])) if noise_bins.any() else float(np.mean(linear))

    worker = lambda comp: _process_component(
        iq, psd, estimate, noise_var_fullband, comp, plan, config
    )
    t0 = time.perf_counter()
    if config.parallel and len(components) > 1:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(worker, components))
    else:
        results = [worker(c) for c in components]
    timing["components"] = time.perf_counter() - t0

    flags = ["nfspem_tied"] if estimate.all_tied else []
    return IdentificationReport(
        recording={
            "sample_rate_hz": iq.sample_rate_hz,
            "center_freq_hz": iq.center_freq_hz,
            "sample_count": len(iq.samples),
            "description": iq.description,
        },
        config=config.to_dict(),
        noise_floor={
            "threshold_db": estimate.threshold_db,
            "change_level": estimate.change_level,
            "level_count": estimate.level_count,
            "level_width_db": estimate.level_width,
            "all_tied": estimate.all_tied,
            "averaging_count": psd.averaging_count,
        },
        results=results,
        flags=flags,
        timing_s=timing,
    )


# -- report serialization ------------------------------------------------------

def _component_to_dict(c: DetectedComponent) -> dict:
    return {
        "start_bin": c.start_index,
        "end_bin": c.end_index,
        "center_hz": c.center,
        "width_hz": c.width,
        "peak_db": c.peak_value_db,
        "mean_excess_db": c.mean_excess_db,
    }


def _evidence_to_dict(ev: sensing.Evidence) -> dict:
    return {
        "method": ev.method,
        "statistic": float(ev.statistic),
        "threshold": float(ev.threshold),
        "detected": ev.detected,
        "flags": list(ev.flags),
        "peaks": [
            {"center": p.center, "width": p.width, "peak_db": p.peak_value_db}
            for p in ev.peaks
        ],
        "extras": {
            k: v
            for k, v in ev.extras.items()
            if isinstance(v, (int, float, str, bool))
        },
    }


def report_to_dict(report: IdentificationReport, include_timing: bool = False) -> dict:
    results = []
    for r in report.results:
        entry: dict = {"component": _component_to_dict(r.component)}
        if r.verdict is not None:
            v = r.verdict
            entry["verdict"] = v.verdict
            entry["label"] = v.label
            entry["candidates"] = list(v.candidates_ranked)
            entry["matched_features"] = [
                {"kind": m.kind, "expected": m.expected, "measured": m.measured}
                for m in v.matched_features
            ]
            entry["extras"] = dict(v.extras)
            entry["evidence"] = [_evidence_to_dict(ev) for ev in v.evidence]
        entry["bursts"] = [
            {"start_s": b.start_s, "duration_s": b.duration_s, "mean_power_db": b.mean_power_db}
            for b in r.bursts
        ]
        entry["burst_flags"] = list(r.burst_flags)
        entry["error"] = r.error
        if include_timing:
            entry["timing_s"] = dict(r.timing_s)
        results.append(entry)
    out = {
        "recording": report.recording,
        "config": report.config,
        "noise_floor": report.noise_floor,
        "components": results,
        "flags": report.flags,
    }
    if include_timing:
        out["timing_s"] = report.timing_s
    return out


def serialize_report(report: IdentificationReport, include_timing: bool = False) -> str:
    return json.dumps(report_to_dict(report, include_timing), indent=2) + "\n"

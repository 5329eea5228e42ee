"""Batch command-line interface.

Commands: ``simulate`` (render a scenario config to an IQ file plus
ground truth), ``identify`` (run the identification pipeline over a
recording), ``evaluate`` (Monte-Carlo confidence grid), ``nfspem`` (run
the noise-floor detector alone over a CSV of values).

Exit codes: 0 success; 2 unusable configuration or arguments (messages
are line-anchored for config parse errors); 3 IQ data/sidecar mismatch;
4 a plan selected a sensing method that exists in the registry only as
metadata.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import classify, evaluation, pipeline, wavegen
from .dsp import power_envelope, welch_psd
from .errors import IqFormatError, ParameterError, UnsupportedMethodError
from .iqio import read_iq, write_iq
from .noisefloor import NoiseFloorParams, detect

PLAN_ENV_VAR = "HS_PLAN_PATH"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IQ_FORMAT = 3
EXIT_UNSUPPORTED_METHOD = 4


def _default_plan_path() -> Path:
    import os

    env = os.environ.get(PLAN_ENV_VAR)
    if env:
        return Path(env)
    return Path(str(resources.files("hypersense.data") / "ism24_plan.json"))


def _load_json(path: Path, what: str) -> dict:
    try:
        text = path.read_text()
    except OSError as e:
        raise SystemExit(_fail(EXIT_CONFIG, f"{what} {path}: {e}"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SystemExit(
            _fail(EXIT_CONFIG, f"{path}:{e.lineno}:{e.colno}: {e.msg}")
        )


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _write_xy_csv(path: str, axis: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w") as fh:
        for a, v in zip(axis, values):
            fh.write(f"{float(a)!r},{float(v)!r}\n")


# -- commands -------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    spec_dict = _load_json(Path(args.scenario), "scenario config")
    try:
        spec = wavegen.scenario_from_dict(spec_dict)
        if args.seed is not None:
            spec.seed = args.seed
        fft_size = args.fft_size or 1024
        rec, truth = wavegen.compose_scenario(spec, fft_size=fft_size)
    except ParameterError as e:
        return _fail(EXIT_CONFIG, str(e))
    out = Path(args.out)
    write_iq(rec, out)
    truth_path = Path(str(out) + ".truth.json")
    truth_path.write_text(json.dumps(wavegen.truth_to_dict(truth), indent=2) + "\n")
    print(f"wrote {out} ({len(rec.samples)} samples), sidecar and {truth_path.name}")
    return EXIT_OK


def _pipeline_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    if args.config:
        data = _load_json(Path(args.config), "pipeline config")
        try:
            cfg = pipeline.PipelineConfig.from_dict(data)
        except ParameterError as e:
            raise SystemExit(_fail(EXIT_CONFIG, str(e)))
    else:
        cfg = pipeline.PipelineConfig()
    if args.fft_size:
        cfg.fft_size = args.fft_size
    if args.k is not None:
        cfg.floor_k = args.k
    if getattr(args, "no_channelize", False):
        cfg.channelize_enabled = False
    if getattr(args, "parallel", False):
        cfg.parallel = True
    return cfg


def cmd_identify(args: argparse.Namespace) -> int:
    try:
        rec = read_iq(args.iq_path)
    except FileNotFoundError as e:
        return _fail(EXIT_CONFIG, str(e))
    except IqFormatError as e:
        return _fail(EXIT_IQ_FORMAT, str(e))

    plan_path = Path(args.plan) if args.plan else _default_plan_path()
    plan_dict = _load_json(plan_path, "channel plan")
    try:
        plan = classify.plan_from_dict(plan_dict)
    except ParameterError as e:
        return _fail(EXIT_CONFIG, str(e))
    cfg = _pipeline_config(args)

    try:
        report = pipeline.run_identification(rec, cfg, plan)
    except UnsupportedMethodError as e:
        return _fail(EXIT_UNSUPPORTED_METHOD, str(e))
    # a per-component unsupported-method error is isolated in the report;
    # surface it as the documented exit code all the same
    for result in report.results:
        if result.error and result.error.startswith("UnsupportedMethodError"):
            return _fail(EXIT_UNSUPPORTED_METHOD, result.error)

    text = pipeline.serialize_report(report, include_timing=args.timing)
    out = Path(args.out) if args.out else Path(str(args.iq_path) + ".report.json")
    out.write_text(text)

    if args.emit_psd:
        psd = welch_psd(rec, cfg.fft_size, cfg.window, cfg.overlap)
        _write_xy_csv(args.emit_psd, rec.center_freq_hz + psd.freqs_hz, psd.values_db)
    if args.emit_envelope:
        env_db, (t0, dt) = power_envelope(rec, cfg.envelope_smooth_len)
        _write_xy_csv(args.emit_envelope, t0 + dt * np.arange(env_db.size), env_db)
    if args.emit_cyclic:
        profile = _first_cyclic_profile(rec, report, cfg, plan)
        if profile is None:
            Path(args.emit_cyclic).write_text("")
        else:
            _write_xy_csv(args.emit_cyclic, profile.alpha_grid, profile.magnitude_db)
    print(f"wrote {out}")
    return EXIT_OK


def _first_cyclic_profile(rec, report, cfg, plan):
    """Recompute the first component's cyclic scan for plot export."""
    from . import sensing
    from .dsp import channelize

    for result in report.results:
        if result.verdict is None or not result.verdict.candidates_ranked:
            continue
        cands = classify.scb_match(result.component, plan)
        if not cands or classify.ssmsb_select(cands[0]) != sensing.METHOD_CYCLO:
            continue
        ch = (
            channelize(rec, result.component, cfg.guard_factor, cfg.stop_atten_db, cfg.decimate)
            if cfg.channelize_enabled
            else rec
        )
        windows = pipeline._cyclic_windows(cands[0], ch.sample_rate_hz, cfg.cyclic_step_hz)
        grid = pipeline._grid_from_windows(windows, cfg.cyclic_step_hz)
        n = len(ch.samples)
        return sensing.scan_cyclic(ch, grid, (0, min(cfg.tau_max, n // 4)))
    return None


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        snr_list = [float(v) for v in args.snr_list.split(",") if v.strip()]
        occ_list = [float(v) for v in args.occ_list.split(",") if v.strip()]
    except ValueError as e:
        return _fail(EXIT_CONFIG, f"bad grid values: {e}")
    if not snr_list or not occ_list:
        return _fail(EXIT_CONFIG, "empty SNR or occupancy list")
    try:
        cells = evaluation.confidence_grid(
            snr_list,
            occ_list,
            trials=args.trials,
            resamples=args.resamples,
            seed=args.seed if args.seed is not None else 0,
            fft_size=args.fft_size or 1024,
            workers=args.workers,
        )
    except ParameterError as e:
        return _fail(EXIT_CONFIG, str(e))
    evaluation.write_grid_csv(cells, args.out)
    print(f"wrote {args.out} ({len(cells)} cells)")
    return EXIT_OK


def cmd_nfspem(args: argparse.Namespace) -> int:
    path = Path(args.values_csv)
    try:
        rows = [line.strip() for line in path.read_text().splitlines() if line.strip()]
        columns = [row.split(",") for row in rows]
        values = np.array([float(col[-1]) for col in columns])
        if columns and len(columns[0]) > 1:
            axis_vals = np.array([float(col[0]) for col in columns])
            step = float(axis_vals[1] - axis_vals[0]) if len(axis_vals) > 1 else 1.0
            axis = (float(axis_vals[0]), step)
        else:
            axis = (0.0, 1.0)
    except OSError as e:
        return _fail(EXIT_CONFIG, f"{path}: {e}")
    except (ValueError, IndexError) as e:
        return _fail(EXIT_CONFIG, f"{path}: not a CSV of numbers: {e}")

    params = NoiseFloorParams(
        k=args.k if args.k is not None else 1.0,
        min_width_bins=args.min_width,
        merge_gap_bins=args.merge_gap,
    )
    try:
        estimate, comps = detect(values, axis, params)
    except ParameterError as e:
        return _fail(EXIT_CONFIG, str(e))
    except Exception as e:
        return _fail(EXIT_CONFIG, f"{type(e).__name__}: {e}")
    out = {
        "threshold_db": estimate.threshold_db,
        "change_level": estimate.change_level,
        "level_count": estimate.level_count,
        "level_width_db": estimate.level_width,
        "all_tied": estimate.all_tied,
        "components": [
            {
                "start_index": c.start_index,
                "end_index": c.end_index,
                "center": c.center,
                "width": c.width,
                "peak_value_db": c.peak_value_db,
                "mean_excess_db": c.mean_excess_db,
            }
            for c in comps
        ],
    }
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypersense",
        description="Wideband spectrum sensing and signal identification toolkit",
    )
    parser.add_argument("--seed", type=int, default=None, help="override scenario/eval seed")
    parser.add_argument("--fft-size", type=int, default=None, help="override FFT size")
    parser.add_argument("--k", type=float, default=None, help="level-height coefficient in (0, 1]")
    parser.add_argument("--config", default=None, help="pipeline config JSON path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scenario config to an IQ recording")
    p.add_argument("scenario", help="scenario config JSON")
    p.add_argument("-o", "--out", required=True, help="output IQ data path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="run identification over a recording")
    p.add_argument("iq_path", help="IQ data file (cf32le with JSON sidecar)")
    p.add_argument("--plan", default=None, help=f"channel plan (default ${PLAN_ENV_VAR} or shipped plan)")
    p.add_argument("-o", "--out", default=None, help="report path (default <iq>.report.json)")
    p.add_argument("--no-channelize", action="store_true", help="debug: skip bandpass isolation")
    p.add_argument("--parallel", action="store_true", help="process components in parallel")
    p.add_argument("--timing", action="store_true", help="include timing (report no longer byte-stable)")
    p.add_argument("--emit-psd", default=None, metavar="CSV", help="write spectrum plot data")
    p.add_argument("--emit-cyclic", default=None, metavar="CSV", help="write first cyclic profile")
    p.add_argument("--emit-envelope", default=None, metavar="CSV", help="write power envelope")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", help="Monte-Carlo confidence grid")
    p.add_argument("--snr-list", required=True, help="comma-separated SNR values in dB")
    p.add_argument("--occ-list", required=True, help="comma-separated occupancy fractions")
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-o", "--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("nfspem", help="run the noise-floor detector over a CSV of values")
    p.add_argument("values_csv", help="CSV: either `value` or `axis,value` per line")
    p.add_argument("--min-width", type=int, default=3)
    p.add_argument("--merge-gap", type=int, default=2)
    p.add_argument("-o", "--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_nfspem)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else EXIT_CONFIG
    try:
        return args.func(args)
    except SystemExit as e:
        return int(e.code) if e.code else EXIT_CONFIG


def entry() -> None:
    sys.exit(main())

"""Command-line interface.

Verbs:
  run              one end-to-end simulation, writes report + images
  sweep            repeat runs along one scenario axis, aggregate to CSV
  bit-error-study  reconstructed-frame SER vs injected info-bit errors
  params           print the radar performance parameters of a config

Exit codes: 0 success, 2 configuration error, 3 synchronization failure,
4 decode failure when no pilot-image fallback was requested.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import PROFILE_NAMES, load_config
from .errors import ConfigError
from .frame import radar_parameters
from .pipeline import SWEEP_AXES, StageError, run_bit_error_study, run_single, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNC = 3
EXIT_DECODE = 4


def _common_args(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", default=None,
                   help="JSON scenario config (overlaid on the profile)")
    p.add_argument("--profile", choices=PROFILE_NAMES, default=None,
                   help="base parameter profile (default: desk)")
    p.add_argument("--seed", type=int, default=None, metavar="U64",
                   help="override the experiment master seed")
    p.add_argument("--out", metavar="DIR", default=None,
                   help="output directory (default: config output.directory)")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="parallel sweep workers")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ofdm-isac",
                                 description="bistatic OFDM radar-communication link simulator")
    sub = ap.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="single end-to-end simulation")
    _common_args(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one scenario axis")
    _common_args(p_sweep)
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values (to: base-rate samples)")
    p_sweep.add_argument("--repetitions", type=int, default=None)

    p_bes = sub.add_parser("bit-error-study", help="SER vs injected info-bit errors")
    _common_args(p_bes)
    p_bes.add_argument("--counts", default="0,1,10,100",
                       help="comma-separated bit error counts")
    p_bes.add_argument("--repetitions", type=int, default=None)

    p_par = sub.add_parser("params", help="print radar performance parameters")
    _common_args(p_par)
    p_par.add_argument("--json", action="store_true", dest="as_json")
    return ap


def _load(args) -> "ScenarioConfig":
    config = load_config(args.config, profile=args.profile)
    if args.seed is not None:
        config.experiment.seed = args.seed
    if getattr(args, "workers", None):
        config.experiment.workers = args.workers
    if args.out is not None:
        config.output.directory = args.out
    return config


def cmd_params(args) -> int:
    config = _load(args)
    spec = config.frame
    pilot = radar_parameters(spec, full_frame=False)
    full = radar_parameters(spec, full_frame=True)
    if args.as_json:
        print(json.dumps({"pilot": vars(pilot), "full_frame": vars(full)},
                         indent=2, sort_keys=True))
        return EXIT_OK
    rows = [
        ("Processing gain (pilots only)", f"{pilot.processing_gain_db:.2f} dB"),
        ("Processing gain (full-frame)", f"{full.processing_gain_db:.2f} dB"),
        ("Range resolution", f"{pilot.range_resolution_m:.2f} m"),
        ("Max. unamb. range (pilots only)", f"{pilot.max_unamb_range_m:.2f} m"),
        ("Max. unamb. range (full-frame)", f"{full.max_unamb_range_m:.2f} m"),
        ("Max. ISI-free range", f"{pilot.max_isi_free_range_m:.2f} m"),
        ("Doppler shift resolution", f"{pilot.doppler_resolution_hz:.2f} Hz"),
        ("Max. unamb. Doppler shift (pilots only)", f"{pilot.max_unamb_doppler_hz / 1e3:.2f} kHz"),
        ("Max. unamb. Doppler shift (full-frame)", f"{full.max_unamb_doppler_hz / 1e3:.2f} kHz"),
        ("Max. ICI-free Doppler shift", f"{pilot.max_ici_free_doppler_hz / 1e3:.2f} kHz"),
    ]
    width = max(len(r[0]) for r in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load(args)
    out = config.output.directory
    try:
        report = run_single(config, out_dir=out)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SYNC if exc.stage == "sync" else 1
    print(json.dumps(report, indent=2, sort_keys=True))
    if not report["comm"]["parity_ok"] and not config.radar.pilot_fallback:
        print("decode failed and pilot fallback disabled", file=sys.stderr)
        return EXIT_DECODE
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    if args.repetitions is not None:
        config.experiment.repetitions = args.repetitions
    values = [float(v) for v in args.values.split(",") if v.strip()]
    result = run_sweep(config, args.axis, values, out_dir=config.output.directory)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bit_error_study(args) -> int:
    config = _load(args)
    counts = [int(v) for v in args.counts.split(",") if v.strip()]
    result = run_bit_error_study(config, counts, repetitions=args.repetitions,
                                 out_dir=config.output.directory)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "params":
            return cmd_params(args)
        if args.verb == "run":
            return cmd_run(args)
        if args.verb == "sweep":
            return cmd_sweep(args)
        if args.verb == "bit-error-study":
            return cmd_bit_error_study(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())

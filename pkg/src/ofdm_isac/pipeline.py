"""Experiment pipelines: single runs, axis sweeps, bit-error studies.

A single run executes the receiver block order: transmit frame ->
impairment channel -> synchronization -> communication processing ->
transmit-frame reconstruction -> radar images. Every random quantity
derives from the experiment master seed through a pure seed tree, so a
config+seed pair reproduces bit-identical reports and image files.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import add_awgn, apply_channel, apply_sfo, resolve_scenario
from .config import ScenarioConfig, config_hash, derive_seed, parse_config
from .errors import SimulationError
from .frame import FrameSpec, TimeSignal
from .radar import (
    detect_peaks,
    noise_floor,
    periodogram,
    pilot_image,
    reconstruct_frame,
    ser_vs_floor_sweep,
    symbol_error_rate,
)
from .report import (
    render_evm_profiles,
    render_sweep_curve,
    to_jsonable,
    write_evm_csv,
    write_peaks_csv,
    write_radar_image,
    write_run_report,
    write_table_csv,
)
from .rx import decode_payload, equalize, estimate_channel, evm_profile
from .sync import SyncConfig, SyncReport, demodulate_frame, synchronize
from .tx import build_frame, frame_layout, ofdm_modulate


class StageError(SimulationError):
    """A pipeline stage failed; carries the partial report."""

    def __init__(self, stage: str, report: dict, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.report = report
        self.cause = cause


def _sync_config(cfg: ScenarioConfig) -> SyncConfig:
    s = cfg.sync
    return SyncConfig(sc_threshold=s.sc_threshold, ridge_threshold_db=s.ridge_threshold_db,
                      dtp_pad_factor=s.dtp_pad_factor, ddp_pad_factor=s.ddp_pad_factor,
                      resampler_taps=s.resampler_taps)


def run_single(config: ScenarioConfig, out_dir: str | Path | None = None,
               tag: str = "run") -> dict:
    """Execute one end-to-end simulation and (optionally) write artifacts."""
    spec = config.frame
    master = config.experiment.seed
    report: dict = {
        "provenance": {"config_hash": config_hash(config), "seed": master,
                       "version": __version__},
        "status": {"ok": False, "failed_stage": None, "error": None},
    }
    out = Path(out_dir) if out_dir is not None else None
    stage = "tx"
    try:
        data_rng = np.random.default_rng(derive_seed(master, 1))
        frame = build_frame(spec, placement_mode=config.placement, data_rng=data_rng)
        sig = ofdm_modulate(frame.grid, spec, oversampling=spec.oversampling)
        os_f = spec.oversampling
        guard = config.experiment.guard_symbols * spec.symbol_len * os_f
        tx = TimeSignal(np.concatenate([np.zeros(guard), sig.samples, np.zeros(guard)]),
                        sig.sample_rate)

        stage = "channel"
        scenario = replace(config.channel, noise_seed=derive_seed(master, 2))
        scenario = resolve_scenario(scenario, tx_power=sig.power(), ref_rate=spec.sample_rate)
        y = apply_channel(tx, scenario)
        y = apply_sfo(y, scenario.offsets.sfo_ppm)
        y = add_awgn(y, scenario)

        delta = scenario.offsets.sfo_ppm * 1e-6
        fs = y.sample_rate
        true_start = (guard + scenario.offsets.sto * fs) / (1.0 + delta)
        true_fo = scenario.offsets.cfo + scenario.paths[0].doppler

        stage = "sync"
        if config.sync.enabled:
            grid, sync_rep = synchronize(y, spec, frame.preamble, _sync_config(config))
        else:
            start = int(round(true_start))
            grid = demodulate_frame(y, start, spec)
            sync_rep = SyncReport(coarse_start=start, fine_start=start,
                                  coarse_fo_hz=0.0, residual_fo_hz=0.0,
                                  preamble_sfo_ppm=0.0, residual_sfo_ppm=0.0,
                                  los_delay_tap=0.0)
        report["sync"] = sync_rep.to_dict()
        report["sync"]["enabled"] = config.sync.enabled
        if config.sync.enabled:
            report["sync"]["errors"] = {
                "timing_samples": sync_rep.fine_start - true_start,
                "sample_exact": bool(abs(sync_rep.fine_start - true_start) <= 0.5),
                "fo_hz": sync_rep.total_fo_hz - true_fo,
                "sfo_ppm": sync_rep.total_sfo_ppm - scenario.offsets.sfo_ppm,
            }

        stage = "comm"
        comm = decode_payload(grid, spec, frame.placement, truth_bits=frame.info_bits)
        est = estimate_channel(grid, spec)
        eq, _ = equalize(grid, est)
        evm_sym, evm_sub = evm_profile(eq, frame.payload_grid, spec)
        report["comm"] = {
            "parity_ok": comm.parity_ok,
            "ber": comm.ber, "bit_errors": comm.bit_errors,
            "n_codewords": len(comm.codewords),
            "decode_iterations": [r.iterations for r in comm.codewords],
            "noise_var_estimate": comm.noise_var,
            "evm_rms": float(np.sqrt(np.mean(evm_sym ** 2))),
        }

        stage = "radar"
        pads = (config.radar.range_pad, config.radar.doppler_pad)
        det = config.radar.detector
        radar_rep: dict = {}
        pil = pilot_image(grid, spec, pads)
        pil_peaks = detect_peaks(pil, guard=det.guard_bins, threshold_db=det.threshold_db)
        radar_rep["pilot"] = {
            "peaks": [vars(p) for p in pil_peaks],
            "noise_floor_db": noise_floor(pil, pil_peaks),
        }
        use_full = comm.parity_ok or not config.radar.pilot_fallback
        if use_full:
            rec = reconstruct_frame(comm, spec, frame.placement)
            full = periodogram(grid, rec, spec, pads)
            full_peaks = detect_peaks(full, guard=det.guard_bins, threshold_db=det.threshold_db)
            radar_rep["full_frame"] = {
                "peaks": [vars(p) for p in full_peaks],
                "noise_floor_db": noise_floor(full, full_peaks),
                "reconstruction_ser": symbol_error_rate(rec, frame.payload_grid, spec),
            }
        else:
            radar_rep["full_frame"] = {"discarded": "decode failed; pilot image only"}
        report["radar"] = radar_rep

        stage = "write"
        if out is not None:
            fmts = config.output.formats
            rel = (lambda p: str(Path(p).relative_to(out)))
            files: dict = {}
            if "bin" in fmts or "png" in fmts:
                files["pilot_image"] = {k: rel(v) for k, v in
                                        write_radar_image(pil, out / f"{tag}_pilot", fmts).items()}
                if use_full:
                    files["full_image"] = {k: rel(v) for k, v in
                                           write_radar_image(full, out / f"{tag}_full", fmts).items()}
            if "csv" in fmts:
                files["pilot_peaks"] = rel(write_peaks_csv(pil_peaks, out / f"{tag}_pilot_peaks.csv"))
                if use_full:
                    files["full_peaks"] = rel(write_peaks_csv(full_peaks, out / f"{tag}_full_peaks.csv"))
                files["evm"] = rel(write_evm_csv(evm_sym, evm_sub, out / f"{tag}_evm.csv"))
            if "png" in fmts:
                files["evm_png"] = rel(render_evm_profiles(evm_sym, evm_sub, out / f"{tag}_evm.png"))
            report["files"] = files
        report["status"]["ok"] = True
        report = to_jsonable(report)
        if out is not None and "json" in config.output.formats:
            write_run_report(report, out / f"{tag}_report.json")
        return report
    except Exception as exc:
        report["status"] = {"ok": False, "failed_stage": stage, "error": str(exc)}
        if out is not None:
            write_run_report(report, out / f"{tag}_report.json")
        if isinstance(exc, (SimulationError, ValueError)):
            raise StageError(stage, report, exc) from exc
        raise


SWEEP_AXES = ("snr_los", "snr_sp", "sfo", "fo", "to", "ser")


def _apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    d = config.to_dict()
    if axis == "snr_los":
        d["channel"]["snr_los_db"] = value
    elif axis == "snr_sp":
        d["channel"]["snr_secondary_db"] = [value] * len(d["channel"]["snr_secondary_db"])
    elif axis == "sfo":
        d["channel"]["offsets"]["sfo_ppm"] = value
    elif axis == "fo":
        d["channel"]["offsets"]["cfo_hz"] = value
    elif axis == "to":
        # value in base-rate samples
        d["channel"]["offsets"]["sto_s"] = value / config.frame.bandwidth
    else:
        raise ValueError(f"axis {axis!r} not applicable per run")
    return parse_config(d)


def _cell_metrics(report: dict) -> dict:
    m = {
        "ok": report["status"]["ok"],
        "ber": report.get("comm", {}).get("ber"),
        "bit_errors": report.get("comm", {}).get("bit_errors"),
        "parity_ok": report.get("comm", {}).get("parity_ok"),
        "evm_rms": report.get("comm", {}).get("evm_rms"),
        "pilot_floor_db": report.get("radar", {}).get("pilot", {}).get("noise_floor_db"),
        "full_floor_db": report.get("radar", {}).get("full_frame", {}).get("noise_floor_db"),
    }
    err = report.get("sync", {}).get("errors")
    if err:
        m["timing_err"] = err["timing_samples"]
        m["fo_err_hz"] = err["fo_hz"]
        m["sfo_err_ppm"] = err["sfo_ppm"]
    return m


def _sweep_cell(args) -> tuple[int, int, dict | str]:
    config_dict, axis, value, i, rep, master = args
    try:
        cfg = parse_config(config_dict)
        cfg = _apply_axis(cfg, axis, value)
        cfg.experiment.seed = derive_seed(master, 100 + SWEEP_AXES.index(axis), i, rep)
        report = run_single(cfg, out_dir=None)
        return i, rep, _cell_metrics(report)
    except Exception as exc:  # cell failures recorded, sweep continues
        return i, rep, f"{type(exc).__name__}: {exc}"


def run_sweep(config: ScenarioConfig, axis: str, values, out_dir: str | Path | None = None) -> dict:
    """Sweep one scenario axis with per-cell derived seeds and aggregate."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    values = [float(v) for v in values]
    master = config.experiment.seed
    reps = config.experiment.repetitions
    if axis == "ser":
        res = ser_vs_floor_sweep(config.frame, config.channel, values,
                                 repetitions=reps,
                                 pads=(config.radar.range_pad, config.radar.doppler_pad),
                                 seed=master,
                                 detector_threshold_db=config.radar.detector.threshold_db)
        rows = res.as_table()
        result = {"axis": axis, "values": values, "rows": rows,
                  "crossover_ser": res.crossover_ser}
    else:
        jobs = [(config.to_dict(), axis, v, i, r, master)
                for i, v in enumerate(values) for r in range(reps)]
        if config.experiment.workers > 1:
            with ProcessPoolExecutor(max_workers=config.experiment.workers) as pool:
                outcomes = list(pool.map(_sweep_cell, jobs))
        else:
            outcomes = [_sweep_cell(j) for j in jobs]
        cells: dict[tuple[int, int], dict | str] = {(i, r): m for i, r, m in outcomes}
        rows = []
        failures = []
        for i, v in enumerate(values):
            ms = [cells[(i, r)] for r in range(reps)]
            good = [m for m in ms if isinstance(m, dict)]
            failures.extend(f"value {v} rep {r}: {m}" for r, m in enumerate(ms)
                            if isinstance(m, str))
            row = {"value": v, "n_ok": len(good), "n_failed": reps - len(good)}
            for key in ("ber", "evm_rms", "pilot_floor_db", "full_floor_db",
                        "timing_err", "fo_err_hz", "sfo_err_ppm"):
                vals = [m[key] for m in good if m.get(key) is not None]
                if vals:
                    row[f"{key}_mean"] = float(np.mean(vals))
                    row[f"{key}_std"] = float(np.std(vals))
            rows.append(row)
        result = {"axis": axis, "values": values, "rows": rows, "failures": failures}
    result["provenance"] = {"config_hash": config_hash(config), "seed": master,
                            "version": __version__}
    if out_dir is not None:
        out = Path(out_dir)
        if "csv" in config.output.formats:
            write_table_csv(rows, out / f"sweep_{axis}.csv")
        if "json" in config.output.formats:
            write_run_report(result, out / f"sweep_{axis}.json")
        if "png" in config.output.formats and rows:
            y_keys = [k for k in rows[0] if k.endswith("_mean")] or \
                     [k for k in rows[0] if k.endswith("_db")]
            x_key = "value" if "value" in rows[0] else "ser"
            render_sweep_curve(rows, x_key, y_keys[:4], out / f"sweep_{axis}.png")
    return result


def flip_info_bits(info_bits: np.ndarray, count: int, spec: FrameSpec,
                   rng: np.random.Generator) -> np.ndarray:
    """Flip `count` uniformly chosen information bits.

    In uncoded mode the flips are drawn in distinct modulation symbols
    (small-error regime: one bit error corrupts exactly one symbol).
    """
    bits = np.asarray(info_bits, dtype=np.uint8).copy()
    if count > bits.shape[0]:
        raise ValueError("cannot flip more bits than the information length")
    if count == 0:
        return bits
    if spec.code_rate == 1:
        bps = spec.bits_per_symbol
        n_sym = bits.shape[0] // bps
        symbols = rng.choice(n_sym, size=count, replace=False)
        pos = symbols * bps + rng.integers(0, bps, size=count)
    else:
        pos = rng.choice(bits.shape[0], size=count, replace=False)
    bits[pos] ^= 1
    return bits


def run_bit_error_study(config: ScenarioConfig, bit_error_counts, repetitions: int | None = None,
                        out_dir: str | Path | None = None) -> dict:
    """Reconstructed-frame symbol error rate versus injected info-bit errors."""
    spec = config.frame
    counts = [int(c) for c in bit_error_counts]
    if any(c < 0 for c in counts):
        raise ValueError("bit error counts must be >= 0")
    reps = repetitions if repetitions is not None else config.experiment.repetitions
    master = config.experiment.seed
    layout = frame_layout(spec)
    rows = []
    sers = np.zeros((len(counts), reps))
    for rep in range(reps):
        data_rng = np.random.default_rng(derive_seed(master, 3, rep))
        frame = build_frame(spec, placement_mode=config.placement, data_rng=data_rng)
        for i, k in enumerate(counts):
            flip_rng = np.random.default_rng(derive_seed(master, 4, rep, i))
            bits = flip_info_bits(frame.info_bits, k, spec, flip_rng)
            rec = reconstruct_frame(bits, spec, frame.placement)
            sers[i, rep] = symbol_error_rate(rec, frame.payload_grid, spec)
    for i, k in enumerate(counts):
        rows.append({"bit_errors": k, "mean_ser": float(sers[i].mean()),
                     "std_ser": float(sers[i].std()),
                     "info_bits": layout.info_len})
    result = {"rows": rows, "repetitions": reps, "code_rate": str(spec.code_rate),
              "payload_cells": spec.n_payload_cells,
              "provenance": {"config_hash": config_hash(config), "seed": master,
                             "version": __version__}}
    if out_dir is not None:
        out = Path(out_dir)
        if "csv" in config.output.formats:
            write_table_csv(rows, out / "bit_error_study.csv")
        if "json" in config.output.formats:
            write_run_report(result, out / "bit_error_study.json")
        if "png" in config.output.formats:
            render_sweep_curve(rows, "bit_errors", ["mean_ser"],
                               out / "bit_error_study.png", logx=False)
    return result


def sync_trial(config: ScenarioConfig, seed: int) -> dict:
    """One synchronization-accuracy trial (tx -> channel -> sync only)."""
    spec = config.frame
    data_rng = np.random.default_rng(derive_seed(seed, 1))
    frame = build_frame(spec, placement_mode=config.placement, data_rng=data_rng)
    sig = ofdm_modulate(frame.grid, spec, oversampling=spec.oversampling)
    guard = config.experiment.guard_symbols * spec.symbol_len * spec.oversampling
    tx = TimeSignal(np.concatenate([np.zeros(guard), sig.samples, np.zeros(guard)]),
                    sig.sample_rate)
    scenario = replace(config.channel, noise_seed=derive_seed(seed, 2))
    scenario = resolve_scenario(scenario, tx_power=sig.power(), ref_rate=spec.sample_rate)
    y = apply_channel(tx, scenario)
    y = apply_sfo(y, scenario.offsets.sfo_ppm)
    y = add_awgn(y, scenario)
    _, rep = synchronize(y, spec, frame.preamble, _sync_config(config))
    delta = scenario.offsets.sfo_ppm * 1e-6
    true_start = (guard + scenario.offsets.sto * y.sample_rate) / (1.0 + delta)
    true_fo = scenario.offsets.cfo + scenario.paths[0].doppler
    return {
        "timing_err": rep.fine_start - true_start,
        "sample_exact": bool(abs(rep.fine_start - true_start) <= 0.5),
        "fo_err_hz": rep.total_fo_hz - true_fo,
        "sfo_err_ppm": rep.total_sfo_ppm - scenario.offsets.sfo_ppm,
    }

"""Result export: run-report JSON, delimited tables, binary images, figures.

Radar images are written as little-endian float32 power grids, row-major
with range as the outer axis, plus a JSON sidecar describing the axes.
Figures are rendered with matplotlib into PNG files next to the data.
All writers are deterministic: identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .radar import Peak, RadarImage  # noqa: E402

_PNG_METADATA = {"Software": "ofdm-isac"}


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps succeeds."""
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def write_radar_image(img: RadarImage, basepath: str | Path,
                      formats=("bin", "png")) -> dict:
    """Write <base>.f32 + <base>.json (+ <base>.png); returns the file map."""
    base = Path(basepath)
    base.parent.mkdir(parents=True, exist_ok=True)
    files = {}
    if "bin" in formats:
        raw = img.power_db.astype("<f4")
        raw.tofile(base.with_suffix(".f32"))
        sidecar = {
            "rows": int(img.shape[0]), "cols": int(img.shape[1]),
            "dtype": "float32-le", "layout": "row-major (range outer)",
            "range_axis_m": {"start": img.range_start_m, "step": img.range_step_m},
            "doppler_axis_hz": {"start": img.doppler_start_hz, "step": img.doppler_step_hz},
            "source": img.source, "pads": list(img.pads),
        }
        base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        files["bin"] = str(base.with_suffix(".f32"))
        files["sidecar"] = str(base.with_suffix(".json"))
    if "png" in formats:
        files["png"] = str(render_radar_image(img, base.with_suffix(".png")))
    return files


def read_radar_image(basepath: str | Path) -> RadarImage:
    """Load an image written by write_radar_image."""
    base = Path(basepath)
    meta = json.loads(base.with_suffix(".json").read_text())
    data = np.fromfile(base.with_suffix(".f32"), dtype="<f4")
    power = data.reshape(meta["rows"], meta["cols"]).astype(np.float64)
    return RadarImage(power_db=power,
                      range_start_m=meta["range_axis_m"]["start"],
                      range_step_m=meta["range_axis_m"]["step"],
                      doppler_start_hz=meta["doppler_axis_hz"]["start"],
                      doppler_step_hz=meta["doppler_axis_hz"]["step"],
                      pads=tuple(meta["pads"]), source=meta["source"])


def render_radar_image(img: RadarImage, path: str | Path, floor_db: float = -90.0,
                       max_range_m: float | None = None) -> Path:
    """Range-Doppler heatmap, clipped below floor_db for contrast."""
    path = Path(path)
    r_axis = img.range_axis()
    d_axis = img.doppler_axis()
    n_r = img.shape[0]
    if max_range_m is not None:
        n_r = int(np.searchsorted(r_axis, max_range_m, side="right"))
        n_r = max(8, min(n_r, img.shape[0]))
    data = np.clip(img.power_db[:n_r], floor_db, None)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    mesh = ax.pcolormesh(d_axis / 1e3, r_axis[:n_r], data, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="power (dB)")
    ax.set_xlabel("Doppler shift (kHz)")
    ax.set_ylabel("bistatic range (m)")
    ax.set_title(f"{img.source} radar image")
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def write_peaks_csv(peaks: list[Peak], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["range_m", "doppler_hz", "power_db"])
        for p in peaks:
            w.writerow([f"{p.range_m:.6f}", f"{p.doppler_hz:.3f}", f"{p.power_db:.3f}"])
    return path


def write_evm_csv(per_symbol: np.ndarray, per_subcarrier: np.ndarray,
                  path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "index", "evm_rms"])
        for i, v in enumerate(per_symbol):
            w.writerow(["symbol", i, f"{v:.8f}"])
        for i, v in enumerate(per_subcarrier):
            w.writerow(["subcarrier", i, f"{v:.8f}"])
    return path


def render_evm_profiles(per_symbol: np.ndarray, per_subcarrier: np.ndarray,
                        path: str | Path) -> Path:
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.4))
    axes[0].plot(100 * per_symbol)
    axes[0].set_xlabel("OFDM symbol index")
    axes[0].set_ylabel("EVM (%)")
    axes[1].plot(100 * per_subcarrier)
    axes[1].set_xlabel("subcarrier index")
    axes[1].set_ylabel("EVM (%)")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def write_table_csv(rows: list[dict], path: str | Path) -> Path:
    """Generic list-of-dicts to CSV (uniform keys, first row defines order)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v)
                        for k, v in row.items()})
    return path


def render_sweep_curve(rows: list[dict], x_key: str, y_keys: list[str],
                       path: str | Path, logx: bool = False) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = [r[x_key] for r in rows]
    for y in y_keys:
        ax.plot(x, [r[y] for r in rows], marker="o", label=y)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(x_key)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def write_run_report(report: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(report), indent=2, sort_keys=True, allow_nan=True))
    return path

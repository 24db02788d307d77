"""Radar image formation and the decoding-failure experiments.

The range-Doppler periodogram divides the synchronized receive frame by
the (reconstructed) transmit frame, applies Blackman windows along both
axes, and takes a zero-padded IDFT along the subcarriers (in physical
frequency order) and DFT along the symbols. Images are normalized so the
line-of-sight peak of an ideal single-path scenario reads 0 dB. The
pilot-only image uses the pilot lattice alone and therefore survives
arbitrary payload reconstruction errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelScenario, add_awgn, apply_channel, resolve_scenario
from .dsp import physical_order
from .frame import C0, FrameSpec, FreqGrid, TimeSignal, blackman_window
from .mapping import constellation
from .rx import CommResult
from .tx import (
    PlacementMap,
    build_frame,
    ofdm_modulate,
    payload_symbols_from_info,
    pilot_values,
    place_payload,
)


@dataclass
class RadarImage:
    """Power grid over (bistatic range bin x Doppler bin), axes relative to
    the line-of-sight path."""

    power_db: np.ndarray          # (n_range, n_doppler)
    range_start_m: float
    range_step_m: float
    doppler_start_hz: float
    doppler_step_hz: float
    pads: tuple[int, int]
    source: str                   # "full-frame" or "pilot"

    @property
    def shape(self) -> tuple[int, int]:
        return self.power_db.shape

    def range_axis(self) -> np.ndarray:
        return self.range_start_m + np.arange(self.shape[0]) * self.range_step_m

    def doppler_axis(self) -> np.ndarray:
        return self.doppler_start_hz + np.arange(self.shape[1]) * self.doppler_step_hz


def _image_from_ratio(ratio: np.ndarray, valid: np.ndarray, subcarriers: np.ndarray,
                      n_total: int, pads: tuple[int, int]) -> np.ndarray:
    """Windowed zero-padded 2-D transform of the division grid; returns the
    linear power image normalized to the ideal single-path peak."""
    n_r, n_d = ratio.shape
    order = physical_order(subcarriers, n_total)
    ratio = ratio[order]
    valid = valid[order]
    # window along the physical-frequency axis, not DFT order, so the taper
    # is smooth over the band
    w2 = blackman_window(n_r)[:, None] * blackman_window(n_d)[None, :]
    w2 = np.where(valid, w2, 0.0)
    norm = float(np.sum(w2))
    if norm <= 0:
        raise ValueError("no valid cells to transform")
    z = np.where(valid, ratio, 0.0) * w2
    rng_len = n_r * pads[0]
    dop_len = n_d * pads[1]
    a = np.fft.ifft(z, n=rng_len, axis=0) * rng_len
    b = np.fft.fft(a, n=dop_len, axis=1)
    b = np.fft.fftshift(b, axes=1)
    return np.abs(b) ** 2 / norm ** 2


def periodogram(rx: FreqGrid, ref: FreqGrid, spec: FrameSpec,
                pads: tuple[int, int] = (4, 4), source: str = "full-frame") -> RadarImage:
    """Full-frame range-Doppler image from elementwise division by the
    reconstructed transmit frame. Zero-valued reference cells are erased
    (windowed out with energy renormalization) instead of divided."""
    rx_p = rx.payload_part(spec).symbols
    ref_p = ref.payload_part(spec).symbols
    if rx_p.shape != ref_p.shape:
        raise ValueError("rx and ref grids must be aligned")
    valid = np.abs(ref_p) > 0
    ratio = np.zeros_like(rx_p)
    np.divide(rx_p, ref_p, out=ratio, where=valid)
    img = _image_from_ratio(ratio, valid, np.arange(spec.n_subcarriers),
                            spec.n_subcarriers, pads)
    t_s = spec.t_sample
    return RadarImage(
        power_db=10 * np.log10(img + 1e-300),
        range_start_m=0.0, range_step_m=C0 * t_s / pads[0],
        doppler_start_hz=-spec.bandwidth / (2 * spec.symbol_len),
        doppler_step_hz=spec.bandwidth / (spec.symbol_len * spec.n_payload * pads[1]),
        pads=pads, source=source)


def pilot_image(rx: FreqGrid, spec: FrameSpec, pads: tuple[int, int] = (4, 4)) -> RadarImage:
    """Range-Doppler image from the pilot lattice only."""
    rx_p = rx.payload_part(spec).symbols
    sub = rx_p[np.ix_(spec.pilot_subcarriers, spec.pilot_symbols)]
    ratio = sub / pilot_values(spec)
    valid = np.ones(ratio.shape, dtype=bool)
    img = _image_from_ratio(ratio, valid, spec.pilot_subcarriers, spec.n_subcarriers, pads)
    n_p = spec.n_pilot_subcarriers
    tau_step = 1.0 / (n_p * pads[0] * spec.pilot_spacing_freq * spec.subcarrier_spacing)
    pilot_period = spec.pilot_spacing_time * spec.t_ofdm
    return RadarImage(
        power_db=10 * np.log10(img + 1e-300),
        range_start_m=0.0, range_step_m=C0 * tau_step,
        doppler_start_hz=-1.0 / (2 * pilot_period),
        doppler_step_hz=1.0 / (pilot_period * spec.n_pilot_symbols * pads[1]),
        pads=pads, source="pilot")


@dataclass(frozen=True)
class Peak:
    range_m: float
    doppler_hz: float
    power_db: float
    range_bin: int
    doppler_bin: int


def detect_peaks(img: RadarImage, guard: tuple[int, int] = (12, 12),
                 threshold_db: float = 12.0, max_peaks: int = 32) -> list[Peak]:
    """Local maxima above (median + threshold) with non-maximum suppression
    inside the guard window (padded bins), strongest first."""
    p = img.power_db
    if p.size == 0:
        return []
    med = float(np.median(p))
    local = np.ones(p.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for dd in (-1, 0, 1):
            if dr == 0 and dd == 0:
                continue
            local &= p >= np.roll(np.roll(p, dr, axis=0), dd, axis=1)
    cand = np.argwhere(local & (p > med + threshold_db))
    order = np.argsort(p[cand[:, 0], cand[:, 1]])[::-1]
    taken: list[Peak] = []
    for idx in order:
        r, d = cand[idx]
        if any(abs(r - t.range_bin) <= guard[0] and abs(d - t.doppler_bin) <= guard[1]
               for t in taken):
            continue
        taken.append(Peak(range_m=img.range_start_m + r * img.range_step_m,
                          doppler_hz=img.doppler_start_hz + d * img.doppler_step_hz,
                          power_db=float(p[r, d]), range_bin=int(r), doppler_bin=int(d)))
        if len(taken) >= max_peaks:
            break
    return taken


def noise_floor(img: RadarImage, exclusions: list[Peak] | None = None,
                guard: tuple[int, int] = (24, 24)) -> float:
    """Median power outside guard zones around the listed peaks, dB.

    Guard extents are clamped to an eighth of each image dimension so small
    (pilot-lattice) images keep enough cells for the median.
    """
    g_r = min(guard[0], max(1, img.shape[0] // 8))
    g_d = min(guard[1], max(1, img.shape[1] // 8))
    mask = np.zeros(img.power_db.shape, dtype=bool)
    for pk in exclusions or []:
        r0 = max(0, pk.range_bin - g_r)
        r1 = min(img.shape[0], pk.range_bin + g_r + 1)
        d0 = max(0, pk.doppler_bin - g_d)
        d1 = min(img.shape[1], pk.doppler_bin + g_d + 1)
        mask[r0:r1, d0:d1] = True
    if mask.mean() > 0.5:
        raise ValueError("exclusion zones cover more than half the image")
    return float(np.median(img.power_db[~mask]))


def stripe_metric(img: RadarImage, peaks: list[Peak], exclude_bins: int = None) -> float:
    """Mean linear power along the strongest peak's range row, excluding
    cells within +-3 pre-padding Doppler bins of every peak, in dB.

    Doppler-direction stripes through the peaks raise this number; a clean
    image leaves it at the sidelobe/noise level.
    """
    if not peaks:
        raise ValueError("stripe metric needs at least one peak")
    if exclude_bins is None:
        exclude_bins = 3 * img.pads[1]
    row = 10 ** (img.power_db[peaks[0].range_bin, :] / 10)
    keep = np.ones(row.shape[0], dtype=bool)
    for pk in peaks:
        lo = max(0, pk.doppler_bin - exclude_bins)
        hi = min(row.shape[0], pk.doppler_bin + exclude_bins + 1)
        keep[lo:hi] = False
    return 10 * math.log10(float(np.mean(row[keep])) + 1e-300)


# -- reconstruction and fault injection ---------------------------------------


def reconstruct_frame(decoded, spec: FrameSpec, placement: PlacementMap) -> FreqGrid:
    """Re-encode and re-map the decoded bits, place them with the original
    placement map, and re-insert the known pilots: the receiver's estimate
    of the transmitted payload frame (bit errors included)."""
    if isinstance(decoded, CommResult):
        info_bits = decoded.info_bits
    else:
        info_bits = np.asarray(decoded, dtype=np.uint8).ravel()
    sym, _ = payload_symbols_from_info(info_bits, spec)
    grid, _ = place_payload(sym, spec, mode=placement.mode, seed=placement.seed)
    grid.symbols[np.ix_(spec.pilot_subcarriers, spec.pilot_symbols)] = pilot_values(spec)
    return grid


def symbol_error_rate(reconstructed: FreqGrid, reference: FreqGrid, spec: FrameSpec) -> float:
    """Fraction of payload cells whose modulation symbol differs."""
    n_idx, m_idx = spec.payload_cell_order()
    a = reconstructed.payload_part(spec).symbols[n_idx, m_idx]
    b = reference.payload_part(spec).symbols[n_idx, m_idx]
    return float(np.mean(np.abs(a - b) > 1e-6))


ERROR_MODES = ("random", "block-edge", "block-center", "irregular-blocks", "regular-blocks")


@dataclass
class ErrorPattern:
    """Which payload cells (column-placement order) carry wrong symbols."""

    mode: str
    target_ser: float
    seed: int = 0
    n_blocks: int = 4                 # irregular-blocks only
    period_cells: int | None = None   # regular-blocks only
    realized_ser: float = field(default=None)

    def __post_init__(self):
        if self.mode not in ERROR_MODES:
            raise ValueError(f"unknown error mode {self.mode!r}")
        if not (0.0 <= self.target_ser <= 1.0):
            raise ValueError("target SER must be in [0, 1]")

    def cells(self, n_cells: int) -> np.ndarray:
        k = int(round(self.target_ser * n_cells))
        if self.target_ser > 0 and k == 0:
            raise ValueError("target SER unattainably small for this frame")
        rng = np.random.default_rng([self.seed, 0xE7])
        if self.mode == "random":
            idx = rng.choice(n_cells, size=k, replace=False)
        elif self.mode == "block-edge":
            idx = np.arange(k)
        elif self.mode == "block-center":
            start = (n_cells - k) // 2
            idx = np.arange(start, start + k)
        elif self.mode == "irregular-blocks":
            per = max(1, k // self.n_blocks)
            starts = np.sort(rng.choice(n_cells - per, size=self.n_blocks, replace=False))
            idx = np.unique(np.concatenate([np.arange(s, s + per) for s in starts]))[:k]
        else:  # regular-blocks
            if self.period_cells is None:
                raise ValueError("regular-blocks needs period_cells")
            base = np.arange(0, n_cells, self.period_cells)
            per = int(round(self.target_ser * n_cells / base.shape[0]))
            if per < 1 or per > self.period_cells:
                raise ValueError("target SER unattainable for this period")
            idx = (base[:, None] + np.arange(per)[None, :]).ravel()
            idx = idx[idx < n_cells]
        realized = idx.shape[0] / n_cells
        if self.target_ser > 0 and abs(realized - self.target_ser) > 0.05 * self.target_ser:
            raise ValueError(f"realized SER {realized:.4g} deviates more than 5% from target")
        self.realized_ser = realized
        return idx


def inject_symbol_errors(frame: FreqGrid, spec: FrameSpec, pattern: ErrorPattern) -> FreqGrid:
    """Replace the selected payload cells with random different
    constellation symbols, emulating reconstruction after decoding errors."""
    out = frame.payload_part(spec).copy()
    n_idx, m_idx = spec.payload_cell_order()
    cells = pattern.cells(n_idx.shape[0])
    if cells.size == 0:
        return out
    points, _ = constellation(spec.modulation_order)
    rng = np.random.default_rng([pattern.seed, 0xE8])
    old = out.symbols[n_idx[cells], m_idx[cells]]
    labels = np.argmin(np.abs(old[:, None] - points[None, :]), axis=1)
    shift = rng.integers(1, spec.modulation_order, size=cells.shape[0])
    out.symbols[n_idx[cells], m_idx[cells]] = points[(labels + shift) % spec.modulation_order]
    return out


# -- SER sweep ----------------------------------------------------------------


@dataclass
class FloorSweepRow:
    ser: float
    full_floor_db: float
    full_floor_std: float
    pilot_floor_db: float
    pilot_floor_std: float


@dataclass
class FloorSweepResult:
    rows: list[FloorSweepRow]
    crossover_ser: float | None

    def as_table(self) -> list[dict]:
        return [{"ser": r.ser, "full_floor_db": r.full_floor_db,
                 "full_floor_std": r.full_floor_std, "pilot_floor_db": r.pilot_floor_db,
                 "pilot_floor_std": r.pilot_floor_std} for r in self.rows]


def ser_vs_floor_sweep(spec: FrameSpec, scenario: ChannelScenario, ser_grid,
                       repetitions: int = 3, pads: tuple[int, int] = (4, 4),
                       seed: int = 0, detector_threshold_db: float = 12.0) -> FloorSweepResult:
    """Noise floors of the full-frame and pilot images versus the symbol
    error rate of the reconstructed frame (random placement).

    The study isolates reconstruction errors: offsets are not simulated
    (the scenario's offsets must be zero) and the receiver uses the known
    frame start, so every floor difference is attributable to the injected
    errors and the processing gain.
    """
    off = scenario.offsets
    if any(abs(v) > 0 for v in (off.sto, off.cfo, off.cpo, off.sfo_ppm)):
        raise ValueError("floor sweep runs without synchronization offsets")
    ser_grid = list(ser_grid)
    guard = spec.symbol_len
    floors_full = np.zeros((len(ser_grid), repetitions))
    floors_pilot = np.zeros(repetitions)
    for rep in range(repetitions):
        ss = np.random.SeedSequence([seed, rep])
        data_rng = np.random.default_rng(ss.spawn(1)[0])
        frame = build_frame(spec, placement_mode="random", data_rng=data_rng)
        sig = ofdm_modulate(frame.grid, spec, oversampling=1)
        tx = TimeSignal(np.concatenate([np.zeros(guard), sig.samples, np.zeros(guard)]),
                        sig.sample_rate)
        scen = resolve_scenario(
            ChannelScenario(paths=scenario.paths, offsets=off,
                            snr_los_db=scenario.snr_los_db,
                            snr_secondary_db=scenario.snr_secondary_db,
                            noise_seed=int(ss.generate_state(1)[0] & 0x7FFFFFFF)),
            tx_power=sig.power(), ref_rate=spec.sample_rate)
        y = apply_channel(tx, scen)
        y = add_awgn(y, scen)
        from .sync import demodulate_frame
        rx_grid = demodulate_frame(y, guard, spec)

        pil = pilot_image(rx_grid, spec, pads)
        pk = detect_peaks(pil, threshold_db=detector_threshold_db)
        floors_pilot[rep] = noise_floor(pil, pk)

        for i, ser in enumerate(ser_grid):
            if ser == 0:
                ref = frame.payload_grid
            else:
                pattern = ErrorPattern(mode="random", target_ser=ser,
                                       seed=int(ss.generate_state(2)[1] & 0x7FFFFFFF) + i)
                ref = inject_symbol_errors(frame.payload_grid, spec, pattern)
            img = periodogram(rx_grid, ref, spec, pads)
            pk = detect_peaks(img, threshold_db=detector_threshold_db)
            floors_full[i, rep] = noise_floor(img, pk)

    rows = [FloorSweepRow(ser=s,
                          full_floor_db=float(floors_full[i].mean()),
                          full_floor_std=float(floors_full[i].std()),
                          pilot_floor_db=float(floors_pilot.mean()),
                          pilot_floor_std=float(floors_pilot.std()))
            for i, s in enumerate(ser_grid)]
    crossover = None
    diff = np.array([r.full_floor_db - r.pilot_floor_db for r in rows])
    for i in range(1, len(rows)):
        if diff[i - 1] < 0 <= diff[i]:
            s0, s1 = rows[i - 1].ser, rows[i].ser
            crossover = s0 + (0 - diff[i - 1]) * (s1 - s0) / (diff[i] - diff[i - 1])
            break
    return FloorSweepResult(rows=rows, crossover_ser=crossover)

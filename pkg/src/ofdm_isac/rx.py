"""Communication processing of the synchronized frame.

Pilot-based least-squares channel estimation, cubic-spline interpolation
to the full grid (subcarrier direction first, then symbol direction),
zero-forcing equalization with erasure flagging, soft demapping, and
per-codeword min-sum decoding. Also provides the error-vector-magnitude
diagnostics used by the offset studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dsp import physical_order, signed_subcarrier_index
from .frame import FrameSpec, FreqGrid
from .ldpc import LdpcCode
from .mapping import demap_llr, hard_demap
from .tx import PlacementMap, frame_layout, pilot_values


@dataclass
class ChannelEstimate:
    grid: np.ndarray              # (N, M_pl) complex gains
    interpolation: str = "cubic-spline"

    def __post_init__(self):
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("channel estimate must be finite everywhere")


def _spline_axis(values: np.ndarray, positions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Interpolate complex values (columns = independent series) from
    `positions` onto `targets` with a cubic spline, extrapolating at edges.
    Falls back to linear/constant when too few points for a cubic."""
    n_pts = positions.shape[0]
    if n_pts == 1:
        return np.repeat(values, targets.shape[0], axis=0)
    if n_pts < 4:
        out = np.empty((targets.shape[0], values.shape[1]), dtype=np.complex128)
        for j in range(values.shape[1]):
            coeff_r = np.polyfit(positions, values[:, j].real, 1)
            coeff_i = np.polyfit(positions, values[:, j].imag, 1)
            out[:, j] = np.polyval(coeff_r, targets) + 1j * np.polyval(coeff_i, targets)
        return out
    cs_r = CubicSpline(positions, values.real, axis=0, extrapolate=True)
    cs_i = CubicSpline(positions, values.imag, axis=0, extrapolate=True)
    return cs_r(targets) + 1j * cs_i(targets)


def estimate_channel(grid: FreqGrid, spec: FrameSpec) -> ChannelEstimate:
    """Pilot ratios splined first along subcarriers, then along symbols.

    The subcarrier axis is interpolated in physical frequency order: a
    sub-sample timing offset is a phase ramp over the physical frequency,
    which wraps mid-band in DFT order and would send the interpolant
    through zero there.
    """
    n = spec.n_subcarriers
    payload = grid.payload_part(spec)
    pil_n = spec.pilot_subcarriers
    pil_m = spec.pilot_symbols
    ratio = payload.symbols[np.ix_(pil_n, pil_m)] / pilot_values(spec)

    signed = signed_subcarrier_index(n)
    pil_order = physical_order(pil_n, n)
    pil_pos = signed[pil_n][pil_order].astype(float)
    target_order = physical_order(np.arange(n), n)
    target_pos = signed[target_order].astype(float)
    est_phys = _spline_axis(ratio[pil_order], pil_pos, target_pos)
    est_n = np.empty_like(est_phys)
    est_n[target_order] = est_phys

    all_m = np.arange(spec.n_payload)
    est = _spline_axis(est_n.T, pil_m.astype(float), all_m.astype(float)).T
    return ChannelEstimate(grid=est)


def pilot_noise_variance(grid: FreqGrid, spec: FrameSpec) -> float:
    """Noise variance per grid cell, estimated from pilot-ratio residuals
    against a locally smoothed estimate (adjacent-pilot differences along
    the subcarrier comb in physical order; the channel varies slowly
    across one spacing)."""
    payload = grid.payload_part(spec)
    ratio = payload.symbols[np.ix_(spec.pilot_subcarriers, spec.pilot_symbols)] / pilot_values(spec)
    ratio = ratio[physical_order(spec.pilot_subcarriers, spec.n_subcarriers)]
    d = np.diff(ratio, axis=0)
    return float(np.mean(np.abs(d) ** 2) / 2.0)


def equalize(grid: FreqGrid, est: ChannelEstimate,
             erasure_eps: float = 1e-6) -> tuple[FreqGrid, np.ndarray]:
    """Cellwise division by the channel estimate.

    Cells whose estimate magnitude is below erasure_eps times the mean are
    flagged erased and zeroed instead of divided, so downstream LLRs are 0.
    """
    payload = grid.symbols
    if est.grid.shape != payload.shape:
        raise ValueError("estimate shape does not match grid")
    scale = float(np.mean(np.abs(est.grid)))
    erased = np.abs(est.grid) < erasure_eps * scale
    out = np.zeros_like(payload)
    np.divide(payload, est.grid, out=out, where=~erased)
    return FreqGrid(out, grid.roles), erased


@dataclass
class DecodeReport:
    info_bits: np.ndarray
    parity_ok: bool
    iterations: int
    bit_errors_vs_truth: int | None = None


@dataclass
class CommResult:
    info_bits: np.ndarray
    codewords: list[DecodeReport]
    parity_ok: bool
    ber: float | None
    bit_errors: int | None
    noise_var: float
    evm_per_symbol: np.ndarray = field(default=None)
    evm_per_subcarrier: np.ndarray = field(default=None)


def extract_payload_sequence(grid: FreqGrid, spec: FrameSpec,
                             placement: PlacementMap) -> np.ndarray:
    """Payload cells in original sequence order (inverse placement)."""
    n_idx, m_idx = spec.payload_cell_order()
    payload = grid.payload_part(spec)
    return placement.extract(payload.symbols[n_idx, m_idx])


def decode_payload(grid: FreqGrid, spec: FrameSpec, placement: PlacementMap,
                   code: LdpcCode | None = None, truth_bits: np.ndarray | None = None,
                   max_iter: int = 25, min_sum_alpha: float = 0.8) -> CommResult:
    """Equalize the synchronized grid and decode every codeword in it."""
    layout = frame_layout(spec, code)
    est = estimate_channel(grid, spec)
    noise_var = max(pilot_noise_variance(grid, spec), 1e-12)
    eq, erased = equalize(grid, est)

    n_idx, m_idx = spec.payload_cell_order()
    seq = placement.extract(eq.symbols[n_idx, m_idx])
    cell_var = noise_var / np.maximum(np.abs(est.grid[n_idx, m_idx]) ** 2, 1e-30)
    cell_var = placement.extract(np.where(erased[n_idx, m_idx], np.inf, cell_var))

    llr = demap_llr(seq, spec.modulation_order, cell_var)[:layout.coded_len]

    reports: list[DecodeReport] = []
    if layout.uncoded:
        bits = hard_demap(seq, spec.modulation_order)[:layout.coded_len]
        info = bits
        reports.append(DecodeReport(info_bits=bits, parity_ok=True, iterations=0))
    else:
        code = code or LdpcCode.for_rate(spec.code_rate)
        chunks = []
        for i in range(layout.n_codewords):
            hard, iters, ok = code.decode(llr[i * code.n:(i + 1) * code.n],
                                          max_iter=max_iter, alpha=min_sum_alpha)
            cw_truth = None
            if truth_bits is not None:
                cw_truth = int(np.count_nonzero(
                    hard[:code.k] ^ truth_bits[i * code.k:(i + 1) * code.k]))
            reports.append(DecodeReport(info_bits=hard[:code.k], parity_ok=ok,
                                        iterations=iters, bit_errors_vs_truth=cw_truth))
            chunks.append(hard[:code.k])
        info = np.concatenate(chunks)

    bit_errors = ber = None
    if truth_bits is not None:
        truth_bits = np.asarray(truth_bits, dtype=np.uint8).ravel()
        bit_errors = int(np.count_nonzero(info ^ truth_bits[:info.shape[0]]))
        ber = bit_errors / info.shape[0]
        if layout.uncoded:
            reports[0].bit_errors_vs_truth = bit_errors
    return CommResult(info_bits=info, codewords=reports,
                      parity_ok=all(r.parity_ok for r in reports),
                      ber=ber, bit_errors=bit_errors, noise_var=noise_var)


def evm_profile(equalized: FreqGrid, reference: FreqGrid,
                spec: FrameSpec) -> tuple[np.ndarray, np.ndarray]:
    """RMS error-vector magnitude over payload cells, averaged per OFDM
    symbol and per subcarrier, normalized by the reference RMS power."""
    mask = ~spec.pilot_mask()
    err2 = np.abs(equalized.payload_part(spec).symbols
                  - reference.payload_part(spec).symbols) ** 2
    ref2 = float(np.mean(np.abs(reference.payload_part(spec).symbols[mask]) ** 2))
    err2 = np.where(mask, err2, np.nan)
    with np.errstate(invalid="ignore"):
        per_symbol = np.sqrt(np.nanmean(err2, axis=0) / ref2)
        per_subcarrier = np.sqrt(np.nanmean(err2, axis=1) / ref2)
    return per_symbol, per_subcarrier

"""Over-the-air synchronization chain and OFDM demodulation.

Order of operations (data dependencies are strict): coarse timing and
fractional frequency offset from the half-repeated preamble symbol ->
fine timing by cross-correlation against the known first preamble symbol
(coarse FO removed inside the correlation only) -> sampling-clock offset
from the identical preamble symbol pairs (weighted least squares over the
per-subcarrier phase slopes) -> resampling correction -> residual clock
offset from the pilot delay-time profile (least-squares ridge fit) ->
second resampling -> coarse+residual frequency correction on the full
signal, the residual read from the delay-Doppler profile at delay zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import (
    decimate_fir,
    farrow_cubic,
    oversampled_bin_map,
    physical_order,
    signed_subcarrier_index,
    upsample_fir,
)
from .errors import SyncError
from .frame import FrameSpec, FreqGrid, TimeSignal
from .tx import PreambleBlock, pilot_values


def _oversampling_of(signal: TimeSignal, spec: FrameSpec) -> int:
    os = signal.sample_rate / spec.bandwidth
    if abs(os - round(os)) > 1e-9 or round(os) < 1:
        raise ValueError("signal rate must be an integer multiple of the bandwidth")
    return round(os)


# -- demodulation -------------------------------------------------------------


def demodulate_frame(signal: TimeSignal, start: int, spec: FrameSpec,
                     include_preamble: bool = False) -> FreqGrid:
    """CP removal + DFT of every symbol from the frame start index.

    When the signal is oversampled, each symbol is transformed with a
    larger DFT and the subcarriers read from their physical bins, which is
    exact decimation for in-band content. Preamble columns are dropped
    unless include_preamble is set.
    """
    os = _oversampling_of(signal, spec)
    sym_len = spec.symbol_len * os
    m = spec.n_symbols
    if start < 0 or start + m * sym_len > len(signal):
        raise ValueError("signal too short for a full frame at this start")
    idx = (start + np.arange(m)[None, :] * sym_len + spec.cp_len * os
           + np.arange(spec.n_subcarriers * os)[:, None])
    windows = signal.samples[idx]
    if os == 1:
        grid = np.fft.fft(windows, axis=0)
    else:
        grid = np.fft.fft(windows, axis=0)[oversampled_bin_map(spec.n_subcarriers, os)] / os
    roles = spec.frame_roles()
    if include_preamble:
        return FreqGrid(grid, roles)
    return FreqGrid(grid[:, spec.n_preamble:], roles[:, spec.n_preamble:])


# -- coarse timing / frequency ------------------------------------------------


@dataclass(frozen=True)
class CoarseSync:
    start: int            # estimated frame start (biased early, within one CP)
    fo_hz: float          # fractional frequency offset estimate
    metric_peak: float
    plateau: tuple[int, int] = field(default=(0, 0))


def coarse_sync_sc(signal: TimeSignal, spec: FrameSpec,
                   threshold: float = 0.5) -> CoarseSync:
    """Half-symbol autocorrelation timing metric with plateau centering.

    The first preamble symbol repeats with period N/2 base-rate samples,
    so the metric plateaus over one CP length; the plateau center minus
    one CP gives a start estimate guaranteed at or before the true start.
    The angle of the autocorrelation at the plateau center gives the
    fractional frequency offset, unambiguous within +-Delta_f.
    """
    os = _oversampling_of(signal, spec)
    lag = (spec.n_subcarriers // 2) * os
    r = signal.samples
    if len(r) < 2 * lag + 1:
        raise SyncError("signal shorter than the coarse-sync window")
    c = np.conj(r[:-lag]) * r[lag:]
    e = np.abs(r[lag:]) ** 2
    cs = np.concatenate([[0.0 + 0.0j], np.cumsum(c)])
    es = np.concatenate([[0.0], np.cumsum(e)])
    n_d = len(r) - 2 * lag + 1
    p = cs[lag:lag + n_d] - cs[:n_d]
    en = es[lag:lag + n_d] - es[:n_d]
    # windows carrying little energy (guard regions, signal edges) would
    # otherwise produce spurious near-unity metric values from a handful of
    # leakage samples; a genuine preamble window carries full signal power
    floor = 0.1 * float(np.max(en))
    with np.errstate(divide="ignore", invalid="ignore"):
        metric = np.where(en > floor, np.abs(p) ** 2 / en ** 2, 0.0)
    d_max = int(np.argmax(metric))
    peak = float(metric[d_max])
    if peak < threshold:
        raise SyncError("preamble not found")
    level = 0.9 * peak
    lo = d_max
    while lo > 0 and metric[lo - 1] >= level:
        lo -= 1
    hi = d_max
    while hi < n_d - 1 and metric[hi + 1] >= level:
        hi += 1
    center = (lo + hi) // 2
    fo = float(np.angle(p[center])) / (2 * np.pi * lag) * signal.sample_rate
    return CoarseSync(start=center - spec.cp_len * os, fo_hz=fo,
                      metric_peak=peak, plateau=(lo, hi))


def fine_timing(signal: TimeSignal, spec: FrameSpec, preamble: PreambleBlock,
                coarse: CoarseSync) -> int:
    """Cross-correlation against the first preamble symbol (CP included),
    searched within one CP on both sides of the coarse start; the coarse
    frequency offset is removed inside the correlation only."""
    from .tx import ofdm_modulate

    os = _oversampling_of(signal, spec)
    replica = ofdm_modulate(preamble.columns[:, :1], spec, oversampling=os).samples
    half = spec.cp_len * os
    a = max(0, coarse.start - half)
    b = min(len(signal), coarse.start + half + len(replica))
    if b - a < len(replica):
        raise SyncError("empty fine-timing search window")
    eta = np.arange(a, b)
    seg = signal.samples[a:b] * np.exp(-2j * np.pi * coarse.fo_hz * eta / signal.sample_rate)
    corr = np.correlate(seg, replica, mode="valid")
    return a + int(np.argmax(np.abs(corr)))


# -- preamble-based SFO -------------------------------------------------------


@dataclass(frozen=True)
class PairSfoEstimate:
    sfo_ppm: float
    residual_fo_hz: float     # common phase term, usable as a DDP disambiguation hint


def estimate_sfo_pairs(signal: TimeSignal, spec: FrameSpec, fine_start: int,
                      coarse_fo_hz: float) -> PairSfoEstimate:
    """Sampling-frequency offset from the identical preamble symbol pairs.

    Each pair is one symbol period apart, so a clock offset delta rotates
    subcarrier n by 2 pi delta n (N+N_CP)/N between the two copies. The
    per-subcarrier phase differences, coherently combined over pairs, are
    fitted by weighted least squares (weights = combined power, signed
    subcarrier index axis); the slope gives delta, the intercept the
    frequency offset remaining after coarse correction.
    """
    if spec.n_preamble_pairs < 1:
        raise SyncError("no preamble symbol pairs available")
    os = _oversampling_of(signal, spec)
    sym_len = spec.symbol_len * os
    n = spec.n_subcarriers
    first = fine_start + 2 * sym_len
    need = first + (spec.n_preamble - 2) * sym_len
    if fine_start < 0 or need > len(signal):
        raise SyncError("signal too short for the SFO preamble")
    eta = np.arange(first, need)
    seg = signal.samples[first:need] * np.exp(-2j * np.pi * coarse_fo_hz * eta / signal.sample_rate)
    idx = (np.arange(spec.n_preamble - 2)[None, :] * sym_len + spec.cp_len * os
           + np.arange(n * os)[:, None])
    sym = np.fft.fft(seg[idx], axis=0)
    if os > 1:
        sym = sym[oversampled_bin_map(n, os)] / os
    acc = np.zeros(n, dtype=np.complex128)
    for p in range(spec.n_preamble_pairs):
        acc += sym[:, 2 * p + 1] * np.conj(sym[:, 2 * p])
    w = np.abs(acc)
    y = np.angle(acc)
    ns = signed_subcarrier_index(n).astype(float)
    sw = np.sum(w)
    if sw <= 0:
        raise SyncError("degenerate SFO preamble content")
    mx = np.sum(w * ns) / sw
    my = np.sum(w * y) / sw
    sxx = np.sum(w * (ns - mx) ** 2)
    slope = np.sum(w * (ns - mx) * (y - my)) / sxx
    intercept = my - slope * mx
    sfo = slope * n / (2 * np.pi * spec.symbol_len)
    res_fo = intercept * spec.bandwidth / (2 * np.pi * spec.symbol_len)
    return PairSfoEstimate(sfo_ppm=sfo * 1e6, residual_fo_hz=res_fo)


# -- resampling correction ----------------------------------------------------


def resample_correct(signal: TimeSignal, sfo_ppm: float, anchor: float = 0.0,
                     out_len: int | None = None, up_factor: int = 4,
                     taps_per_phase: int = 32) -> TimeSignal:
    """Three-stage clock correction: polyphase FIR interpolation, cubic
    polynomial fractional resampling, FIR decimation back to the input
    rate. Output sample eta is the input evaluated at
    anchor + eta / (1 + delta), so a feature at the anchor stays at index 0.
    """
    if abs(sfo_ppm) >= 1000.0:
        raise ValueError("|sfo_ppm| must be < 1000")
    delta = sfo_ppm * 1e-6
    if out_len is None:
        out_len = len(signal) - int(np.ceil(anchor))
    if out_len <= 0:
        raise ValueError("resample output would be empty")
    if delta == 0.0 and anchor == int(anchor):
        a = int(anchor)
        return TimeSignal(signal.samples[a:a + out_len].copy(), signal.sample_rate)
    up = upsample_fir(signal.samples, up_factor, taps_per_phase)
    t_up = up_factor * (anchor + np.arange(out_len * up_factor) / up_factor / (1.0 + delta))
    mid = farrow_cubic(up, t_up)
    out = decimate_fir(mid, up_factor, taps_per_phase)[:out_len]
    return TimeSignal(out, signal.sample_rate)


# -- pilot-based residual estimation ------------------------------------------


@dataclass
class DelayTimeProfile:
    """Per-pilot-symbol delay response from pilot division + zero-padded IDFT."""

    values: np.ndarray            # (n_taps, n_columns), complex
    ratio: np.ndarray             # raw pilot ratios (n_pilot_subcarriers, n_columns)
    pad_factor: int
    tap_spacing_s: float          # unambiguous axis is circular with n_taps entries
    symbol_indices: np.ndarray    # absolute payload symbol index per column

    @property
    def n_taps(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def delay_axis(self) -> np.ndarray:
        return np.arange(self.n_taps) * self.tap_spacing_s


def delay_time_profile(grid: FreqGrid, spec: FrameSpec, pad_factor: int = 16) -> DelayTimeProfile:
    """Divide received pilots by the transmitted ones and IDFT along the
    (zero-padded) pilot subcarrier comb, one column per pilot symbol.

    The comb is processed in physical frequency order; positive delays
    appear at positive taps.
    """
    payload = grid.payload_part(spec)
    cols = spec.pilot_symbols
    if cols.size == 0:
        raise SyncError("grid contains no pilot symbols")
    ratio = payload.symbols[np.ix_(spec.pilot_subcarriers, cols)] / pilot_values(spec)
    ratio = ratio[physical_order(spec.pilot_subcarriers, spec.n_subcarriers)]
    n_taps = spec.n_pilot_subcarriers * pad_factor
    prof = np.fft.ifft(ratio, n=n_taps, axis=0)
    tap = 1.0 / (n_taps * spec.pilot_spacing_freq * spec.subcarrier_spacing)
    return DelayTimeProfile(values=prof, ratio=ratio, pad_factor=pad_factor,
                            tap_spacing_s=tap, symbol_indices=cols.copy())


def _comb_delay(ratio_col: np.ndarray, n_taps: int, coarse_tap: int) -> float:
    """Sub-tap ridge position of one pilot column.

    The coarse (zero-padded argmax) tap derotates the pilot ratio; the
    remaining delay is the power-weighted least-squares slope of the
    residual phase across the comb, which is wrap-free once within half a
    tap and far more precise than magnitude interpolation.
    """
    n_p = ratio_col.shape[0]
    k = np.arange(n_p, dtype=float)
    der = ratio_col * np.exp(2j * np.pi * k * coarse_tap / n_taps)
    # remove the column's common phase before taking angles, otherwise
    # columns whose mean phase sits near +-pi wrap and wreck the fit
    mean_dir = np.sum(np.abs(der) * der)
    if mean_dir != 0:
        der = der * np.conj(mean_dir / np.abs(mean_dir))
    w = np.abs(der) ** 2
    y = np.angle(der)
    sw = np.sum(w)
    if sw <= 0:
        return float(coarse_tap)
    mx = np.sum(w * k) / sw
    my = np.sum(w * y) / sw
    sxx = np.sum(w * (k - mx) ** 2)
    slope = np.sum(w * (k - mx) * (y - my)) / sxx
    return coarse_tap - slope * n_taps / (2 * np.pi)


def _ridge_positions(dtp: DelayTimeProfile, ridge_threshold_db: float) -> np.ndarray:
    """Signed sub-tap ridge position per column; fails if the ridge is weak."""
    mags = np.abs(dtp.values)
    pos = np.empty(dtp.n_columns)
    for c in range(dtp.n_columns):
        m = mags[:, c]
        k = int(np.argmax(m))
        med = float(np.median(m))
        if med > 0 and 20 * np.log10(m[k] / med) < ridge_threshold_db:
            raise SyncError("delay-time profile ridge below detection threshold")
        p = _comb_delay(dtp.ratio[:, c], dtp.n_taps, k)
        if p > dtp.n_taps / 2:
            p -= dtp.n_taps
        pos[c] = p
    return pos


@dataclass(frozen=True)
class ResidualSfoEstimate:
    sfo_ppm: float
    delays_taps: np.ndarray       # ridge position per pilot column (signed taps)
    slope_taps_per_symbol: float


def estimate_residual_sfo(dtp: DelayTimeProfile, spec: FrameSpec,
                          ridge_threshold_db: float = 10.0) -> ResidualSfoEstimate:
    """Track the line-of-sight ridge across pilot symbols and map its
    least-squares slope to a clock offset in ppm.

    The returned sign is correction-ready: a positive estimate means the
    receiver clock stretch compressed the frame (apparent delay drifting
    early) and resample_correct() with this value undoes it.
    """
    if dtp.n_columns < 2:
        raise SyncError("need at least two pilot columns for a slope")
    pos = _ridge_positions(dtp, ridge_threshold_db)
    m = dtp.symbol_indices.astype(float)
    mm = m.mean()
    slope = float(np.sum((m - mm) * (pos - pos.mean())) / np.sum((m - mm) ** 2))
    span = m[-1] - m[0]
    # fitted end-to-end ridge drift, converted to base-rate samples
    drift_samples = slope * span * dtp.tap_spacing_s * spec.bandwidth
    sfo_ppm = -drift_samples * 1e6 / (spec.symbol_len * (span + 1))
    return ResidualSfoEstimate(sfo_ppm=float(sfo_ppm), delays_taps=pos,
                               slope_taps_per_symbol=slope)


@dataclass(frozen=True)
class ResidualFoEstimate:
    fo_hz: float
    ambiguous: bool
    bin_width_hz: float


def estimate_residual_fo(grid: FreqGrid, spec: FrameSpec, pad_factor: int = 16,
                         hint_fo_hz: float | None = None,
                         ridge_threshold_db: float = 10.0) -> ResidualFoEstimate:
    """Residual frequency offset from the delay-Doppler profile.

    With delays already corrected the line of sight sits at delay tap
    zero, so the Doppler spectrum is the DFT across the pilot symbols of
    that single profile row. Estimates beyond +-1/(2 M_t T_OFDM) alias;
    when a hint (from the preamble pair phases) contradicts the estimate
    by more than the unambiguous range, the result is flagged instead of
    silently wrapped.
    """
    dtp = delay_time_profile(grid, spec, pad_factor)
    row = dtp.values[0, :]
    n_bins = dtp.n_columns * pad_factor
    spec_row = np.fft.fft(row, n=n_bins)
    mag = np.abs(spec_row)
    k = int(np.argmax(mag))
    med = float(np.median(mag))
    if med > 0 and 20 * np.log10(mag[k] / med + 1e-300) < ridge_threshold_db and dtp.n_columns > 4:
        raise SyncError("delay-Doppler profile peak below detection threshold")
    # derotate by the coarse bin, then refine with a power-weighted phase fit
    c_idx = np.arange(dtp.n_columns, dtype=float)
    der = row * np.exp(-2j * np.pi * c_idx * k / n_bins)
    mean_dir = np.sum(np.abs(der) * der)
    if mean_dir != 0:
        der = der * np.conj(mean_dir / np.abs(mean_dir))
    w = np.abs(der) ** 2
    ph = np.angle(der)
    mx = np.sum(w * c_idx) / np.sum(w)
    my = np.sum(w * ph) / np.sum(w)
    slope = np.sum(w * (c_idx - mx) * (ph - my)) / np.sum(w * (c_idx - mx) ** 2)
    p = k + slope * n_bins / (2 * np.pi)
    if p > n_bins / 2:
        p -= n_bins
    pilot_period = spec.pilot_spacing_time * spec.t_ofdm
    fo = p / (n_bins * pilot_period)
    bound = 1.0 / (2.0 * pilot_period)
    ambiguous = hint_fo_hz is not None and abs(fo - hint_fo_hz) > bound
    return ResidualFoEstimate(fo_hz=float(fo), ambiguous=ambiguous,
                              bin_width_hz=1.0 / (n_bins * pilot_period))


# -- full chain ---------------------------------------------------------------


@dataclass
class SyncReport:
    coarse_start: int
    fine_start: int
    coarse_fo_hz: float
    residual_fo_hz: float
    preamble_sfo_ppm: float
    residual_sfo_ppm: float
    los_delay_tap: float
    fo_ambiguous: bool = False
    sc_metric_peak: float = 0.0

    @property
    def total_fo_hz(self) -> float:
        return self.coarse_fo_hz + self.residual_fo_hz

    @property
    def total_sfo_ppm(self) -> float:
        return ((1 + self.preamble_sfo_ppm * 1e-6) * (1 + self.residual_sfo_ppm * 1e-6) - 1) * 1e6

    def to_dict(self) -> dict:
        return {
            "coarse_start": self.coarse_start,
            "fine_start": self.fine_start,
            "coarse_fo_hz": self.coarse_fo_hz,
            "residual_fo_hz": self.residual_fo_hz,
            "total_fo_hz": self.total_fo_hz,
            "preamble_sfo_ppm": self.preamble_sfo_ppm,
            "residual_sfo_ppm": self.residual_sfo_ppm,
            "total_sfo_ppm": self.total_sfo_ppm,
            "los_delay_tap": self.los_delay_tap,
            "fo_ambiguous": self.fo_ambiguous,
            "sc_metric_peak": self.sc_metric_peak,
        }


@dataclass(frozen=True)
class SyncConfig:
    sc_threshold: float = 0.5
    ridge_threshold_db: float = 10.0
    dtp_pad_factor: int = 16
    ddp_pad_factor: int = 16
    resampler_taps: int = 32


def synchronize(signal: TimeSignal, spec: FrameSpec, preamble: PreambleBlock,
                config: SyncConfig = SyncConfig()) -> tuple[FreqGrid, SyncReport]:
    """Run the complete chain and return the synchronized payload grid."""
    fs = signal.sample_rate
    os = _oversampling_of(signal, spec)
    frame_len = spec.n_symbols * spec.symbol_len * os

    coarse = coarse_sync_sc(signal, spec, threshold=config.sc_threshold)
    fine = fine_timing(signal, spec, preamble, coarse)

    pair_est = estimate_sfo_pairs(signal, spec, fine, coarse.fo_hz)
    s1 = resample_correct(signal, pair_est.sfo_ppm, anchor=fine,
                          taps_per_phase=config.resampler_taps)
    if len(s1) < frame_len:
        raise SyncError("signal truncated after resampling")
    grid1 = demodulate_frame(s1, 0, spec)
    dtp = delay_time_profile(grid1, spec, config.dtp_pad_factor)
    res_sfo = estimate_residual_sfo(dtp, spec, config.ridge_threshold_db)
    s2 = resample_correct(s1, res_sfo.sfo_ppm, anchor=0,
                          taps_per_phase=config.resampler_taps)

    eta = np.arange(len(s2))
    s3 = TimeSignal(s2.samples * np.exp(-2j * np.pi * coarse.fo_hz * eta / fs), fs)
    grid2 = demodulate_frame(s3, 0, spec)
    res_fo = estimate_residual_fo(grid2, spec, config.ddp_pad_factor,
                                  hint_fo_hz=pair_est.residual_fo_hz,
                                  ridge_threshold_db=config.ridge_threshold_db)
    s4 = TimeSignal(s3.samples * np.exp(-2j * np.pi * res_fo.fo_hz * eta / fs), fs)
    grid = demodulate_frame(s4, 0, spec)

    dtp_final = delay_time_profile(grid, spec, config.dtp_pad_factor)
    pos = _ridge_positions(dtp_final, config.ridge_threshold_db)
    los_tap_samples = float(np.mean(pos) * dtp_final.tap_spacing_s * spec.bandwidth)

    report = SyncReport(
        coarse_start=coarse.start, fine_start=fine,
        coarse_fo_hz=coarse.fo_hz, residual_fo_hz=res_fo.fo_hz,
        preamble_sfo_ppm=pair_est.sfo_ppm, residual_sfo_ppm=res_sfo.sfo_ppm,
        los_delay_tap=los_tap_samples, fo_ambiguous=res_fo.ambiguous,
        sc_metric_peak=coarse.metric_peak)
    return grid, report

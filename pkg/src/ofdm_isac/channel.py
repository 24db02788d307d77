"""Bistatic impairment channel: multipath, clock offsets, noise.

The receive model is a sum over propagation paths, each with gain, delay,
and Doppler shift, a common carrier frequency/phase offset, a symbol time
offset shared by all paths, and a sampling-clock stretch applied last:
y[eta] = y_analog(eta * T_s * (1 + delta)). Fractional delays and the
clock stretch use near-ideal windowed-sinc interpolation, standing in for
the analog continuous-time signal.

SNR convention: snr_los_db is the ratio of received LoS signal power to
total noise power in the sampled stream at the converter rate
(spec.sample_rate). Secondary-path SNRs use the same noise reference, so
with a 0 dB LoS gain a secondary path at snr_sp sits snr_los - snr_sp dB
below the LoS path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import default_interpolator, signed_subcarrier_index
from .frame import FrameSpec, FreqGrid, TimeSignal

MAX_SFO_PPM = 1000.0


@dataclass(frozen=True)
class PathModel:
    """One propagation path. gain None means "derive from the scenario SNRs"."""

    gain: float | None
    delay: float            # seconds
    doppler: float          # Hz

    def __post_init__(self):
        if self.gain is not None and self.gain < 0:
            raise ValueError("path gain must be >= 0")
        if self.delay < 0:
            raise ValueError("path delay must be >= 0")


@dataclass(frozen=True)
class OffsetTuple:
    """Transmitter/receiver misalignment: STO, CFO, CPO, SFO."""

    sto: float = 0.0        # seconds
    cfo: float = 0.0        # Hz
    cpo: float = 0.0        # rad
    sfo_ppm: float = 0.0    # parts per million

    def __post_init__(self):
        if abs(self.sfo_ppm) >= MAX_SFO_PPM:
            raise ValueError(f"|sfo_ppm| must be < {MAX_SFO_PPM}")


@dataclass
class ChannelScenario:
    """Path list plus offsets and noise bookkeeping.

    Call resolve_scenario() before applying: it fills derived path gains
    and the noise power reference from the transmit signal power.
    """

    paths: list[PathModel]
    offsets: OffsetTuple = field(default_factory=OffsetTuple)
    snr_los_db: float = math.inf
    snr_secondary_db: list[float] = field(default_factory=list)
    noise_seed: int = 0
    # resolved fields
    los_rx_power: float | None = None
    noise_power: float | None = None       # total noise power at noise_ref_rate
    noise_ref_rate: float | None = None

    def __post_init__(self):
        if not self.paths:
            raise ValueError("scenario needs at least one path")
        los = self.paths[0]
        for p in self.paths[1:]:
            if p.delay < los.delay:
                raise ValueError("path 0 must be the LoS path with minimal delay")

    @property
    def resolved(self) -> bool:
        return self.noise_power is not None


def resolve_scenario(scenario: ChannelScenario, tx_power: float,
                     ref_rate: float) -> ChannelScenario:
    """Fill derived gains and the noise power reference.

    tx_power is the mean transmit sample power over the frame; ref_rate is
    the converter rate the SNR definition refers to (spec.sample_rate).
    """
    paths = list(scenario.paths)
    los = paths[0]
    los_gain = 1.0 if los.gain is None else los.gain
    paths[0] = replace(los, gain=los_gain)
    los_rx_power = los_gain ** 2 * tx_power
    snr_lin = 10 ** (scenario.snr_los_db / 10)
    noise_power = 0.0 if math.isinf(scenario.snr_los_db) else los_rx_power / snr_lin
    sec_snrs = list(scenario.snr_secondary_db)
    j = 0
    for i, p in enumerate(paths[1:], start=1):
        if p.gain is None:
            if j >= len(sec_snrs):
                raise ValueError(f"path {i} has no gain and no secondary SNR entry")
            if noise_power == 0.0:
                raise ValueError("cannot derive secondary gain at infinite LoS SNR; give explicit gain")
            g = math.sqrt(10 ** (sec_snrs[j] / 10) * noise_power / tx_power)
            paths[i] = replace(p, gain=g)
            j += 1
    for p in paths[1:]:
        if p.gain > paths[0].gain:
            raise ValueError("LoS path must have maximal gain")
    out = replace(scenario, paths=paths)
    out.los_rx_power = los_rx_power
    out.noise_power = noise_power
    out.noise_ref_rate = ref_rate
    return out


def apply_channel(signal: TimeSignal, scenario: ChannelScenario,
                  pad: int | None = None) -> TimeSignal:
    """Multipath + CFO/CPO/STO part of the receive model (noiseless, no SFO).

    The output is extended to hold the largest delay; pad adds extra
    trailing samples beyond that (default: interpolator width).
    """
    fs = signal.sample_rate
    x = signal.samples
    interp = default_interpolator()
    delays = [(p.delay + scenario.offsets.sto) * fs for p in scenario.paths]
    if min(delays) < 0:
        raise ValueError("total path delay (incl. STO) must be non-negative")
    if max(delays) > len(x):
        raise ValueError("path delay exceeds signal duration")
    if pad is None:
        pad = interp.width
    out_len = len(x) + int(np.ceil(max(delays))) + pad
    t = np.arange(out_len) / fs
    out = np.zeros(out_len, dtype=np.complex128)
    for p, d in zip(scenario.paths, delays):
        gain = 1.0 if p.gain is None else p.gain
        if gain == 0.0:
            continue
        di = round(d)
        if abs(d - di) < 1e-9:
            shifted = np.zeros(out_len, dtype=np.complex128)
            shifted[di:di + len(x)] = x
        else:
            shifted = interp.delay(x, d, out_len)
        phasor = np.exp(2j * np.pi * (p.doppler + scenario.offsets.cfo) * t)
        out += gain * shifted * phasor
    return TimeSignal(out * np.exp(1j * scenario.offsets.cpo), fs)


def apply_sfo(signal: TimeSignal, sfo_ppm: float) -> TimeSignal:
    """Sampling-clock stretch: out[eta] = in(eta * (1 + delta)), length kept."""
    if abs(sfo_ppm) >= MAX_SFO_PPM:
        raise ValueError(f"|sfo_ppm| must be < {MAX_SFO_PPM}")
    delta = sfo_ppm * 1e-6
    if delta == 0.0:
        return TimeSignal(signal.samples.copy(), signal.sample_rate)
    interp = default_interpolator()
    t = np.arange(len(signal), dtype=np.float64) * (1.0 + delta)
    return TimeSignal(interp.at(signal.samples, t), signal.sample_rate)


def add_awgn(signal: TimeSignal, scenario: ChannelScenario,
             rng: np.random.Generator | None = None) -> TimeSignal:
    """Circularly-symmetric white Gaussian noise per the scenario's SNR.

    The variance scales with the signal's rate relative to the noise
    reference rate so that the in-band noise power is rate-independent.
    Reproducible from scenario.noise_seed when rng is not given.
    """
    if not scenario.resolved:
        raise ValueError("scenario must be resolved (resolve_scenario) before adding noise")
    if scenario.noise_power == 0.0:
        return TimeSignal(signal.samples.copy(), signal.sample_rate)
    var = scenario.noise_power * signal.sample_rate / scenario.noise_ref_rate
    rng = rng or np.random.default_rng([scenario.noise_seed, 0xA3])
    n = len(signal)
    noise = np.sqrt(var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return TimeSignal(signal.samples + noise, signal.sample_rate)


def propagate(signal: TimeSignal, scenario: ChannelScenario, spec: FrameSpec,
              tx_power: float | None = None) -> tuple[TimeSignal, ChannelScenario]:
    """Full impairment chain: resolve gains, multipath+offsets, SFO, noise."""
    if not scenario.resolved:
        scenario = resolve_scenario(scenario, tx_power if tx_power is not None else signal.power(),
                                    ref_rate=spec.sample_rate)
    y = apply_channel(signal, scenario)
    y = apply_sfo(y, scenario.offsets.sfo_ppm)
    y = add_awgn(y, scenario)
    return y, scenario


# -- frequency-domain SFO reference model ------------------------------------


def sfo_grid_oracle(grid: FreqGrid | np.ndarray, sfo_ppm: float, spec: FrameSpec) -> FreqGrid:
    """Closed-form effect of a small SFO on the demodulated frame.

    Evaluates, per cell, the diagonal amplitude attenuation
    sin(pi d n)/(N sin(pi d n / N)), the time-varying phase
    exp(j 2 pi ((m (N+N_CP) + N_CP)/N) d n) * exp(j pi ((N-1)/N) d n), and
    the full inter-carrier-interference double sum. Subcarrier indices
    enter with their physical sign (n > N/2 maps to n - N), matching an
    I/Q baseband transmitter; the symbol index m counts from the first
    column of the provided grid. Valid while the accumulated drift stays
    inside the CP (no inter-symbol interference).
    """
    x = grid.symbols if isinstance(grid, FreqGrid) else np.asarray(grid, dtype=np.complex128)
    n, m = x.shape
    if n != spec.n_subcarriers:
        raise ValueError("grid height must equal n_subcarriers")
    delta = sfo_ppm * 1e-6
    ns = signed_subcarrier_index(n).astype(np.float64)
    # kernel K[n, n'] = D((1+delta) n' - n), D(a) = sin(pi a)/(N sin(pi a/N)) e^{j pi (N-1)/N a}
    a = (1.0 + delta) * ns[None, :] - ns[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        mag = np.sin(np.pi * a) / (n * np.sin(np.pi * a / n))
    mag = np.where(np.abs(a) < 1e-12, 1.0, mag)
    kernel = mag * np.exp(1j * np.pi * (n - 1) / n * a)
    sym_index = np.arange(m)
    start = (sym_index * spec.symbol_len + spec.cp_len) / n
    phase = np.exp(2j * np.pi * delta * ns[:, None] * start[None, :])
    out = kernel.astype(np.complex128) @ (x * phase)
    roles = grid.roles if isinstance(grid, FreqGrid) else None
    return FreqGrid(out, roles)

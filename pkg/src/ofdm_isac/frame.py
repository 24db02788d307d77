"""Frame geometry, cell roles, and radar performance parameters.

The OFDM frame is an N x M grid of modulation symbols: M_ps preamble symbols
followed by M_pl payload symbols. Pilots sit on a regular lattice inside the
payload region (every N_f-th subcarrier on every M_t-th payload symbol).

DFT convention used everywhere in this package: forward DFT unnormalized,
inverse DFT carries the 1/N factor (numpy's default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction

import numpy as np

C0 = 299_792_458.0  # speed of light, m/s

SUPPORTED_MODULATION_ORDERS = (4, 16, 64)


class CellRole(IntEnum):
    PREAMBLE = 0
    PILOT = 1
    PAYLOAD = 2


@dataclass(frozen=True)
class FrameSpec:
    """All frame-geometry and numerology constants.

    bandwidth is the occupied signal bandwidth B; sample_rate is the
    channel/converter rate f_s >= B (the simulator oversamples by
    f_s / B, which must be a positive integer).
    """

    n_subcarriers: int          # N
    n_preamble: int             # M_ps: 2 S&C symbols + an even number of SFO-preamble symbols
    n_payload: int              # M_pl
    cp_len: int                 # N_CP
    pilot_spacing_freq: int     # N_f
    pilot_spacing_time: int     # M_t
    bandwidth: float            # B, Hz
    sample_rate: float          # f_s, Hz
    modulation_order: int = 4
    code_rate: Fraction = Fraction(2, 3)   # Fraction(1, 1) means uncoded
    scramble_seed: int = 0

    def __post_init__(self):
        n = self.n_subcarriers
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_subcarriers must be a power of two, got {n}")
        if not (0 < self.cp_len < n):
            raise ValueError("cp_len must satisfy 0 < N_CP < N")
        if self.pilot_spacing_freq < 1 or self.pilot_spacing_time < 1:
            raise ValueError("pilot spacings must be >= 1")
        if self.n_preamble < 4 or (self.n_preamble - 2) % 2 != 0:
            raise ValueError("n_preamble must be >= 4 with an even number of SFO-preamble symbols")
        if self.n_payload < 1:
            raise ValueError("n_payload must be >= 1")
        if self.sample_rate < self.bandwidth:
            raise ValueError("sample_rate must be >= bandwidth")
        if self.modulation_order not in SUPPORTED_MODULATION_ORDERS:
            raise ValueError(f"modulation_order must be one of {SUPPORTED_MODULATION_ORDERS}")
        r = Fraction(self.code_rate)
        if not (0 < r <= 1):
            raise ValueError("code_rate must be in (0, 1]")
        object.__setattr__(self, "code_rate", r)
        os = self.sample_rate / self.bandwidth
        if abs(os - round(os)) > 1e-9:
            raise ValueError("sample_rate / bandwidth must be an integer oversampling factor")

    # -- derived numerology -------------------------------------------------

    @property
    def n_symbols(self) -> int:
        return self.n_preamble + self.n_payload

    @property
    def subcarrier_spacing(self) -> float:
        """Delta_f = B / N, Hz."""
        return self.bandwidth / self.n_subcarriers

    @property
    def symbol_len(self) -> int:
        """Samples per OFDM symbol incl. CP at the base rate B."""
        return self.n_subcarriers + self.cp_len

    @property
    def t_ofdm(self) -> float:
        """OFDM symbol duration incl. CP, seconds."""
        return self.symbol_len / self.bandwidth

    @property
    def t_sample(self) -> float:
        """Base-rate sample period 1/B, seconds."""
        return 1.0 / self.bandwidth

    @property
    def oversampling(self) -> int:
        return round(self.sample_rate / self.bandwidth)

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.modulation_order))

    @property
    def n_preamble_pairs(self) -> int:
        return (self.n_preamble - 2) // 2

    # -- pilot lattice ------------------------------------------------------

    @property
    def pilot_subcarriers(self) -> np.ndarray:
        return np.arange(0, self.n_subcarriers, self.pilot_spacing_freq)

    @property
    def pilot_symbols(self) -> np.ndarray:
        """Payload-symbol indices (0-based within the payload part) that carry pilots."""
        return np.arange(0, self.n_payload, self.pilot_spacing_time)

    @property
    def n_pilot_subcarriers(self) -> int:
        return math.ceil(self.n_subcarriers / self.pilot_spacing_freq)

    @property
    def n_pilot_symbols(self) -> int:
        return math.ceil(self.n_payload / self.pilot_spacing_time)

    @property
    def n_pilot_cells(self) -> int:
        return self.n_pilot_subcarriers * self.n_pilot_symbols

    @property
    def n_payload_cells(self) -> int:
        return self.n_payload * self.n_subcarriers - self.n_pilot_cells

    def pilot_mask(self) -> np.ndarray:
        """Boolean (N, M_pl) mask of pilot cells within the payload part."""
        mask = np.zeros((self.n_subcarriers, self.n_payload), dtype=bool)
        mask[np.ix_(self.pilot_subcarriers, self.pilot_symbols)] = True
        return mask

    def payload_roles(self) -> np.ndarray:
        """(N, M_pl) array of CellRole values for the payload part of the frame."""
        roles = np.full((self.n_subcarriers, self.n_payload), CellRole.PAYLOAD, dtype=np.uint8)
        roles[self.pilot_mask()] = CellRole.PILOT
        return roles

    def frame_roles(self) -> np.ndarray:
        """(N, M) array of CellRole values for the complete frame."""
        pre = np.full((self.n_subcarriers, self.n_preamble), CellRole.PREAMBLE, dtype=np.uint8)
        return np.concatenate([pre, self.payload_roles()], axis=1)

    def payload_cell_order(self) -> tuple[np.ndarray, np.ndarray]:
        """Payload cells enumerated in column order (n fastest, then m).

        Returns (subcarrier_idx, payload_symbol_idx) arrays of length
        n_payload_cells. This ordering is the canonical symbol-insertion
        order; random placement is a permutation of it.
        """
        mask = ~self.pilot_mask()
        m_grid, n_grid = np.meshgrid(np.arange(self.n_payload), np.arange(self.n_subcarriers))
        order = np.lexsort((n_grid[mask], m_grid[mask]))
        return n_grid[mask][order], m_grid[mask][order]


@dataclass(frozen=True)
class RadarParams:
    """Bistatic radar performance parameters of a frame configuration."""

    processing_gain_db: float
    range_resolution_m: float
    max_unamb_range_m: float
    max_isi_free_range_m: float
    doppler_resolution_hz: float
    max_unamb_doppler_hz: float
    max_ici_free_doppler_hz: float

    def __post_init__(self):
        for name in ("range_resolution_m", "max_unamb_range_m", "max_isi_free_range_m",
                     "doppler_resolution_hz", "max_unamb_doppler_hz", "max_ici_free_doppler_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def radar_parameters(spec: FrameSpec, full_frame: bool = False) -> RadarParams:
    """Evaluate the radar performance parameters of a frame configuration.

    full_frame=True gives the parameters of the full-frame image, i.e. the
    pilot-spacing-dependent quantities evaluated at N_f = M_t = 1.
    """
    n_f = 1 if full_frame else spec.pilot_spacing_freq
    m_t = 1 if full_frame else spec.pilot_spacing_time
    n_used = math.ceil(spec.n_subcarriers / n_f)
    m_used = math.ceil(spec.n_payload / m_t)
    gain_lin = n_used * m_used
    b = spec.bandwidth
    return RadarParams(
        processing_gain_db=10.0 * math.log10(gain_lin),
        range_resolution_m=C0 / b,
        max_unamb_range_m=C0 / b * n_used,
        max_isi_free_range_m=C0 / b * spec.cp_len,
        doppler_resolution_hz=b / (spec.symbol_len * spec.n_payload),
        max_unamb_doppler_hz=b / (2 * m_t * spec.symbol_len),
        max_ici_free_doppler_hz=b / (10 * spec.n_subcarriers),
    )


@dataclass(frozen=True)
class PilotSpacingCheck:
    """Verdict of the pilot-spacing validation against expected channel dynamics."""

    accepted: bool
    mt_bound: float           # largest admissible M_t (+inf when unconstrained)
    nf_bound: float           # largest admissible N_f (+inf when unconstrained)
    mt_ok: bool
    nf_ok: bool


def validate_pilot_spacing(spec: FrameSpec, f_d_exp: float, tau_exp: float,
                           rel_tol: float = 1e-9) -> PilotSpacingCheck:
    """Check the pilot lattice against the expected Doppler shift and delay.

    Accepts iff M_t <= 1 / (2 f_D,exp T_OFDM) and N_f <= 1 / (2 Delta_f tau_exp).
    Comparisons use a small relative tolerance so that exactly-critical
    spacings are accepted.
    """
    if f_d_exp < 0 or tau_exp < 0:
        raise ValueError("expected Doppler and delay must be non-negative")
    mt_bound = math.inf if f_d_exp == 0 else 1.0 / (2.0 * f_d_exp * spec.t_ofdm)
    nf_bound = math.inf if tau_exp == 0 else 1.0 / (2.0 * spec.subcarrier_spacing * tau_exp)
    mt_ok = spec.pilot_spacing_time <= mt_bound * (1.0 + rel_tol)
    nf_ok = spec.pilot_spacing_freq <= nf_bound * (1.0 + rel_tol)
    return PilotSpacingCheck(accepted=mt_ok and nf_ok, mt_bound=mt_bound,
                             nf_bound=nf_bound, mt_ok=mt_ok, nf_ok=nf_ok)


def blackman_window(length: int) -> np.ndarray:
    """Classic symmetric Blackman window (coefficients 0.42, 0.5, 0.08)."""
    if length < 1:
        raise ValueError("window length must be >= 1")
    return np.blackman(length)


# -- signal containers ------------------------------------------------------


@dataclass
class TimeSignal:
    """Complex baseband sample sequence with its sample rate."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1:
            raise ValueError("TimeSignal samples must be one-dimensional")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2)) if len(self) else 0.0


@dataclass
class FreqGrid:
    """N x M complex modulation-symbol grid with per-cell role labels."""

    symbols: np.ndarray
    roles: np.ndarray = field(default=None)

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        if self.symbols.ndim != 2:
            raise ValueError("FreqGrid symbols must be two-dimensional (N x M)")
        if self.roles is None:
            self.roles = np.full(self.symbols.shape, CellRole.PAYLOAD, dtype=np.uint8)
        else:
            self.roles = np.asarray(self.roles, dtype=np.uint8)
            if self.roles.shape != self.symbols.shape:
                raise ValueError("roles shape must match symbols shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.symbols.shape

    def copy(self) -> "FreqGrid":
        return FreqGrid(self.symbols.copy(), self.roles.copy())

    def payload_part(self, spec: FrameSpec) -> "FreqGrid":
        """Strip preamble columns, keeping the N x M_pl payload grid."""
        if self.symbols.shape[1] == spec.n_payload:
            return self
        if self.symbols.shape[1] != spec.n_symbols:
            raise ValueError("grid width matches neither the full frame nor the payload part")
        return FreqGrid(self.symbols[:, spec.n_preamble:], self.roles[:, spec.n_preamble:])

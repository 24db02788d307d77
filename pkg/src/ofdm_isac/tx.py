"""Transmit frame construction.

Chain: information bits -> channel encoding -> Gray mapping -> placement
into the payload lattice (column order or seeded random interleaving) ->
pilot and preamble insertion -> OFDM modulation (IDFT + cyclic prefix)
into the serial baseband sequence.

Frame-structure randomness (preamble content, pilot values, placement
permutation, filler symbols) derives from FrameSpec.scramble_seed and is
therefore known at the receiver; data bits and noise use separate seeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dsp import oversampled_bin_map
from .frame import CellRole, FrameSpec, FreqGrid, TimeSignal
from .ldpc import LdpcCode
from .mapping import map_symbols

_SEED_PREAMBLE, _SEED_PILOT, _SEED_PLACEMENT, _SEED_FILLER = 101, 102, 103, 104


def _pn_qpsk(rng: np.random.Generator, count: int) -> np.ndarray:
    """Unit-magnitude pseudo-random QPSK points."""
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, count)))


@dataclass(frozen=True)
class PreambleBlock:
    """Frequency-domain preamble columns: 2 coarse-sync symbols followed by
    pairs of identical symbols for sampling-clock estimation."""

    columns: np.ndarray          # (N, M_ps)
    generator_seed: int

    @property
    def n_symbols(self) -> int:
        return self.columns.shape[1]


def build_preamble(spec: FrameSpec, seed: int | None = None) -> PreambleBlock:
    """Construct the preamble.

    Symbol 0 occupies even subcarriers only (amplitude sqrt(2) to keep the
    symbol energy equal to a payload symbol), which makes its time-domain
    halves identical. Symbol 1 is a full PN symbol used as the fine-timing
    reference. The remaining symbols form identical pairs.
    """
    seed = spec.scramble_seed if seed is None else seed
    n = spec.n_subcarriers
    rng = np.random.default_rng([seed, _SEED_PREAMBLE])
    cols = np.zeros((n, spec.n_preamble), dtype=np.complex128)
    cols[0::2, 0] = np.sqrt(2.0) * _pn_qpsk(rng, n // 2)
    cols[:, 1] = _pn_qpsk(rng, n)
    for p in range(spec.n_preamble_pairs):
        sym = _pn_qpsk(rng, n)
        cols[:, 2 + 2 * p] = sym
        cols[:, 3 + 2 * p] = sym
    return PreambleBlock(columns=cols, generator_seed=seed)


def pilot_values(spec: FrameSpec) -> np.ndarray:
    """Known pilot symbols, shape (n_pilot_subcarriers, n_pilot_symbols)."""
    rng = np.random.default_rng([spec.scramble_seed, _SEED_PILOT])
    return _pn_qpsk(rng, spec.n_pilot_cells).reshape(
        spec.n_pilot_subcarriers, spec.n_pilot_symbols)


def filler_symbols(spec: FrameSpec, count: int) -> np.ndarray:
    """Known PN symbols padding payload cells not covered by codewords."""
    rng = np.random.default_rng([spec.scramble_seed, _SEED_FILLER])
    return _pn_qpsk(rng, count)


@dataclass(frozen=True)
class PlacementMap:
    """Bijection between payload-symbol sequence index and payload cell.

    Cell indices refer to the canonical column-order enumeration of payload
    cells; sequence element i lands in cell perm[i].
    """

    perm: np.ndarray
    mode: str
    seed: int

    def place(self, values: np.ndarray) -> np.ndarray:
        """Sequence -> values in column-order cell layout."""
        if values.shape[0] != self.perm.shape[0]:
            raise ValueError(f"expected {self.perm.shape[0]} payload symbols, got {values.shape[0]}")
        out = np.empty(self.perm.shape[0], dtype=values.dtype)
        out[self.perm] = values
        return out

    def extract(self, cell_values: np.ndarray) -> np.ndarray:
        """Values in column-order cell layout -> original sequence order."""
        if cell_values.shape[0] != self.perm.shape[0]:
            raise ValueError("cell value count does not match placement size")
        return cell_values[self.perm]


def make_placement(spec: FrameSpec, mode: str = "column", seed: int | None = None) -> PlacementMap:
    n_cells = spec.n_payload_cells
    seed = spec.scramble_seed if seed is None else seed
    if mode == "column":
        perm = np.arange(n_cells)
    elif mode == "random":
        rng = np.random.default_rng([seed, _SEED_PLACEMENT])
        perm = rng.permutation(n_cells)
    else:
        raise ValueError(f"unknown placement mode {mode!r}")
    return PlacementMap(perm=perm, mode=mode, seed=seed)


def place_payload(symbols: np.ndarray, spec: FrameSpec, mode: str = "column",
                  seed: int | None = None) -> tuple[FreqGrid, PlacementMap]:
    """Place a payload-symbol sequence into the N x M_pl payload grid.

    Pilot cells are left zero here; build_frame fills them. The returned
    grid carries the payload-part role labels.
    """
    placement = make_placement(spec, mode, seed)
    grid = np.zeros((spec.n_subcarriers, spec.n_payload), dtype=np.complex128)
    n_idx, m_idx = spec.payload_cell_order()
    grid[n_idx, m_idx] = placement.place(np.asarray(symbols, dtype=np.complex128))
    return FreqGrid(grid, spec.payload_roles()), placement


@dataclass(frozen=True)
class FrameLayout:
    """How coded bits tile the payload cells of one frame."""

    n_codewords: int
    info_len: int
    coded_len: int
    filler_symbols: int

    @property
    def uncoded(self) -> bool:
        return self.n_codewords == 0


def frame_layout(spec: FrameSpec, code: LdpcCode | None = None) -> FrameLayout:
    capacity_bits = spec.n_payload_cells * spec.bits_per_symbol
    if spec.code_rate == 1:
        return FrameLayout(n_codewords=0, info_len=capacity_bits,
                           coded_len=capacity_bits, filler_symbols=0)
    code = code or LdpcCode.for_rate(spec.code_rate)
    n_cw = capacity_bits // code.n
    if n_cw == 0:
        raise ValueError("frame too small to carry one codeword")
    coded_len = n_cw * code.n
    filler = (capacity_bits - coded_len) // spec.bits_per_symbol
    return FrameLayout(n_codewords=n_cw, info_len=n_cw * code.k,
                       coded_len=coded_len, filler_symbols=filler)


def payload_symbols_from_info(info_bits: np.ndarray, spec: FrameSpec,
                              code: LdpcCode | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Encode + map information bits into the frame's payload-symbol sequence.

    Returns (symbols including filler, coded_bits).
    """
    layout = frame_layout(spec, code)
    info_bits = np.asarray(info_bits, dtype=np.uint8).ravel()
    if info_bits.shape[0] != layout.info_len:
        raise ValueError(f"expected {layout.info_len} information bits, got {info_bits.shape[0]}")
    if layout.uncoded:
        coded = info_bits.copy()
    else:
        coded = (code or LdpcCode.for_rate(spec.code_rate)).encode(info_bits)
    sym = map_symbols(coded, spec.modulation_order)
    if layout.filler_symbols:
        sym = np.concatenate([sym, filler_symbols(spec, layout.filler_symbols)])
    return sym, coded


@dataclass
class TxFrame:
    """A fully built transmit frame and everything needed to reconstruct it."""

    spec: FrameSpec
    grid: FreqGrid               # N x M, preamble included
    info_bits: np.ndarray
    coded_bits: np.ndarray
    placement: PlacementMap
    preamble: PreambleBlock

    @property
    def payload_grid(self) -> FreqGrid:
        return self.grid.payload_part(self.spec)


def build_frame(spec: FrameSpec, info_bits: np.ndarray | None = None,
                placement_mode: str = "column", data_rng: np.random.Generator | None = None,
                code: LdpcCode | None = None) -> TxFrame:
    """Assemble the complete transmit frame grid.

    info_bits may be omitted, in which case random bits are drawn from
    data_rng (or a default seeded generator).
    """
    layout = frame_layout(spec, code)
    if info_bits is None:
        data_rng = data_rng or np.random.default_rng(spec.scramble_seed)
        info_bits = data_rng.integers(0, 2, layout.info_len).astype(np.uint8)
    sym, coded = payload_symbols_from_info(info_bits, spec, code)
    payload, placement = place_payload(sym, spec, placement_mode)
    payload.symbols[np.ix_(spec.pilot_subcarriers, spec.pilot_symbols)] = pilot_values(spec)
    preamble = build_preamble(spec)
    full = np.concatenate([preamble.columns, payload.symbols], axis=1)
    grid = FreqGrid(full, spec.frame_roles())
    return TxFrame(spec=spec, grid=grid, info_bits=np.asarray(info_bits, dtype=np.uint8).ravel(),
                   coded_bits=coded, placement=placement, preamble=preamble)


def ofdm_modulate(grid: FreqGrid | np.ndarray, spec: FrameSpec, oversampling: int = 1) -> TimeSignal:
    """IDFT each symbol, prepend the CP, serialize.

    oversampling > 1 synthesizes the band-limited signal at rate
    oversampling * B directly (subcarriers mapped to their physical
    frequency slots of a larger IDFT), which is the exact interpolation of
    the base-rate signal including the cyclic prefix.
    """
    x = grid.symbols if isinstance(grid, FreqGrid) else np.asarray(grid, dtype=np.complex128)
    if x.ndim != 2 or x.shape[0] != spec.n_subcarriers:
        raise ValueError(f"grid must be (N={spec.n_subcarriers}) x M, got {x.shape}")
    os = int(oversampling)
    n, m = x.shape
    if os == 1:
        t = np.fft.ifft(x, axis=0)
    else:
        big = np.zeros((os * n, m), dtype=np.complex128)
        big[oversampled_bin_map(n, os)] = x * os
        t = np.fft.ifft(big, axis=0)
    cp = t[-spec.cp_len * os:, :]
    serial = np.concatenate([cp, t], axis=0).T.ravel()
    return TimeSignal(serial, sample_rate=os * spec.bandwidth)


def frame_roles_cells(spec: FrameSpec) -> np.ndarray:
    """Convenience wrapper kept for symmetry with FrameSpec.frame_roles."""
    return spec.frame_roles()


def tx_cell_indices(spec: FrameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Column-order payload cell coordinates (subcarrier, payload symbol)."""
    return spec.payload_cell_order()


def assert_tx_frame_consistent(frame: TxFrame) -> None:
    """Debug helper: verify role/content agreement (used by tests)."""
    spec = frame.spec
    grid = frame.grid
    assert grid.symbols.shape == (spec.n_subcarriers, spec.n_symbols)
    pilot_cells = grid.roles == CellRole.PILOT
    assert pilot_cells.sum() == spec.n_pilot_cells
    assert np.all(np.abs(grid.symbols[pilot_cells]) > 0)


UNCODED = Fraction(1, 1)

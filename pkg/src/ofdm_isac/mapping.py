"""Gray-coded QAM mapping, hard demapping, and max-log soft demapping.

Bit convention: each symbol consumes log2(M) bits, first half onto the I
axis, second half onto Q (QPSK: bit pair (b1 b0) -> ((1-2*b1) + j(1-2*b0))/sqrt(2)).
Per axis the bits form a reflected Gray code over the PAM levels, most
positive level first, so adjacent constellation points differ in exactly
one bit. Constellations are normalized to unit average energy.
"""

from __future__ import annotations

import math

import numpy as np

from .frame import SUPPORTED_MODULATION_ORDERS


def _gray_decode(bits: np.ndarray) -> np.ndarray:
    """Gray-decode rows of bits (MSB first) to integers."""
    out = bits[..., 0].astype(np.int64)
    acc = bits[..., 0].astype(np.int64)
    for i in range(1, bits.shape[-1]):
        acc = acc ^ bits[..., i].astype(np.int64)
        out = (out << 1) | acc
    return out


def _axis_levels(bits_per_axis: int) -> np.ndarray:
    """PAM levels indexed by Gray-decoded integer g: level = (2^k - 1) - 2 g."""
    m = 1 << bits_per_axis
    return (m - 1) - 2.0 * np.arange(m)


def constellation(order: int) -> tuple[np.ndarray, float]:
    """Return (points, scale) where points[i] is the unit-energy symbol for
    bit label i (integer from the symbol's bits, MSB first) and scale is the
    normalization divisor applied to the raw integer levels."""
    if order not in SUPPORTED_MODULATION_ORDERS:
        raise ValueError(f"unsupported modulation order {order}")
    k = int(math.log2(order))
    ka = k // 2
    labels = np.arange(order)
    bits = (labels[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1
    gi = _gray_decode(bits[:, :ka])
    gq = _gray_decode(bits[:, ka:])
    lv = _axis_levels(ka)
    raw = lv[gi] + 1j * lv[gq]
    scale = math.sqrt(np.mean(np.abs(raw) ** 2))
    return raw / scale, scale


def map_symbols(bits: np.ndarray, order: int) -> np.ndarray:
    """Map a bit sequence to Gray-coded constellation symbols."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    k = int(math.log2(order))
    if bits.shape[0] % k != 0:
        raise ValueError(f"bit count {bits.shape[0]} not divisible by log2(order)={k}")
    points, _ = constellation(order)
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return points[labels]


def hard_demap(symbols: np.ndarray, order: int) -> np.ndarray:
    """Minimum-distance hard decisions back to bits."""
    symbols = np.asarray(symbols).ravel()
    points, _ = constellation(order)
    labels = np.argmin(np.abs(symbols[:, None] - points[None, :]), axis=1)
    k = int(math.log2(order))
    return ((labels[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1).astype(np.uint8).ravel()


def demap_llr(symbols: np.ndarray, order: int, noise_var) -> np.ndarray:
    """Per-bit max-log LLRs under the package's Gray labeling.

    noise_var is the complex noise variance per symbol, scalar or
    per-symbol array. Positive LLR favors bit value 0. Symbols flagged as
    erased should be passed with noise_var = inf (or filtered afterwards);
    any non-finite variance yields LLR 0 for the symbol's bits.
    """
    symbols = np.asarray(symbols).ravel()
    nv = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), symbols.shape).copy()
    if np.any(nv <= 0):
        raise ValueError("noise_var must be positive")
    points, _ = constellation(order)
    k = int(math.log2(order))
    labels = np.arange(order)
    bits = (labels[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1
    d2 = np.abs(symbols[:, None] - points[None, :]) ** 2
    llr = np.empty((symbols.shape[0], k))
    for b in range(k):
        d0 = np.min(d2[:, bits[:, b] == 0], axis=1)
        d1 = np.min(d2[:, bits[:, b] == 1], axis=1)
        llr[:, b] = (d1 - d0) / nv
    llr[~np.isfinite(nv), :] = 0.0
    return llr.ravel()

"""Low-level DSP primitives: band-limited interpolation and multirate filters.

Two interpolation families live here on purpose:

* ``SincInterpolator`` -- a wide windowed-sinc evaluated through a fine
  polyphase table. This is the near-ideal "analog" reconstruction used by
  the channel model (fractional path delays, sampling-clock stretch).
* ``upsample_fir`` / ``farrow_cubic`` / ``decimate_fir`` -- the practical
  three-stage receive-side resampler (polyphase FIR interpolation, cubic
  polynomial fractional stage, FIR decimation).
"""

from __future__ import annotations

import numpy as np


def kaiser_sinc_taps(n_taps: int, cutoff: float, beta: float = 8.0) -> np.ndarray:
    """Kaiser-windowed sinc lowpass. cutoff is the normalized frequency
    (1.0 = Nyquist) where the ideal response ends; DC gain is 1."""
    if n_taps < 3:
        raise ValueError("n_taps must be >= 3")
    k = np.arange(n_taps) - (n_taps - 1) / 2.0
    h = cutoff * np.sinc(cutoff * k) * np.kaiser(n_taps, beta)
    return h / np.sum(h)


class SincInterpolator:
    """Windowed-sinc fractional interpolator with a precomputed polyphase table.

    width taps per output sample, Kaiser window; the table holds n_phases
    fractional offsets and is linearly interpolated between phases, which
    keeps the tap error well below the window truncation error.
    """

    def __init__(self, width: int = 64, beta: float = 8.0, n_phases: int = 1024):
        if width % 2 != 0:
            raise ValueError("width must be even")
        self.width = width
        self.half = width // 2
        self.n_phases = n_phases
        # table[p, j]: tap for fractional offset mu = p / n_phases, support
        # j - half + 1 ... j + half relative to floor(t)
        mu = np.arange(n_phases + 1)[:, None] / n_phases
        j = np.arange(width)[None, :] - (self.half - 1)
        x = j - mu
        win = np.i0(beta * np.sqrt(np.maximum(0.0, 1.0 - (x / self.half) ** 2))) / np.i0(beta)
        self.table = np.sinc(x) * win

    def at(self, samples: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Evaluate the band-limited reconstruction of ``samples`` at
        (possibly fractional) sample positions ``t``. Positions outside the
        support are treated as zero signal."""
        samples = np.asarray(samples)
        t = np.asarray(t, dtype=np.float64)
        n = samples.shape[0]
        base = np.floor(t).astype(np.int64)
        mu = t - base
        # linear interpolation between adjacent phase rows
        p = mu * self.n_phases
        p0 = np.floor(p).astype(np.int64)
        w1 = (p - p0)[:, None]
        taps = self.table[p0] * (1.0 - w1) + self.table[p0 + 1] * w1
        # gather input with zero padding; positions without support overlap
        # are clipped onto all-zero windows and read as zero signal
        pad = self.width
        base = np.clip(base, -self.half, n + self.half - 1)
        padded = np.concatenate([np.zeros(pad, samples.dtype), samples, np.zeros(pad, samples.dtype)])
        idx = base[:, None] + (np.arange(self.width)[None, :] - (self.half - 1)) + pad
        out = np.empty(t.shape[0], dtype=np.complex128)
        chunk = 1 << 16
        for lo in range(0, t.shape[0], chunk):
            hi = min(lo + chunk, t.shape[0])
            out[lo:hi] = np.einsum("ij,ij->i", padded[idx[lo:hi]], taps[lo:hi])
        return out

    def delay(self, samples: np.ndarray, delay: float, out_len: int | None = None) -> np.ndarray:
        """Delayed copy y[k] = x(k - delay) with band-limited interpolation."""
        if out_len is None:
            out_len = samples.shape[0]
        t = np.arange(out_len, dtype=np.float64) - delay
        return self.at(samples, t)


_DEFAULT_INTERP: dict[tuple[int, float], SincInterpolator] = {}


def default_interpolator(width: int = 64, beta: float = 8.0) -> SincInterpolator:
    key = (width, beta)
    if key not in _DEFAULT_INTERP:
        _DEFAULT_INTERP[key] = SincInterpolator(width=width, beta=beta)
    return _DEFAULT_INTERP[key]


# -- receive-side multirate chain -------------------------------------------


def upsample_fir(x: np.ndarray, factor: int, taps_per_phase: int = 32, beta: float = 8.0) -> np.ndarray:
    """Integer-factor polyphase FIR interpolation (zero-stuff + lowpass).

    Output keeps the input's time origin: y[k] ~= x(k / factor). The filter
    group delay is compensated, so no external alignment is needed.
    """
    n_taps = factor * taps_per_phase + 1  # odd length -> integer group delay
    h = kaiser_sinc_taps(n_taps, cutoff=1.0 / factor, beta=beta) * factor
    up = np.zeros(x.shape[0] * factor, dtype=np.complex128)
    up[::factor] = x
    y = np.convolve(up, h)
    gd = (n_taps - 1) // 2
    return y[gd:gd + x.shape[0] * factor]


def decimate_fir(x: np.ndarray, factor: int, taps_per_phase: int = 32, beta: float = 8.0) -> np.ndarray:
    """Integer-factor FIR decimation (lowpass + downsample), origin preserved."""
    n_taps = factor * taps_per_phase + 1
    h = kaiser_sinc_taps(n_taps, cutoff=1.0 / factor, beta=beta)
    y = np.convolve(x, h)
    gd = (n_taps - 1) // 2
    return y[gd:gd + x.shape[0]:factor]


def farrow_cubic(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cubic Lagrange (Farrow-structure) evaluation of x at fractional times t.

    Out-of-range positions read as zero.
    """
    x = np.asarray(x)
    t = np.asarray(t, dtype=np.float64)
    base = np.floor(t).astype(np.int64)
    mu = t - base
    pad = 3
    base = np.clip(base, -2, x.shape[0])
    padded = np.concatenate([np.zeros(pad, x.dtype), x, np.zeros(pad, x.dtype)])
    xm1 = padded[base - 1 + pad]
    x0 = padded[base + pad]
    x1 = padded[base + 1 + pad]
    x2 = padded[base + 2 + pad]
    # classic cubic Lagrange basis in mu
    c0 = x0
    c1 = x1 - xm1 / 3.0 - x0 / 2.0 - x2 / 6.0
    c2 = (xm1 + x1) / 2.0 - x0
    c3 = (x2 - xm1) / 6.0 + (x0 - x1) / 2.0
    return ((c3 * mu + c2) * mu + c1) * mu + c0


# -- oversampled OFDM bin bookkeeping ----------------------------------------


def signed_subcarrier_index(n_subcarriers: int) -> np.ndarray:
    """Map DFT bin n in [0, N) to its physical (signed) frequency index.

    An I/Q baseband transmitter centers the band on the carrier: bins above
    N/2 sit at negative frequencies. The edge bin N/2 is assigned to +N/2
    so the oversampled synthesis is unambiguous.
    """
    n = np.arange(n_subcarriers)
    return np.where(n <= n_subcarriers // 2, n, n - n_subcarriers)


def oversampled_bin_map(n_subcarriers: int, oversampling: int) -> np.ndarray:
    """Positions of the N subcarriers inside an (os*N)-point DFT."""
    return signed_subcarrier_index(n_subcarriers) % (oversampling * n_subcarriers)


def physical_order(subcarriers: np.ndarray, n: int) -> np.ndarray:
    """Permutation sorting DFT-bin indices by physical (signed) frequency.

    Any sub-sample timing shift is a phase ramp over the physical frequency,
    which in DFT order wraps mid-band; transforms and interpolators along
    the subcarrier axis must therefore traverse it in physical order.
    """
    subcarriers = np.asarray(subcarriers)
    signed = np.where(subcarriers <= n // 2, subcarriers, subcarriers - n)
    return np.argsort(signed, kind="stable")

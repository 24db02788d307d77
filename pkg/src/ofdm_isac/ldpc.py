"""Systematic LDPC encoding and normalized min-sum decoding.

Parity-check matrices are loaded from repository-bundled plain-text files
in sparse row format ("row: col col col ..."; '#' lines are comments).
The family is systematic with the information bits in the leading columns
and an accumulator-style parity part, so encoding is linear time:
s_i = sum of the information taps of check row i, p_i = s_i xor p_{i-1}.

The decoder is a vectorized normalized min-sum (default factor 0.8) with
early exit once all parity checks are satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DecodeError

_BUNDLED = {
    Fraction(1, 3): "ldpc_n24576_r13.txt",
    Fraction(2, 3): "ldpc_n24576_r23.txt",
    Fraction(5, 6): "ldpc_n24576_r56.txt",
}

_CACHE: dict[Fraction, "LdpcCode"] = {}


def parse_check_matrix(text: str) -> list[np.ndarray]:
    """Parse the sparse row format into per-row column-index arrays."""
    rows: dict[int, np.ndarray] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, tail = line.partition(":")
        cols = np.array(sorted(int(c) for c in tail.split()), dtype=np.int64)
        rows[int(head)] = cols
    if sorted(rows) != list(range(len(rows))):
        raise ValueError("check matrix rows must be numbered 0..n_rows-1")
    return [rows[i] for i in range(len(rows))]


class LdpcCode:
    def __init__(self, row_cols: list[np.ndarray]):
        self.row_cols = row_cols
        self.n_checks = len(row_cols)
        self.n = int(max(c[-1] for c in row_cols)) + 1
        self.k = self.n - self.n_checks
        if self.k <= 0:
            raise ValueError("degenerate code: no information columns")
        self._build_edges()
        self._build_encoder()

    # -- construction helpers -------------------------------------------

    def _build_edges(self):
        lens = np.array([len(c) for c in self.row_cols])
        self.edge_col = np.concatenate(self.row_cols)          # row-major edge list
        self.edge_row = np.repeat(np.arange(self.n_checks), lens)
        self.row_ptr = np.concatenate([[0], np.cumsum(lens)[:-1]])
        order = np.argsort(self.edge_col, kind="stable")
        self.col_order = order                                  # row-major -> col-major
        col_sorted = self.edge_col[order]
        first = np.concatenate([[True], col_sorted[1:] != col_sorted[:-1]])
        if first.sum() != self.n:
            raise ValueError("some columns of the check matrix are empty")
        self.col_ptr = np.flatnonzero(first)

    def _build_encoder(self):
        info = [c[c < self.k] for c in self.row_cols]
        lens = np.array([len(c) for c in info])
        if (lens == 0).any():
            raise ValueError("every check row needs at least one information tap")
        self._enc_cols = np.concatenate(info)
        self._enc_ptr = np.concatenate([[0], np.cumsum(lens)[:-1]])
        # sanity: parity part must be the accumulator structure
        for i, c in enumerate(self.row_cols):
            par = c[c >= self.k] - self.k
            expect = [i] if i == 0 else [i - 1, i]
            if list(par) != expect:
                raise ValueError("parity part is not in accumulator form")

    @classmethod
    def from_text(cls, text: str) -> "LdpcCode":
        return cls(parse_check_matrix(text))

    @classmethod
    def from_file(cls, path: str | Path) -> "LdpcCode":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def for_rate(cls, rate: Fraction) -> "LdpcCode":
        rate = Fraction(rate)
        if rate not in _BUNDLED:
            raise ValueError(f"no bundled code for rate {rate}; available: {sorted(_BUNDLED)}")
        if rate not in _CACHE:
            text = resources.files("ofdm_isac.codes").joinpath(_BUNDLED[rate]).read_text()
            code = cls.from_text(text)
            if Fraction(code.k, code.n) != rate:
                raise ValueError("bundled file rate mismatch")
            _CACHE[rate] = code
        return _CACHE[rate]

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    # -- encode / check ---------------------------------------------------

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        """Systematic encode; info length must be a multiple of k."""
        u = np.asarray(info_bits, dtype=np.uint8).ravel()
        if u.shape[0] == 0 or u.shape[0] % self.k != 0:
            raise DecodeError(f"information length {u.shape[0]} is not a multiple of k={self.k}")
        blocks = []
        for off in range(0, u.shape[0], self.k):
            ub = u[off:off + self.k]
            s = np.bitwise_xor.reduceat(ub[self._enc_cols], self._enc_ptr)
            p = np.bitwise_xor.accumulate(s)
            blocks.append(np.concatenate([ub, p]))
        return np.concatenate(blocks)

    def check(self, codeword: np.ndarray) -> bool:
        c = np.asarray(codeword, dtype=np.uint8).ravel()
        if c.shape[0] != self.n:
            raise DecodeError(f"codeword length {c.shape[0]} != n={self.n}")
        syn = np.bitwise_xor.reduceat(c[self.edge_col], self.row_ptr)
        return not syn.any()

    # -- decode ------------------------------------------------------------

    def decode(self, llr: np.ndarray, max_iter: int = 25, alpha: float = 0.8):
        """Normalized min-sum belief propagation.

        Returns (hard_bits over the full codeword, iterations, parity_ok).
        Positive LLR means bit 0. parity_ok additionally requires every
        posterior to be decisive (nonzero), so an uninformative all-zero
        input never claims success.
        """
        llr = np.asarray(llr, dtype=np.float64).ravel()
        if llr.shape[0] != self.n:
            raise DecodeError(f"LLR length {llr.shape[0]} != n={self.n}")
        r = np.zeros(self.edge_col.shape[0])
        posterior = llr.copy()
        hard = (posterior < 0).astype(np.uint8)
        it = 0
        for it in range(1, max_iter + 1):
            q = posterior[self.edge_col] - r
            absq = np.abs(q)
            sb = (q < 0).astype(np.uint8)
            min1 = np.minimum.reduceat(absq, self.row_ptr)
            min1e = min1[self.edge_row]
            at_min = absq == min1e
            n_min = np.add.reduceat(at_min.astype(np.int64), self.row_ptr)
            masked = np.where(at_min, np.inf, absq)
            min2 = np.minimum.reduceat(masked, self.row_ptr)
            mag = np.where(at_min & (n_min[self.edge_row] == 1), min2[self.edge_row], min1e)
            parity = np.bitwise_xor.reduceat(sb, self.row_ptr)
            sign = 1.0 - 2.0 * (parity[self.edge_row] ^ sb)
            r = alpha * sign * mag
            posterior = llr + np.bincount(self.edge_col, weights=r, minlength=self.n)
            hard = (posterior < 0).astype(np.uint8)
            syn = np.bitwise_xor.reduceat(hard[self.edge_col], self.row_ptr)
            if not syn.any() and np.all(posterior != 0.0):
                return hard, it, True
        return hard, it, False


@dataclass(frozen=True)
class CodedPayload:
    """Information bits together with their encoded form."""

    info_bits: np.ndarray
    coded_bits: np.ndarray
    code_rate: Fraction


def ldpc_encode(info_bits: np.ndarray, rate: Fraction, code: LdpcCode | None = None) -> CodedPayload:
    """Encode info_bits with the bundled code of the given rate."""
    rate = Fraction(rate)
    if rate == 1:
        bits = np.asarray(info_bits, dtype=np.uint8).ravel()
        return CodedPayload(bits, bits.copy(), rate)
    code = code or LdpcCode.for_rate(rate)
    coded = code.encode(info_bits)
    return CodedPayload(np.asarray(info_bits, dtype=np.uint8).ravel(), coded, rate)

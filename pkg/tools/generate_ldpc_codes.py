#!/usr/bin/env python3
"""Generate the bundled LDPC parity-check matrix files.

Construction: systematic H = [H_u | H_p] with a quasi-cyclic information
part (circulant blocks of size z, column degree 3, block rows chosen
round-robin so every parity row sees information bits) and a bitwise
dual-diagonal accumulator parity part, which gives linear-time encoding
with the error-propagation behavior of generator-based re-encoding (a
single flipped information bit disturbs a long run of parity bits).

Shifts are drawn from a fixed-seed generator with greedy rejection of
length-4 cycles between circulant pairs. Output format, one line per
check row: "row: col col col ...". Deterministic: rerunning reproduces
the committed files bit for bit.
"""

import sys
from pathlib import Path

import numpy as np

Z = 1024
N_BLOCKS = 24  # total block-columns -> n = 24576 for every rate

RATES = {
    # name: (k_blocks, parity_blocks)
    "r13": (8, 16),
    "r23": (16, 8),
    "r56": (20, 4),
}


def build_circulants(k_b: int, p_b: int, rng: np.random.Generator):
    """Choose (block_row, shift) entries, 3 per info block-column."""
    used_diffs: dict[tuple[int, int], set[int]] = {}
    placements = []
    for j in range(k_b):
        rows = [(3 * j) % p_b, (3 * j + 1) % p_b, (3 * j + 2) % p_b]
        for attempt in range(1000):
            shifts = rng.integers(0, Z, size=3)
            ok = True
            for a in range(3):
                for b in range(a + 1, 3):
                    key = (min(rows[a], rows[b]), max(rows[a], rows[b]))
                    d = int(shifts[a] - shifts[b]) % Z if rows[a] < rows[b] \
                        else int(shifts[b] - shifts[a]) % Z
                    if d in used_diffs.get(key, set()):
                        ok = False
            if ok:
                for a in range(3):
                    for b in range(a + 1, 3):
                        key = (min(rows[a], rows[b]), max(rows[a], rows[b]))
                        d = int(shifts[a] - shifts[b]) % Z if rows[a] < rows[b] \
                            else int(shifts[b] - shifts[a]) % Z
                        used_diffs.setdefault(key, set()).add(d)
                placements.append((j, rows, [int(s) for s in shifts]))
                break
        else:
            raise RuntimeError("could not place circulant without a 4-cycle")
    return placements


def build_rows(k_b: int, p_b: int, rng: np.random.Generator):
    k = k_b * Z
    n_rows = p_b * Z
    rows = [[] for _ in range(n_rows)]
    for j, blks, shifts in build_circulants(k_b, p_b, rng):
        for br, sigma in zip(blks, shifts):
            t = np.arange(Z)
            r = br * Z + t
            c = j * Z + (t + sigma) % Z
            for ri, ci in zip(r, c):
                rows[ri].append(int(ci))
    # bitwise accumulator: row i checks p_i and p_{i-1}
    for i in range(n_rows):
        if i > 0:
            rows[i].append(k + i - 1)
        rows[i].append(k + i)
    return [sorted(r) for r in rows]


def main(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (k_b, p_b) in RATES.items():
        rng = np.random.default_rng(20240000 + k_b * 100 + p_b)
        rows = build_rows(k_b, p_b, rng)
        k = k_b * Z
        n = N_BLOCKS * Z
        path = out_dir / f"ldpc_n{n}_{name}.txt"
        with path.open("w") as fh:
            fh.write(f"# systematic LDPC parity-check matrix: {len(rows)} check rows, "
                     f"{n} columns, information bits in columns 0..{k - 1}\n")
            fh.write("# format: 'row: col col col ...'\n")
            for i, cols in enumerate(rows):
                fh.write(f"{i}: " + " ".join(str(c) for c in cols) + "\n")
        print(f"wrote {path} ({path.stat().st_size / 1e6:.2f} MB)")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parents[1] / "src" / "ofdm_isac" / "codes"
    main(target)

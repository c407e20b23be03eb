"""Traffic of the two-phase 1D-to-2D redistribution against gather-scatter.

Sweeps grid shapes and column-count distributions and prints one CSV row
per configuration with total and peak per-rank bytes for both methods.
"""

import argparse

import numpy as np

from bandslice import Irregular1DLayout, ProcessGrid, naive_redistribute_oracle, redistribute_1d_to_2d

DISTRIBUTIONS = ("balanced", "random", "skewed-first", "first-rank-only")


def counts_for(kind, size, nev, rng):
    if kind == "balanced":
        return np.array([len(c) for c in np.array_split(np.arange(nev), size)])
    if kind == "random":
        cuts = np.sort(rng.integers(0, nev + 1, size - 1))
        return np.diff(np.r_[0, cuts, nev])
    if kind == "skewed-first":
        w = 0.5 ** np.arange(size)
        c = np.floor(nev * w / w.sum()).astype(int)
        c[0] += nev - c.sum()
        return c
    c = np.zeros(size, dtype=int)
    c[0] = nev
    return c


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--nev", type=int, default=128)
    ap.add_argument("--nb", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print("grid,distribution,two_phase_bytes,gather_scatter_bytes,ratio,two_phase_peak,gather_scatter_peak")
    for p, q in [(2, 2), (2, 4), (4, 2), (4, 4), (8, 8), (1, 8), (8, 1)]:
        grid = ProcessGrid(p, q)
        for kind in DISTRIBUTIONS:
            counts = counts_for(kind, grid.size, args.nev, rng)
            X = rng.standard_normal((args.n, int(counts.sum())))
            X1 = Irregular1DLayout.from_global(X, counts)
            B, fast = redistribute_1d_to_2d(X1, args.nb, grid)
            ref, slow = naive_redistribute_oracle(X1, args.nb, grid)
            assert np.array_equal(B.to_global(), ref.to_global())
            fp = max(ph.max_rank_bytes for ph in fast.phases)
            sp = max(ph.max_rank_bytes for ph in slow.phases)
            ratio = fast.total_bytes / max(slow.total_bytes, 1)
            print(f"{p}x{q},{kind},{fast.total_bytes},{slow.total_bytes},{ratio:.3f},{fp},{sp}")


if __name__ == "__main__":
    main()

"""Show where 1D k-means places slice boundaries on a clustered spectrum.

Prints the planted cluster ranges, the returned slice boundaries and the
per-iteration operation counts divided by ``n + k``.
"""

import argparse

import numpy as np

from bandslice.partition import OpCounter, kmeans1d


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clusters", type=int, default=8)
    ap.add_argument("--size", type=int, default=32, help="mean points per cluster")
    ap.add_argument("--gap-ratio", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    width = 1e-3
    sizes = rng.integers(1, 2 * args.size, args.clusters)
    centers = np.cumsum(rng.uniform(1.0, 2.0, args.clusters) * args.gap_ratio * width + width)
    v = np.sort(np.concatenate([c + rng.uniform(0, width, s) for c, s in zip(centers, sizes)]))

    counter = OpCounter()
    part = kmeans1d(v, args.clusters, counter=counter)
    print(f"n={v.size} k={args.clusters} iterations={part.iterations}")
    for c, s in zip(centers, sizes):
        print(f"cluster [{c:.4f}, {c + width:.4f}] size {s}")
    print("boundaries:", " ".join(f"{b:.4f}" for b in part.boundaries))
    print("counts:", " ".join(str(c) for c in part.counts))
    per = np.array(counter.per_iteration()) / (v.size + args.clusters)
    print("ops/(n+k) per iteration:", " ".join(f"{x:.1f}" for x in per))


if __name__ == "__main__":
    main()

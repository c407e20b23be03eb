"""Compare cold and warm-started solves over a synthesized SCF sequence.

Usage: python scripts/warm_start_scf.py --n 200 --nev 100 --steps 10 --seeds 3
"""

import argparse

import numpy as np

from bandslice import PipelineConfig, perturb_sequence, random_hermitian, solve_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--nev", type=int, default=100)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--tau", type=float, default=1e-4)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    print("seed,mode,step,mean_iterations,orth,max_residual")
    for seed in range(args.seeds):
        base = random_hermitian(args.n, seed=seed)
        mats = perturb_sequence(base, tau=args.tau, steps=args.steps, seed=seed + 1000)
        summary = {}
        for warm in (False, True):
            cfg = PipelineConfig(nev=args.nev, k=args.k, warm_start=warm, seed=seed)
            reps = solve_sequence(mats, cfg)
            mode = "warm" if warm else "cold"
            for step, r in enumerate(reps, start=1):
                print(f"{seed},{mode},{step},{r.mean_iterations:.3f},{r.accuracy.orth:.2e},{r.accuracy.max_residual:.2e}")
            summary[mode] = np.mean([r.mean_iterations for r in reps[1:]])
        print(f"# seed {seed}: steps 2..{args.steps} mean iterations cold={summary['cold']:.2f} warm={summary['warm']:.2f}")


if __name__ == "__main__":
    main()

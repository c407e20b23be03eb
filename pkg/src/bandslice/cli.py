"""Command-line front end.

Exit codes: 0 on success, 1 on a numerical failure (the message names the
stage and, where known, the slice), 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .bandsolve import SingularShiftError, inertia
from .io import MatrixFormatError, load_matrix, read_raw, read_values, write_raw, write_values
from .layout import Irregular1DLayout, ProcessGrid, naive_redistribute_oracle, redistribute_1d_to_2d
from .linalg import (
    BandedHermitian,
    BandwidthError,
    EigenPairs,
    NotHermitianError,
    accuracy_report,
    band_reduce,
    perturb_sequence,
    random_hermitian,
)
from .partition import BoundsError, ValidationError, kmeans1d
from .pipeline import PipelineConfig, PipelineError, solve_one, solve_sequence

PROG = "bandslice"


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit code 2."""


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "grid":
            out["p"], out["q"] = _grid(value)
            continue
        if key not in types:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(types[key], value, f"{path}:{lineno}")
    return out


def _convert(typ, value, where):
    try:
        if typ in (bool, "bool"):
            return _bool(value)
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
        return value
    except (ValueError, UsageError):
        raise UsageError(f"{where}: bad value {value!r}") from None


def _grid(text):
    try:
        p, q = (int(x) for x in str(text).lower().split("x"))
    except ValueError:
        raise UsageError(f"grid must look like PxQ, got {text!r}") from None
    if p < 1 or q < 1:
        raise UsageError("grid dimensions must be positive")
    return p, q


def _add_config_flags(ap):
    g = ap.add_argument_group("pipeline configuration (overrides --config)")
    g.add_argument("--config", help="key = value file with PipelineConfig fields")
    g.add_argument("--nev", type=int)
    g.add_argument("--k", type=int, help="number of spectrum slices")
    g.add_argument("--n-bw", dest="n_bw", type=int, help="semibandwidth")
    g.add_argument("--n-b", dest="n_b", type=int, help="block-cyclic block size")
    g.add_argument("--n-e", dest="n_e", type=int, help="quadrature nodes per contour")
    g.add_argument("--tol", type=float)
    g.add_argument("--grid", help="simulated process grid, e.g. 2x2")
    g.add_argument("--seed", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--first", type=int, help="index of the first wanted eigenvalue (experimental)")
    g.add_argument("--workers", type=int)
    g.add_argument("--warm-start", dest="warm_start", action="store_true", default=None)
    g.add_argument("--no-warm-start", dest="warm_start", action="store_false")
    g.add_argument("--no-grid", dest="use_grid", action="store_false", default=None, help="bypass the simulated grid")


def build_config(args) -> PipelineConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in PipelineConfig.keys():
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "grid", None):
        values["p"], values["q"] = _grid(args.grid)
    return PipelineConfig(**values)


def _load(path):
    try:
        return load_matrix(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except (MatrixFormatError, NotHermitianError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _print_summary(rep, out):
    acc = rep.accuracy
    print(
        f"# orth={acc.orth:.3e} max_residual={acc.max_residual:.3e} "
        f"max_raw_residual={acc.max_raw_residual:.3e} slices={rep.partition.k} "
        f"iterations={rep.iterations} recovery_rounds={rep.recovery_rounds}",
        file=out,
    )


def cmd_solve(args, out):
    A = _load(args.matrix)
    cfg = build_config(args)
    if cfg.nev > A.n:
        raise UsageError(f"--nev {cfg.nev} exceeds the matrix order {A.n}")
    rep = solve_one(A, cfg)
    for v in rep.pairs.values:
        print(f"{float(v)!r}", file=out)
    _print_summary(rep, out)
    if args.values:
        write_values(args.values, rep.pairs.values)
    if args.vectors:
        write_raw(args.vectors, rep.pairs.vectors)
    return 0


def cmd_scf(args, out):
    cfg = build_config(args)
    if args.synthesize:
        steps, tau, seed = args.synthesize
        try:
            steps, tau, seed = int(steps), float(tau), int(seed)
        except ValueError:
            raise UsageError("--synthesize needs STEPS TAU SEED") from None
        base = random_hermitian(args.n, seed=seed, is_real=args.real)
        mats = perturb_sequence(base, tau=tau, steps=steps, seed=seed + 1)
    elif args.matrices:
        mats = [_load(p) for p in args.matrices]
    else:
        raise UsageError("scf needs matrix files or --synthesize STEPS TAU SEED")
    reps = solve_sequence(mats, cfg)
    print("step,warm,slices,mean_iterations,iterations,orth,max_residual,recovery_rounds", file=out)
    for i, r in enumerate(reps, start=1):
        its = " ".join(str(x) for x in r.iterations)
        print(
            f"{i},{int(r.warm)},{r.partition.k},{r.mean_iterations:.3f},{its},"
            f"{r.accuracy.orth:.3e},{r.accuracy.max_residual:.3e},{r.recovery_rounds}",
            file=out,
        )
    return 0


def cmd_partition(args, out):
    try:
        values = read_values(args.values)
    except OSError as exc:
        raise UsageError(f"cannot read {args.values}: {exc}") from None
    except MatrixFormatError as exc:
        raise UsageError(f"{args.values}: {exc}") from None
    if values.size == 0:
        raise UsageError("value file is empty")
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    part = kmeans1d(values, min(args.k, values.size), lower=args.lower, upper=args.upper)
    print("slice,lower,upper,count", file=out)
    for i, ((a, b), c) in enumerate(zip(part.slices(), part.counts)):
        print(f"{i},{float(a)!r},{float(b)!r},{int(c)}", file=out)
    if part.warning:
        print(f"# warning: {part.warning}", file=out)
    return 0


def _natural_bandwidth(M):
    nz = np.argwhere(M != 0)
    return int(np.max(np.abs(nz[:, 0] - nz[:, 1]))) if nz.size else 0


def cmd_inertia(args, out):
    A = _load(args.matrix)
    natural = _natural_bandwidth(A.data)
    if args.n_bw is None or args.n_bw >= natural:
        D = BandedHermitian.from_dense(A.data, natural)
    else:
        try:
            D, _ = band_reduce(A, args.n_bw)
        except BandwidthError as exc:
            raise UsageError(str(exc)) from None
    res = inertia(D, args.shift)
    print(f"{res.n_neg} below", file=out)
    if args.verbose:
        print(f"# n_neg={res.n_neg} n_zero={res.n_zero} n_pos={res.n_pos} shift={res.shift!r} perturbed={res.perturbed}", file=out)
    return 0


def cmd_redistribute_bench(args, out):
    p, q = _grid(args.grid)
    grid = ProcessGrid(p, q)
    rng = np.random.default_rng(args.seed)
    if args.counts:
        try:
            counts = np.array([int(c) for c in args.counts.split(",")])
        except ValueError:
            raise UsageError("--counts must be comma-separated integers") from None
        if counts.size != grid.size:
            raise UsageError(f"--counts needs {grid.size} entries for a {p}x{q} grid")
    else:
        counts = np.diff(np.sort(np.r_[0, rng.integers(0, args.nev + 1, grid.size - 1), args.nev]))
    X = rng.standard_normal((args.n, int(counts.sum())))
    X1 = Irregular1DLayout.from_global(X, counts)
    B, fast = redistribute_1d_to_2d(X1, args.nb, grid)
    ref, slow = naive_redistribute_oracle(X1, args.nb, grid)
    if not np.array_equal(B.to_global(), ref.to_global()):
        raise PipelineError("redistribute", "two-phase result differs from the gather-scatter oracle")
    text = fast.to_csv(label="two-phase") + slow.to_csv(label="gather-scatter").split("\n", 1)[1]
    summary = (
        f"# total two-phase={fast.total_bytes} gather-scatter={slow.total_bytes} "
        f"max-rank two-phase={max(ph.max_rank_bytes for ph in fast.phases)} "
        f"gather-scatter={max(ph.max_rank_bytes for ph in slow.phases)}\n"
    )
    if args.out:
        Path(args.out).write_text(text)
    out.write(text + summary)
    return 0


def cmd_report(args, out):
    A = _load(args.matrix)
    try:
        values = read_values(args.values)
        X = read_raw(args.vectors)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except MatrixFormatError as exc:
        raise UsageError(str(exc)) from None
    if X.shape != (A.n, values.size):
        raise UsageError(f"vectors are {X.shape}, expected ({A.n}, {values.size})")
    acc = accuracy_report(A, EigenPairs(values, X))
    print("index,eigenvalue,residual", file=out)
    for i, (v, r) in enumerate(zip(values, acc.per_pair_residuals)):
        print(f"{i},{float(v)!r},{float(r):.3e}", file=out)
    print(f"# orth={acc.orth:.3e} max_residual={acc.max_residual:.3e} max_raw_residual={acc.max_raw_residual:.3e}", file=out)
    return 0


def make_parser():
    ap = argparse.ArgumentParser(prog=PROG, description="Spectrum-slicing Hermitian eigensolver")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="smallest eigenpairs of one matrix")
    sp.add_argument("matrix", help="Matrix Market or raw-binary file")
    sp.add_argument("--values", help="write eigenvalues here, one per line")
    sp.add_argument("--vectors", help="write eigenvectors here in raw-binary form")
    _add_config_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("scf", help="warm-started sequence of related matrices")
    sp.add_argument("matrices", nargs="*")
    sp.add_argument("--synthesize", nargs=3, metavar=("STEPS", "TAU", "SEED"))
    sp.add_argument("--n", type=int, default=200, help="order of synthesized matrices")
    sp.add_argument("--real", action="store_true", help="synthesize real symmetric matrices")
    _add_config_flags(sp)
    sp.set_defaults(func=cmd_scf)

    sp = sub.add_parser("partition", help="slice boundaries for a list of eigenvalues")
    sp.add_argument("values")
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--lower", type=float)
    sp.add_argument("--upper", type=float)
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("inertia", help="count eigenvalues below a shift")
    sp.add_argument("matrix")
    sp.add_argument("--shift", type=float, required=True)
    sp.add_argument("--n-bw", dest="n_bw", type=int, help="band-reduce to this width first")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_inertia)

    sp = sub.add_parser("redistribute-bench", help="traffic of 1D->2D redistribution versus gather-scatter")
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--nev", type=int, default=128)
    sp.add_argument("--nb", type=int, default=64)
    sp.add_argument("--grid", default="2x2")
    sp.add_argument("--counts", help="comma-separated column counts per rank")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write the CSV here as well")
    sp.set_defaults(func=cmd_redistribute_bench)

    sp = sub.add_parser("report", help="accuracy table for stored eigenpairs")
    sp.add_argument("matrix")
    sp.add_argument("--values", required=True)
    sp.add_argument("--vectors", required=True)
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=err)
        return 2
    except PipelineError as exc:
        print(f"{PROG}: numerical failure: {exc}", file=err)
        return 1
    except (ValidationError, BoundsError, SingularShiftError, np.linalg.LinAlgError) as exc:
        print(f"{PROG}: numerical failure: stage={type(exc).__name__}: {exc}", file=err)
        return 1
    except ValueError as exc:
        print(f"{PROG}: error: {exc}", file=err)
        return 2


if __name__ == "__main__":
    sys.exit(main())

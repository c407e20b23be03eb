"""Three-stage solver: band reduction, sliced contour solves, backtransform."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .bandsolve import SingularShiftError, inertia
from .feast import ContourFilter, SliceSolveConfig, feast_slice, make_contour
from .layout import (
    BlockCyclicLayout,
    Irregular1DLayout,
    ProcessGrid,
    gather_band_to_compact,
    redistribute_1d_to_2d,
)
from .linalg import (
    BandedHermitian,
    BandReductionTransform,
    EigenPairs,
    accuracy_report,
    backtransform,
    band_reduce,
)
from .partition import (
    BoundConfig,
    BoundsError,
    ValidationError,
    compute_bounds,
    inertia_bisection,
    kmeans1d,
    validate_counts,
    window_by_inertia,
)

WORKERS_ENV = "BANDSLICE_WORKERS"


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class PipelineConfig:
    nev: int = 10
    k: int = 4
    n_bw: int = 64
    n_b: int = 64
    n_e: int = 16
    tol: float = 1e-11
    p: int = 2
    q: int = 2
    warm_start: bool = True
    seed: int = 0
    tau: float = 1e-4
    alpha: float = 1e-3
    beta: float = 1e-3
    max_iter: int = 50
    use_grid: bool = True
    first: int = 0
    workers: int = field(default_factory=default_workers)
    reduced_method: str = "lapack"

    def validate(self, n):
        if not 1 <= self.nev <= n - self.first:
            raise ValueError(f"need 1 <= nev <= {n - self.first}, got nev={self.nev}")
        if self.k < 1:
            raise ValueError("need at least one slice")
        if self.n_bw < 1 or self.n_b < 1:
            raise ValueError("bandwidth and block size must be positive")
        if self.first < 0:
            raise ValueError("first must be nonnegative")

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class ScfState:
    """What one SCF step hands to the next: banded-stage eigenpairs."""

    step: int
    values: np.ndarray
    vectors: np.ndarray


@dataclass
class StepReport:
    pairs: EigenPairs
    accuracy: object
    state: ScfState
    partition: object
    slices: list
    iterations: list
    warm: bool
    recovery_rounds: int
    traffic: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def mean_iterations(self):
        return float(np.mean(self.iterations)) if self.iterations else 0.0


class PipelineError(RuntimeError):
    """Numerical failure in a named pipeline stage."""

    def __init__(self, stage, msg, slice_index=None):
        where = f"stage={stage}" + (f" slice={slice_index}" if slice_index is not None else "")
        super().__init__(f"{where}: {msg}")
        self.stage = stage
        self.slice_index = slice_index


def _reduce(A, n_bw):
    n = A.n
    w = min(n_bw, n - 1)
    if w < 1:
        return BandedHermitian.from_dense(A.data, 0), BandReductionTransform(n, 0)
    return band_reduce(A, w)


def _distribute_band(D, cfg, grid):
    """Scatter ``D`` block-cyclically, then gather the compact band on every rank."""
    Dl = BlockCyclicLayout.from_global(D.to_dense(), cfg.n_b, grid)
    bands, traffic = gather_band_to_compact(Dl, D.n_bw)
    for b in bands[1:]:
        if not np.array_equal(b, bands[0]):
            raise PipelineError("band-gather", "ranks disagree on the compact band")
    return BandedHermitian(bands[0]), traffic


def _slice_seed(cfg, step, index, attempt):
    return np.random.SeedSequence([cfg.seed, step, index, attempt])


def solve_one(A, cfg: PipelineConfig, state: ScfState | None = None) -> StepReport:
    """Compute the ``nev`` smallest eigenpairs (from index ``cfg.first``) of ``A``."""
    n = A.n
    cfg.validate(n)
    step = 0 if state is None else state.step
    timings = {}
    traffic = {}
    grid = ProcessGrid(cfg.p, cfg.q)

    t0 = time.perf_counter()
    D, T = _reduce(A, cfg.n_bw)
    timings["band_reduce"] = time.perf_counter() - t0

    if cfg.use_grid:
        D, traffic["band_gather"] = _distribute_band(D, cfg, grid)

    t0 = time.perf_counter()
    try:
        part, warm, priors, prior_vecs = _partition(D, cfg, state)
    except BoundsError as exc:
        raise PipelineError("partition", str(exc)) from exc
    below0 = inertia(D, part.boundaries[0]).n_neg
    expected_total = inertia(D, part.boundaries[-1]).n_neg - below0
    timings["partition"] = time.perf_counter() - t0

    filters = {}

    def run_slice(i, m_i, m0=None, X0=None, attempt=0):
        a, b = part.boundaries[i], part.boundaries[i + 1]
        scfg = SliceSolveConfig(
            m_i=int(m_i),
            m0=m0,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            X0=X0,
            seed=_slice_seed(cfg, step, i, attempt),
            reduced_method=cfg.reduced_method,
        )
        try:
            if i not in filters:
                filters[i] = ContourFilter(D, make_contour(a, b, cfg.n_e), cfg.workers)
            return feast_slice(D, filters[i].q, scfg, filt=filters[i])
        except (SingularShiftError, np.linalg.LinAlgError) as exc:
            raise PipelineError("slice-solve", str(exc), slice_index=i) from exc

    def first_attempt(i):
        X0 = None
        if warm:
            a, b = part.boundaries[i], part.boundaries[i + 1]
            sel = (priors >= a) & (priors < b)
            X0 = prior_vecs[:, sel] if sel.any() else None
        return run_slice(i, part.counts[i], X0=X0)

    t0 = time.perf_counter()
    if cfg.workers > 1 and part.k > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(first_attempt, range(part.k)))
    else:
        results = [first_attempt(i) for i in range(part.k)]
    iterations = [r.iterations for r in results]

    attempts = {}

    def rerun(i, m, m0):
        attempts[i] = attempts.get(i, 0) + 1
        prev = results[i].pairs.vectors
        return run_slice(i, m, m0=m0, X0=prev if prev.shape[1] else None, attempt=attempts[i])

    try:
        outcome = validate_counts(results, cfg.nev, D, part, rerun, expected_total=expected_total)
    except ValidationError as exc:
        first_bad = exc.deficient[0][0] if exc.deficient else None
        raise PipelineError("validation", str(exc), slice_index=first_bad) from exc
    timings["slices"] = time.perf_counter() - t0

    hat = outcome.pairs
    if hat.count < cfg.nev:
        raise PipelineError("validation", f"only {hat.count} of {cfg.nev} pairs in the window")

    t0 = time.perf_counter()
    if cfg.use_grid:
        X2d, traffic["redistribute"] = _to_block_cyclic(hat, outcome.results, cfg, grid)
        tilde = EigenPairs(hat.values, X2d.to_global())
    else:
        tilde = hat
    pairs = backtransform(T, tilde)
    timings["backtransform"] = time.perf_counter() - t0

    report = accuracy_report(A, pairs)
    new_state = ScfState(step + 1, hat.values.copy(), hat.vectors.copy())
    return StepReport(
        pairs=pairs,
        accuracy=report,
        state=new_state,
        partition=part,
        slices=outcome.results,
        iterations=iterations,
        warm=warm,
        recovery_rounds=outcome.rounds,
        traffic=traffic,
        timings=timings,
    )


def _partition(D, cfg, state):
    """Slice boundaries: k-means on prior values when warm, inertia bisection when cold."""
    warm = cfg.warm_start and state is not None and state.values.size >= cfg.first + cfg.nev
    if warm:
        try:
            b0, bk = compute_bounds(state.values, cfg.nev, D, BoundConfig(cfg.alpha, cfg.beta), cfg.first)
        except BoundsError:
            # the priors drifted too far; partition from scratch instead
            warm = False
    if not warm:
        b0, bk = window_by_inertia(D, cfg.nev, cfg.first)
        return inertia_bisection(D, b0, bk, cfg.nev, cfg.k), False, None, None
    inside = (state.values >= b0) & (state.values < bk)
    priors = state.values[inside]
    part = kmeans1d(priors, min(cfg.k, priors.size), lower=b0, upper=bk)
    return part, True, priors, state.vectors[:, inside]


def _to_block_cyclic(hat, results, cfg, grid):
    """Lay the kept eigenvectors out as an irregular 1D BDD, one slice group per rank."""
    found = np.array([r.m_found for r in results], dtype=np.int64)
    # slices are ascending, so the kept nev columns are a prefix of the slice order
    kept = np.minimum(found, np.maximum(hat.count - np.concatenate([[0], np.cumsum(found)[:-1]]), 0))
    groups = np.array_split(np.arange(kept.size), grid.size)
    counts = np.array([kept[g].sum() for g in groups], dtype=np.int64)
    X1 = Irregular1DLayout.from_global(hat.vectors, counts)
    return redistribute_1d_to_2d(X1, cfg.n_b, grid)


def solve_sequence(matrices, cfg: PipelineConfig):
    """Solve correlated problems in order, warm-starting each from the previous one."""
    reports = []
    state = None
    for A in matrices:
        rep = solve_one(A, cfg, state if cfg.warm_start else None)
        if not cfg.warm_start:
            rep.state.step = len(reports) + 1
        state = rep.state
        reports.append(rep)
    return reports

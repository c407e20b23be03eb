"""Spectrum partitioning, slice bounds and count validation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bandsolve import inertia
from .feast import subspace_size
from .linalg import EigenPairs

CLUSTER_GAP = 1e-7
# two prefix-sum SSE evaluations, an add and a comparison per split candidate
SPLIT_OPS = 14


class BoundsError(RuntimeError):
    """Bound adjustment ran out of attempts."""


class ValidationError(RuntimeError):
    """Slices still miss eigenvalues after the recovery rounds."""

    def __init__(self, msg, deficient):
        super().__init__(msg)
        self.deficient = deficient


@dataclass
class OpCounter:
    """Tally of arithmetic operations and comparisons, per k-means iteration."""

    flops: list = field(default_factory=list)
    comparisons: list = field(default_factory=list)

    def per_iteration(self):
        return [f + c for f, c in zip(self.flops, self.comparisons)]


@dataclass
class SpectrumPartition:
    """Slices ``[b_i, b_{i+1})`` with expected counts ``m_i``."""

    boundaries: np.ndarray
    counts: np.ndarray
    source: str
    warning: str | None = None
    iterations: int = 0

    def __post_init__(self):
        self.boundaries = np.asarray(self.boundaries, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.boundaries.size != self.counts.size + 1:
            raise ValueError("need exactly one more boundary than counts")
        if np.any(np.diff(self.boundaries) <= 0):
            raise ValueError(f"boundaries must be strictly increasing: {self.boundaries}")

    @property
    def k(self):
        return self.counts.size

    def slices(self):
        return list(zip(self.boundaries[:-1], self.boundaries[1:]))


@dataclass(frozen=True)
class BoundConfig:
    alpha: float = 1e-3
    beta: float = 1e-3
    max_attempts: int = 8

    def __post_init__(self):
        if abs(self.alpha) > 0.1 or abs(self.beta) > 0.1:
            raise ValueError("|alpha| and |beta| are capped at 0.1")


def balanced_splits(n, k):
    """Split indices for ``k`` contiguous groups whose sizes differ by at most one."""
    base, extra = divmod(n, k)
    sizes = [base + 1] * extra + [base] * (k - extra)
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)


class _Moments:
    """Prefix sums giving O(1) size/sum/SSE for any contiguous group."""

    def __init__(self, v):
        self.v = v
        self.s1 = np.concatenate([[0.0], np.cumsum(v)])
        self.s2 = np.concatenate([[0.0], np.cumsum(v * v)])

    def sse(self, lo, hi):
        cnt = hi - lo
        s1 = self.s1[hi] - self.s1[lo]
        return np.where(cnt > 0, self.s2[hi] - self.s2[lo] - s1 * s1 / np.maximum(cnt, 1), 0.0)

    def best_split(self, lo, hi):
        """``(gain, t)``: SSE reduction of the best 2-split of ``[lo, hi)``."""
        if hi - lo < 2:
            return 0.0, lo
        t = np.arange(lo + 1, hi)
        total = self.sse(lo, hi)
        parts = self.sse(lo, t) + self.sse(t, hi)
        j = int(np.argmin(parts))
        return float(total - parts[j]), int(t[j])


def _lloyd_pass(v, splits, mom):
    """One Lloyd update of contiguous groups; returns (new splits, flops, comparisons)."""
    k = splits.size - 1
    sizes = np.diff(splits)
    cent = (mom.s1[splits[1:]] - mom.s1[splits[:-1]]) / np.maximum(sizes, 1)
    flops = 2 * k
    cmp = 0
    new = splits.copy()
    for g in range(1, k):
        mid = 0.5 * (cent[g - 1] + cent[g])
        flops += 2
        s = splits[g]
        lo, hi = new[g - 1], splits[g + 1]
        while s > lo and v[s - 1] > mid:
            s -= 1
            cmp += 1
        while s < hi and v[s] < mid:
            s += 1
            cmp += 1
        cmp += 2
        new[g] = s
    return new, flops, cmp


def _reseed_empty(splits, mom):
    """Replace empty groups by splitting the group with the best 2-split gain.

    Gains are cached per segment, so a pass touches each point O(1) times
    beyond the segments created by its own splits.
    """
    flops = 0
    cache = {}
    while True:
        sizes = np.diff(splits)
        empty = np.flatnonzero(sizes == 0)
        if not empty.size:
            return splits, flops
        gains = []
        for lo, hi in zip(splits[:-1], splits[1:]):
            key = (int(lo), int(hi))
            if key not in cache:
                cache[key] = mom.best_split(*key)
                flops += SPLIT_OPS * (key[1] - key[0])
            gains.append(cache[key])
        g = int(np.argmax([gn for gn, _ in gains]))
        if gains[g][0] <= 0:
            return splits, flops
        keep = np.delete(splits, empty[0] + 1)
        splits = np.sort(np.append(keep, gains[g][1]))


def _split_merge(splits, mom):
    """Merge two adjacent groups and split another if that lowers the total SSE.

    Returns the new splits (or ``None`` when no move helps) and the flop count.
    """
    k = splits.size - 1
    if k < 3:
        return None, 0
    lo, hi = splits[:-1], splits[1:]
    sse = mom.sse(lo, hi)
    merge_cost = mom.sse(lo[:-1], hi[1:]) - sse[:-1] - sse[1:]
    gains = [mom.best_split(a, b) for a, b in zip(lo, hi)]
    flops = SPLIT_OPS * mom.v.size + 14 * k
    best = None
    for g, (gain, t) in enumerate(gains):
        # merging a pair that contains g would only move one boundary
        for m in np.argsort(merge_cost):
            if m != g and m + 1 != g:
                if gain - merge_cost[m] > 1e-12 * max(sse.sum(), 1e-300):
                    if best is None or gain - merge_cost[m] > best[0]:
                        best = (gain - merge_cost[m], m, t)
                break
    if best is None:
        return None, flops
    _, m, t = best
    keep = np.delete(splits, m + 1)
    return np.sort(np.append(keep, t)), flops


def _kmeans_splits(v, k, max_iter, counter):
    mom = _Moments(v)
    splits = balanced_splits(v.size, k)
    it = 0
    while it < max_iter:
        it += 1
        new, flops, cmp = _lloyd_pass(v, splits, mom)
        new, f2 = _reseed_empty(new, mom)
        flops += f2
        if np.array_equal(new, splits):
            # Lloyd is stuck; try to escape with a split-merge move
            moved, f3 = _split_merge(splits, mom)
            flops += f3
            if moved is not None:
                new = moved
        if counter is not None:
            counter.flops.append(flops)
            counter.comparisons.append(cmp)
        if np.array_equal(new, splits):
            break
        splits = new
    return splits, it


def _separate_clusters(v, splits, gap):
    """Move splits that cut through a ``< gap`` cluster to the nearest wide gap.

    Returns the surviving splits; a split with no wide gap between its
    neighbours is dropped, merging the two slices.
    """
    diffs = np.diff(v)
    out = [splits[0]]
    for g in range(1, splits.size - 1):
        s = splits[g]
        if s <= out[-1] or s >= splits[-1]:
            # empty group that reseeding could not fill
            continue
        if diffs[s - 1] >= gap:
            out.append(s)
            continue
        lo, hi = out[-1] + 1, splits[g + 1] - 1
        cand = np.flatnonzero(diffs[lo - 1 : hi] >= gap) + lo
        if cand.size:
            out.append(int(cand[np.argmin(np.abs(cand - s))]))
    out.append(splits[-1])
    return np.array(out, dtype=np.intp)


def kmeans1d(values, k, max_iter=100, lower=None, upper=None, counter=None, gap=CLUSTER_GAP):
    """Partition sorted values into ``k`` contiguous groups by 1D Lloyd iterations.

    Groups start from a balanced contiguous split.  Each iteration computes
    the ``k`` centroids from prefix sums and moves every group boundary
    toward the midpoint of its two neighbouring centroids, touching only the
    points that change group.  Slice boundaries sit at the midpoint between
    the extremes of adjacent groups.  Afterwards, no boundary is allowed to
    separate two values closer than ``gap``.

    ``lower``/``upper`` set the outer boundaries; by default they are the
    extreme values padded by half the mean spacing.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a nonempty 1D array of values")
    if np.any(np.diff(v) < 0):
        raise ValueError("values must be sorted ascending")
    if not 1 <= k <= v.size:
        raise ValueError(f"need 1 <= k <= {v.size}, got {k}")
    splits, iters = _kmeans_splits(v, k, max_iter, counter)
    splits = _separate_clusters(v, splits, gap)
    warning = None
    if splits.size - 1 < k:
        warning = f"only {splits.size - 1} separable groups for k={k}"
        warnings.warn(warning, stacklevel=2)
    inner = 0.5 * (v[splits[1:-1] - 1] + v[splits[1:-1]])
    span = v[-1] - v[0]
    pad = 0.5 * span / max(v.size - 1, 1) if span > 0 else max(abs(v[0]), 1.0) * 1e-3
    lo = v[0] - pad if lower is None else lower
    hi = v[-1] + pad if upper is None else upper
    bounds = np.concatenate([[lo], inner, [hi]])
    counts = np.diff(splits)
    if lower is not None or upper is not None:
        counts = _count_in(v, bounds)
    return SpectrumPartition(bounds, counts, "kmeans-from-priors", warning, iters)


def _count_in(v, bounds):
    return np.diff(np.searchsorted(v, bounds, side="left"))


def _grow(x, rel, scale, up):
    step = rel * (abs(x) if x != 0 else scale)
    return x + step if up else x - step


def compute_bounds(prior_values, nev, D, cfg=BoundConfig(), first=0):
    """Outer bounds ``(b_0, b_k)`` enclosing eigenvalues ``first .. first+nev-1`` of ``D``.

    ``b_k = (1 + alpha) d_nev`` and ``b_0 = (1 + beta) d_1`` with the signs of
    alpha/beta chosen so the bounds move outward; both are widened
    geometrically until inertia confirms the enclosure.  ``first > 0``
    targets an interior window (experimental).
    """
    d = np.asarray(prior_values, dtype=np.float64)
    if d.size < first + nev:
        raise ValueError(f"need at least {first + nev} prior values, got {d.size}")
    scale = max(D.fro_norm() / math.sqrt(D.n), np.finfo(float).tiny)

    def search(x0, rel, up, ok):
        x = _grow(x0, abs(rel), scale, up)
        for _ in range(cfg.max_attempts + 1):
            if ok(inertia(D, x).n_neg):
                return x
            rel = max(2 * abs(rel), 1e-3)
            x = _grow(x0, rel, scale, up)
        raise BoundsError(
            f"bound near {x0:.6g} not found after {cfg.max_attempts} widenings; "
            "fall back to the full Gershgorin interval"
        )

    bk = search(d[first + nev - 1], cfg.alpha, True, lambda c: c >= first + nev)
    b0 = search(d[first], cfg.beta, False, lambda c: c <= first)
    return b0, bk


def gershgorin_bounds(D):
    lo, hi = D.gershgorin()
    pad = 1e-3 * max(hi - lo, 1.0)
    return lo - pad, hi + pad


def _gap_bracket(D, lo, hi, t, tol, refine=5):
    """Bracket the gap between the ``t``-th and ``(t+1)``-th eigenvalues.

    Returns ``(L, R)`` with exactly ``t`` eigenvalues below both, ``L`` just
    above the ``t``-th eigenvalue and ``R`` just below the next one.  Each end
    is sharpened by ``refine`` extra bisection steps once a point inside the
    gap is known.  Requires ``count(lo) <= t < count(hi)`` or ``t == n``.
    """
    # a < L <= R < b with count(a) < t, count(L) == count(R) == t, count(b) > t
    a = b = None
    while True:
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            c = inertia(D, mid).n_neg
            if c != t:
                # unresolved cluster straddles the target count
                raise BoundsError(f"cannot separate eigenvalue {t} from {t + 1} within {tol:.3g}")
        else:
            c = inertia(D, mid).n_neg
        if c == t:
            L = R = mid
            a, b = lo, hi
            break
        if c < t:
            lo = mid
        else:
            hi = mid
    for _ in range(refine):
        if t > 0 and L - a > tol:
            m = 0.5 * (a + L)
            if inertia(D, m).n_neg == t:
                L = m
            else:
                a = m
        if t < D.n and b - R > tol:
            m = 0.5 * (R + b)
            if inertia(D, m).n_neg == t:
                R = m
            else:
                b = m
    return L, R


def window_by_inertia(D, nev, first=0):
    """Cold-start outer bounds ``(b0, bk)`` holding eigenvalues ``first .. first+nev-1``.

    Gershgorin discs give a safe bracket; inertia bisection then places each
    bound in the middle of the neighbouring spectral gap.  At the ends of
    the spectrum the bound sits half a mean eigenvalue spacing beyond the
    extreme eigenvalue.
    """
    lo, hi = gershgorin_bounds(D)
    tol = 1e-12 * (hi - lo)
    n = D.n
    Lk, Rk = _gap_bracket(D, lo, hi, first + nev, tol) if first + nev < n else (None, None)
    L0, R0 = _gap_bracket(D, lo, hi, first, tol) if first > 0 else (None, None)
    if Lk is None:
        Lk, _ = _gap_bracket(D, lo, hi + (hi - lo), n, tol)
    if R0 is None:
        _, R0 = _gap_bracket(D, lo - (hi - lo), hi, 0, tol)
    spacing = max(Lk - R0, tol) / max(nev, 1)
    b0 = 0.5 * (L0 + R0) if first > 0 else R0 - 0.5 * spacing
    bk = 0.5 * (Lk + Rk) if first + nev < n else Lk + 0.5 * spacing
    return b0, bk


def inertia_bisection(D, b0, bk, nev, k, min_width=CLUSTER_GAP):
    """Split ``[b0, bk)`` at midpoints until every slice holds at most ``1.5 ceil(nev/k)``."""
    cap = max(1, math.floor(1.5 * math.ceil(nev / k)))
    c0, ck = inertia(D, b0).n_neg, inertia(D, bk).n_neg
    bounds = [b0, bk]
    below = [c0, ck]
    i = 0
    while i < len(bounds) - 1:
        lo, hi = bounds[i], bounds[i + 1]
        if below[i + 1] - below[i] > cap and hi - lo > min_width:
            mid = 0.5 * (lo + hi)
            bounds.insert(i + 1, mid)
            below.insert(i + 1, inertia(D, mid).n_neg)
            continue
        i += 1
    return SpectrumPartition(np.array(bounds), np.diff(below), "inertia-bisection")


@dataclass
class ValidationOutcome:
    pairs: EigenPairs
    results: list
    rounds: int
    inertia_calls: int
    nev_found: int
    exact_counts: list | None = None


def _merge(results):
    vals = [r.pairs.values for r in results]
    vecs = [r.pairs.vectors for r in results]
    if not vals:
        return np.zeros(0), np.zeros((0, 0))
    v = np.concatenate(vals)
    X = np.hstack(vecs)
    order = np.argsort(v, kind="stable")
    return v[order], X[:, order]


def validate_counts(results, nev, D, partition, rerun, max_rounds=2, expected_total=None):
    """Accept the slice results or recover missing eigenpairs.

    If the slices found at least ``expected_total`` pairs (``nev`` by
    default) the smallest ``nev`` are kept.  Otherwise the exact count of
    every slice is taken from inertia at its boundaries and each slice that
    came up short (or did not converge) is re-solved through
    ``rerun(index, m_exact, m0)`` with an enlarged search space.
    """
    results = list(results)
    need = nev if expected_total is None else max(nev, expected_total)
    inertia_calls = 0
    exact = None
    rounds = 0
    while True:
        found = sum(r.m_found for r in results)
        if found >= need and all(r.converged for r in results):
            break
        if rounds == max_rounds:
            deficient = [
                (i, exact[i] if exact else None, r.m_found)
                for i, r in enumerate(results)
                if not r.converged or (exact and r.m_found < exact[i])
            ]
            detail = ", ".join(f"slice {i}: exact={e} found={f}" for i, e, f in deficient)
            raise ValidationError(f"found {found} of {need} eigenpairs after {rounds} recovery rounds ({detail})", deficient)
        if exact is None:
            below = []
            for b in partition.boundaries:
                below.append(inertia(D, b).n_neg)
                inertia_calls += 1
            exact = list(np.diff(below))
        rounds += 1
        for i, r in enumerate(results):
            if r.m_found < exact[i] or not r.converged:
                m = max(exact[i], r.m_found)
                m0 = max(subspace_size(m, D.n), min(r.m0 + 10, D.n))
                results[i] = rerun(i, m, m0)
    vals, X = _merge(results)
    return ValidationOutcome(EigenPairs(vals[:nev], X[:, :nev]), results, rounds, inertia_calls, found, exact)

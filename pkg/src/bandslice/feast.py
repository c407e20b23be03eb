"""Contour-integral subspace iteration for one slice of a banded spectrum."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bandsolve import band_lu_factor, band_solve
from .jacobi import jacobi_eigh
from .linalg import EPS, BandedHermitian, EigenPairs

DEFAULT_NODES = 16
DEFAULT_TOL = 1e-11
SPURIOUS_GAIN = 0.25
REFINE_FACTOR = 1e-2


@dataclass(frozen=True)
class ContourQuadrature:
    """Upper-half-circle Gauss-Legendre rule for the interval ``[a, b]``.

    The full contour is the circle through ``a`` and ``b``; the lower half
    is represented by conjugation, so ``nodes`` holds ``n_e // 2`` points
    and the rational filter is
    ``sum_j w_j / (z_j - x) + conj(w_j) / (conj(z_j) - x)``.
    """

    a: float
    b: float
    n_e: int
    nodes: np.ndarray
    weights: np.ndarray

    def filter(self, x):
        """Value of the rational filter at real points ``x``."""
        x = np.asarray(x, dtype=np.float64)[..., None]
        return 2 * np.real(np.sum(self.weights / (self.nodes - x), axis=-1))


def make_contour(a, b, n_e=DEFAULT_NODES):
    """Quadrature nodes/weights approximating the spectral projector onto ``[a, b]``."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if n_e < 2 or n_e % 2:
        raise ValueError(f"node count must be even and >= 2, got {n_e}")
    half = n_e // 2
    x, w = np.polynomial.legendre.leggauss(half)
    center, radius = (a + b) / 2, (b - a) / 2
    theta = (np.pi / 2) * (1 - x)
    e = np.exp(1j * theta)
    nodes = center + radius * e
    weights = w * radius * e / 4
    return ContourQuadrature(float(a), float(b), n_e, nodes, weights)


def subspace_size(m_i, n=None):
    """Oversized search-space dimension ``max(ceil(1.3 m), m + 10)``, capped at ``n``."""
    m0 = max(math.ceil(1.3 * m_i), m_i + 10)
    return m0 if n is None else min(m0, n)


@dataclass
class SliceSolveConfig:
    m_i: int
    m0: int | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = 50
    X0: np.ndarray | None = None
    seed: int | np.random.SeedSequence | None = None
    workers: int = 1
    reduced_method: str = "lapack"
    refine: float = REFINE_FACTOR

    def subspace(self, n):
        return min(self.m0, n) if self.m0 is not None else subspace_size(self.m_i, n)


@dataclass
class SliceResult:
    a: float
    b: float
    pairs: EigenPairs
    iterations: int
    converged: bool
    residuals: np.ndarray
    m0: int
    outside: int = 0
    history: list = field(default_factory=list)

    @property
    def m_found(self):
        return self.pairs.count


def reduced_hermitian_eig(Aq, method="lapack"):
    """Full eigendecomposition of the small Rayleigh-Ritz matrix.

    ``method="jacobi"`` uses the in-package cyclic Jacobi solver;
    ``"lapack"`` calls ``numpy.linalg.eigh``.
    """
    Aq = np.asarray(Aq)
    Aq = (Aq + Aq.conj().T) / 2
    if method == "jacobi":
        w, W = jacobi_eigh(Aq)
    elif method == "lapack":
        w, W = np.linalg.eigh(Aq)
    else:
        raise ValueError(f"unknown reduced eigensolver {method!r}")
    return EigenPairs(w, W)


class ContourFilter:
    """Applies the quadrature filter for one ``(D, contour)`` pair.

    The ``n_e // 2`` shifted factorizations are computed once, stacked, and
    reused for every iteration of the slice.  With ``workers > 1`` the
    nodes are split into that many stacks solved on separate threads.
    """

    def __init__(self, D, q, workers=1):
        self.D = D
        self.q = q
        self.workers = max(1, min(int(workers), len(q.nodes)))
        self.groups = np.array_split(np.arange(len(q.nodes)), self.workers)
        self.factors = self._map(lambda g: band_lu_factor(D, q.nodes[g]), self.groups)

    def _map(self, fn, items):
        if self.workers == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    def __call__(self, X):
        real = self.D.is_real and not np.iscomplexobj(X)

        def term(k):
            F, w = self.factors[k], self.q.weights[self.groups[k]][:, None, None]
            Y = np.sum(w * band_solve(F, X), axis=0)
            if real:
                return 2 * Y.real
            return Y + np.sum(np.conj(w) * band_solve(F, X, adjoint=True), axis=0)

        return np.sum(self._map(term, range(len(self.factors))), axis=0)


def _orthonormalize(Q):
    """QR with column pivoting; drops numerically dependent columns."""
    R_Q, R, _ = scipy.linalg.qr(Q, mode="economic", pivoting=True)
    d = np.abs(np.diagonal(R))
    if d.size == 0 or d[0] == 0:
        return R_Q[:, :0]
    keep = int(np.sum(d > np.sqrt(EPS) * d[0]))
    return R_Q[:, :keep]


def _start_block(n, m0, X0, rng, complex_):
    cols = []
    if X0 is not None:
        X0 = np.asarray(X0)
        if X0.shape[0] != n:
            raise ValueError(f"warm-start block has {X0.shape[0]} rows, expected {n}")
        cols.append(X0[:, :m0])
    have = cols[0].shape[1] if cols else 0
    if have < m0:
        pad = rng.standard_normal((n, m0 - have))
        if complex_:
            pad = pad + 1j * rng.standard_normal((n, m0 - have))
        cols.append(pad)
    X = np.hstack(cols)
    return X.astype(np.complex128) if complex_ or np.iscomplexobj(X) else X


def feast_slice(D: BandedHermitian, q: ContourQuadrature, cfg: SliceSolveConfig, filt=None) -> SliceResult:
    """Eigenpairs of ``D`` with eigenvalues in ``[q.a, q.b)``.

    Every iteration filters the block through the contour quadrature,
    orthonormalizes it and does a Rayleigh-Ritz step; the loop stops once
    every Ritz pair inside the interval has residual
    ``||D x - lambda x|| <= tol ||D||_F``.  If that first happens with a
    worst residual above ``refine * tol``, one more pass is made.
    """
    n = D.n
    m0 = cfg.subspace(n)
    rng = np.random.default_rng(cfg.seed)
    X = _start_block(n, m0, cfg.X0, rng, complex_=not D.is_real)
    if filt is None:
        filt = ContourFilter(D, q, cfg.workers)
    fro = D.fro_norm() or 1.0
    a, b = q.a, q.b

    history = []
    lam = np.zeros(0)
    res = np.zeros(0)
    keep = np.zeros(0, dtype=bool)
    converged = False
    refined = False
    prev_found = -1
    it = 0
    for it in range(1, cfg.max_iter + 1):
        Q = _orthonormalize(filt(X))
        if Q.shape[1] == 0:
            # filter annihilated the block: nothing in the interval
            X, lam, res = Q, np.zeros(0), np.zeros(0)
            keep = np.zeros(0, dtype=bool)
            converged = True
            break
        DQ = D.matmul(Q)
        ritz = reduced_hermitian_eig(Q.conj().T @ DQ, cfg.reduced_method)
        lam = ritz.values
        X = Q @ ritz.vectors
        R = DQ @ ritz.vectors - X * lam
        res = np.linalg.norm(R, axis=0) / fro
        inside = (lam >= a) & (lam < b)
        keep = inside.copy()
        suspect = np.flatnonzero(inside & (res > cfg.tol))
        if suspect.size:
            # a true eigenvector inside the contour passes the filter with
            # gain >= ~1/2; mixtures of damped outside vectors do not
            gain = np.linalg.norm(filt(X[:, suspect]), axis=0)
            keep[suspect[gain < SPURIOUS_GAIN]] = False
        worst = float(res[keep].max(initial=0.0))
        found = int(keep.sum())
        history.append(worst)
        if worst <= cfg.tol and (found >= cfg.m_i or found == prev_found):
            # pairs from different slices are only as orthogonal as their
            # residuals allow, so one extra pass is spent when the first
            # converged iterate sits close to the tolerance
            if refined or worst <= cfg.refine * cfg.tol:
                converged = True
                break
            refined = True
        prev_found = found

    pairs = EigenPairs(lam[keep], X[:, keep])
    return SliceResult(
        a=a,
        b=b,
        pairs=pairs,
        iterations=it,
        converged=converged,
        residuals=res[keep],
        m0=m0,
        outside=int(np.sum(~keep)),
        history=history,
    )

"""Shifted banded LU solves and count-only inertia for Hermitian band matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import EPS, BandedHermitian


class SingularShiftError(ArithmeticError):
    """``zI - D`` has an exactly zero pivot column."""


@dataclass(frozen=True)
class ShiftedBandFactor:
    """PLU factors of ``zI - D`` in LAPACK ``xGBTRF`` band layout.

    ``ab[kv + i - j, j]`` holds entry ``(i, j)`` of ``U`` (for ``i <= j``)
    or the multiplier of ``L`` (for ``i > j``), with ``kv = 2 * n_bw``.

    Several shifts can be factored together: ``z`` is then a 1-D array,
    ``ab`` gains a leading axis with one factor per shift and ``ipiv`` is
    ``(len(z), n)``.  Stacking lets one sweep over the columns serve every
    quadrature node at once.
    """

    n: int
    n_bw: int
    z: complex | np.ndarray
    ab: np.ndarray
    ipiv: np.ndarray
    blocks: tuple = ()

    @property
    def stacked(self):
        return self.ab.ndim == 3


@dataclass(frozen=True)
class _SolveBlock:
    """Dense operators for one block of ``b`` columns ``[j0, j1)``.

    ``L`` is the product of the block's row swaps and eliminations restricted
    to the rows ``[j0, w1)`` they touch, ``Uinv`` inverts the diagonal block of
    ``U`` and ``C = U[lo:j0, j0:j1]`` couples the block to earlier rows.
    """

    j0: int
    j1: int
    w1: int
    lo: int
    L: np.ndarray
    Uinv: np.ndarray
    C: np.ndarray


def _block_size(n_bw):
    return max(32, 2 * n_bw)


def _solve_blocks(urows, lcols, ipiv, n, kl):
    """Precompute the block operators used by :func:`band_solve`."""
    s = urows.shape[0]
    kv = 2 * kl
    b = _block_size(kl)
    batch = np.arange(s)
    out = []
    for j0 in range(0, n, b):
        j1 = min(j0 + b, n)
        w1 = min(j1 + kl, n)
        L = np.broadcast_to(np.eye(w1 - j0, dtype=np.complex128), (s, w1 - j0, w1 - j0)).copy()
        for j in range(j0, j1):
            r, p = j - j0, ipiv[:, j] - j0
            tmp = L[batch, p].copy()
            L[batch, p] = L[:, r]
            L[:, r] = tmp
            km = min(kl, n - 1 - j)
            if km:
                L[:, r + 1 : r + km + 1] -= lcols[:, j, :km, None] * L[:, r, None, :]
        lo = max(0, j0 - kv)
        rows, cols = np.meshgrid(np.arange(lo, j1), np.arange(j0, j1), indexing="ij")
        t = cols - rows
        inband = (t >= 0) & (t <= kv)
        U = np.zeros((s, j1 - lo, j1 - j0), dtype=np.complex128)
        U[:, inband] = urows[:, rows[inband], t[inband]]
        Uinv = np.linalg.inv(U[:, j0 - lo :])
        C = np.ascontiguousarray(U[:, : j0 - lo])
        out.append(_SolveBlock(j0, j1, w1, lo, L, Uinv, C))
    return tuple(out)


def _shifted_rows(D, zs):
    """``M[:, i, u] = (zI - D)[i, i - n_bw + u]`` for ``u = 0..2 n_bw`` (zero off the matrix)."""
    n, kl = D.n, D.n_bw
    M = np.zeros((zs.size, n, 2 * kl + 1), dtype=np.complex128)
    M[:, :, kl] = zs[:, None] - D.bands[0]
    for d in range(1, kl + 1):
        M[:, d:, kl - d] = -D.bands[d, : n - d]
        M[:, : n - d, kl + d] = -D.bands[d, : n - d].conj()
    return M


def band_lu_factor(D: BandedHermitian, z) -> ShiftedBandFactor:
    """Factor ``zI - D`` with partial pivoting (fill up to ``2 n_bw`` superdiagonals).

    ``z`` may be a scalar or a 1-D array of shifts; see :class:`ShiftedBandFactor`.
    Elimination runs on a dense ``(n_bw + 1) x (2 n_bw + 1)`` window that
    slides down the diagonal: at step ``j`` it holds rows ``j..j+n_bw`` and
    columns ``j..j+2 n_bw`` of the partially reduced matrix.
    """
    single = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    s = zs.size
    n, kl = D.n, D.n_bw
    kv = 2 * kl
    M = _shifted_rows(D, zs)
    Mpad = np.zeros((s, n + kl + 1, kv + 1), dtype=np.complex128)
    Mpad[:, :n] = M

    W = np.zeros((s, kl + 1, kv + 1), dtype=np.complex128)
    for r in range(min(kl + 1, n)):
        # row r spans columns r - kl .. r + kl; keep the part at columns >= 0
        W[:, r, : kv + 1 - (kl - r)] = M[:, r, kl - r :]
    urows = np.zeros((s, n, kv + 1), dtype=np.complex128)
    lcols = np.zeros((s, n, kl), dtype=np.complex128)
    ipiv = np.zeros((s, n), dtype=np.intp)
    batch = np.arange(s)

    for j in range(n):
        jp = np.argmax(np.abs(W[:, :, 0]), axis=1)
        piv = W[batch, jp, 0]
        if np.any(piv == 0):
            bad = zs[np.flatnonzero(piv == 0)[0]]
            raise SingularShiftError(f"zero pivot at column {j} for shift {complex(bad)}")
        ipiv[:, j] = j + jp
        if jp.any():
            top = W[:, 0].copy()
            W[:, 0] = W[batch, jp]
            W[batch, jp] = top
        urows[:, j] = W[:, 0]
        if kl:
            lvec = W[:, 1:, 0] / W[:, :1, 0]
            lcols[:, j] = lvec
            W[:, 1:, 1:] -= lvec[:, :, None] * W[:, :1, 1:]
        # slide: drop row j and column j, bring in untouched row j + kl + 1
        W[:, :kl, :kv] = W[:, 1:, 1:]
        W[:, :kl, kv] = 0
        W[:, kl] = Mpad[:, j + kl + 1]

    ab = np.zeros((s, 2 * kl + kl + 1, n), dtype=np.complex128)
    i, t = np.meshgrid(np.arange(n), np.arange(kv + 1), indexing="ij")
    ok = i + t < n
    ab[:, kv - t[ok], i[ok] + t[ok]] = urows[:, i[ok], t[ok]]
    if kl:
        j, t = np.meshgrid(np.arange(n), np.arange(kl), indexing="ij")
        ok = j + 1 + t < n
        ab[:, kv + 1 + t[ok], j[ok]] = lcols[:, j[ok], t[ok]]
    blocks = _solve_blocks(urows, lcols, ipiv, n, kl)
    if single:
        return ShiftedBandFactor(n, kl, complex(zs[0]), ab[0], ipiv[0], blocks)
    return ShiftedBandFactor(n, kl, zs, ab, ipiv, blocks)


def _rhs(F, B):
    B = np.asarray(B)
    s = F.ab.shape[0] if F.stacked else 1
    vec = B.ndim == 1
    X = B[:, None] if vec else B
    if X.ndim == 2:
        X = np.broadcast_to(X, (s,) + X.shape)
    X = np.array(X, dtype=np.complex128, order="C")
    if X.shape[0] != s or X.shape[1] != F.n:
        raise ValueError(f"right-hand side shape {B.shape} does not fit a factor of order {F.n}")
    return X, vec


def _result(F, X, vec):
    if not F.stacked:
        X = X[0]
        return X[:, 0] if vec else X
    return X[:, :, 0] if vec else X


def band_solve(F: ShiftedBandFactor, B, adjoint=False):
    """Return ``(zI - D)^{-1} B`` (or ``(zI - D)^{-H} B`` when ``adjoint``).

    For a stacked factor the result has a leading axis over shifts; ``B``
    may be shared by all shifts or carry that axis itself.  Works block by
    block with dense operators precomputed at factorization time; the
    column-at-a-time reference is :func:`band_solve_rowwise`.
    """
    X, vec = _rhs(F, B)
    if not adjoint:
        for blk in F.blocks:
            X[:, blk.j0 : blk.w1] = blk.L @ X[:, blk.j0 : blk.w1]
        for blk in reversed(F.blocks):
            X[:, blk.j0 : blk.j1] = blk.Uinv @ X[:, blk.j0 : blk.j1]
            if blk.lo < blk.j0:
                X[:, blk.lo : blk.j0] -= blk.C @ X[:, blk.j0 : blk.j1]
    else:
        # U^H L^H P^T y = b: transpose every step and reverse the order
        for blk in F.blocks:
            if blk.lo < blk.j0:
                X[:, blk.j0 : blk.j1] -= _ct(blk.C) @ X[:, blk.lo : blk.j0]
            X[:, blk.j0 : blk.j1] = _ct(blk.Uinv) @ X[:, blk.j0 : blk.j1]
        for blk in reversed(F.blocks):
            X[:, blk.j0 : blk.w1] = _ct(blk.L) @ X[:, blk.j0 : blk.w1]
    return _result(F, X, vec)


def _ct(M):
    return np.conj(np.swapaxes(M, -1, -2))


def band_solve_rowwise(F: ShiftedBandFactor, B, adjoint=False):
    """Column-at-a-time ``xGBTRS``-style solve; same contract as :func:`band_solve`.

    For a stacked factor the result has a leading axis over shifts; ``B``
    may be shared by all shifts or carry that axis itself.
    """
    X, vec = _rhs(F, B)
    ab = F.ab if F.stacked else F.ab[None]
    ipiv = F.ipiv if F.stacked else F.ipiv[None]
    s = ab.shape[0]
    n, kl = F.n, F.n_bw
    kv = 2 * kl
    batch = np.arange(s)

    def swap(j):
        p = ipiv[:, j]
        if np.any(p != j):
            tmp = X[batch, p].copy()
            X[batch, p] = X[:, j]
            X[:, j] = tmp

    if not adjoint:
        for j in range(n):
            swap(j)
            km = min(kl, n - 1 - j)
            if km:
                X[:, j + 1 : j + km + 1] -= ab[:, kv + 1 : kv + km + 1, j][:, :, None] * X[:, j][:, None, :]
        for j in range(n - 1, -1, -1):
            X[:, j] /= ab[:, kv, j][:, None]
            lo = max(0, j - kv)
            if lo < j:
                X[:, lo:j] -= ab[:, kv - (j - lo) : kv, j][:, :, None] * X[:, j][:, None, :]
    else:
        # U^H L^H P^T y = b
        for j in range(n):
            lo = max(0, j - kv)
            if lo < j:
                X[:, j] -= np.einsum("sk,skm->sm", ab[:, kv - (j - lo) : kv, j].conj(), X[:, lo:j])
            X[:, j] /= np.conj(ab[:, kv, j])[:, None]
        for j in range(n - 1, -1, -1):
            km = min(kl, n - 1 - j)
            if km:
                X[:, j] -= np.einsum("sk,skm->sm", ab[:, kv + 1 : kv + km + 1, j].conj(), X[:, j + 1 : j + km + 1])
            swap(j)
    return _result(F, X, vec)


@dataclass(frozen=True)
class Inertia:
    n_neg: int
    n_zero: int
    n_pos: int
    shift: float
    perturbed: bool = False

    @property
    def n(self):
        return self.n_neg + self.n_zero + self.n_pos


def _ldl_count(D, s, pivmin):
    """Pivot signs of ``D - sI`` by banded symmetric elimination without pivoting.

    Only a sliding ``(n_bw+1) x (n_bw+1)`` window is kept; ``L`` is never stored.
    """
    n, w = D.n, D.n_bw
    bands = D.bands
    # rows[i, u] = (D - sI)[i, i - w + u] for u = 0..w (lower half of row i)
    rows = np.zeros((n + w + 1, w + 1), dtype=bands.dtype)
    for d in range(w + 1):
        rows[d:n, w - d] = bands[d, : n - d]
    rows[:n, w] -= s
    m = w + 1
    W = np.zeros((m, m), dtype=bands.dtype)
    for r in range(min(m, n)):
        W[r, : r + 1] = rows[r, w - r :]
    W = np.tril(W) + np.tril(W, -1).conj().T
    neg = zero = 0
    for j in range(n):
        piv = W[0, 0].real
        if abs(piv) <= pivmin:
            zero += 1
            piv = -pivmin
        elif piv < 0:
            neg += 1
        col = W[1:, 0]
        W[1:, 1:] -= np.outer(col, col.conj() / piv)
        # slide the window down by one, bringing in row/column j + m
        W[:-1, :-1] = W[1:, 1:]
        new = rows[j + m, :w]
        W[-1, :-1] = new
        W[:-1, -1] = new.conj()
        W[-1, -1] = rows[j + m, w]
    return neg, zero


def inertia(D: BandedHermitian, s: float, perturb=True) -> Inertia:
    """Eigenvalue sign counts of ``D - sI``.

    Pivots with ``|pivot| <= eps ||D||_F`` are counted in ``n_zero``.  When
    any occur and ``perturb`` is set, the count is redone once at
    ``s - sqrt(eps) ||D||_F`` and reported against that shift.
    """
    s = float(s)
    fro = D.fro_norm()
    pivmin = EPS * max(fro, np.finfo(float).tiny)
    neg, zero = _ldl_count(D, s, pivmin)
    if zero and perturb:
        s2 = s - np.sqrt(EPS) * max(fro, 1.0)
        neg2, zero2 = _ldl_count(D, s2, pivmin)
        if not zero2:
            return Inertia(neg2, 0, D.n - neg2, s2, perturbed=True)
    return Inertia(neg, zero, D.n - neg - zero, s)


def count_below(D, s):
    """Number of eigenvalues of ``D`` strictly below ``s`` (shift-perturbed if needed)."""
    return inertia(D, s).n_neg

"""Dense/banded Hermitian matrices, band reduction and backtransform.

The band reduction is the first stage of two-step symmetric band reduction:
Householder QR panels of width ``n_bw`` annihilate everything below the
``n_bw``-th subdiagonal, and each panel is kept in compact WY form
``Q = I - V T V^H`` so that the eigenvector backtransform is a short sequence
of block reflector applications.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS = np.finfo(np.float64).eps

DEFAULT_BANDWIDTH = 64


class NotHermitianError(ValueError):
    """Input matrix is not Hermitian (or not square)."""


class BandwidthError(ValueError):
    """Requested semibandwidth is outside ``1 <= n_bw < n``."""


def _dtype(is_real):
    return np.float64 if is_real else np.complex128


@dataclass(frozen=True)
class DenseHermitian:
    """Full-storage Hermitian matrix.

    ``data`` is always exactly Hermitian: the constructor mirrors the upper
    triangle onto the lower one after checking that the input is Hermitian
    to within ``rtol`` of its largest entry.
    """

    data: np.ndarray
    is_real: bool = False
    rtol: float = field(default=1e-12, repr=False, compare=False)

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise NotHermitianError(f"expected a non-empty square matrix, got shape {a.shape}")
        is_real = bool(self.is_real) or not np.iscomplexobj(a)
        if is_real and np.iscomplexobj(a):
            if np.any(a.imag != 0):
                raise NotHermitianError("is_real=True but matrix has imaginary entries")
            a = a.real
        a = np.array(a, dtype=_dtype(is_real), order="F")
        scale = np.max(np.abs(a)) if a.size else 0.0
        skew = np.max(np.abs(a - a.conj().T))
        if skew > self.rtol * scale:
            raise NotHermitianError(f"matrix is not Hermitian: max|A - A^H| = {skew:.3e}")
        object.__setattr__(self, "data", _mirror_upper(a))
        object.__setattr__(self, "is_real", is_real)

    @classmethod
    def from_upper(cls, upper, is_real=None):
        """Build from the upper triangle only; the lower triangle is ignored."""
        u = np.asarray(upper)
        if is_real is None:
            is_real = not np.iscomplexobj(u)
        return cls(_mirror_upper(np.array(u, dtype=_dtype(is_real))), is_real=is_real)

    @property
    def n(self):
        return self.data.shape[0]

    def fro_norm(self):
        return float(np.linalg.norm(self.data))


def _mirror_upper(a):
    out = np.triu(a) + np.triu(a, 1).conj().T
    idx = np.diag_indices_from(out)
    out[idx] = out[idx].real
    return np.asfortranarray(out)


@dataclass(frozen=True)
class BandedHermitian:
    """Hermitian band matrix in LAPACK lower compact storage.

    ``bands[d, i]`` holds ``D[i + d, i]`` for ``0 <= d <= n_bw``; entries
    with ``i + d >= n`` are padding and always zero.
    """

    bands: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bands)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"bad band storage shape {b.shape}")
        b = np.array(b, dtype=np.complex128 if np.iscomplexobj(b) else np.float64)
        b[0] = b[0].real
        n = b.shape[1]
        for d in range(1, b.shape[0]):
            b[d, max(n - d, 0):] = 0
        object.__setattr__(self, "bands", b)

    @property
    def n(self):
        return self.bands.shape[1]

    @property
    def n_bw(self):
        return self.bands.shape[0] - 1

    @property
    def is_real(self):
        return not np.iscomplexobj(self.bands)

    @classmethod
    def from_dense(cls, a, n_bw):
        """Take the lower band of ``a``; entries outside it are discarded."""
        a = np.asarray(a)
        n = a.shape[0]
        n_bw = min(n_bw, max(n - 1, 0))
        bands = np.zeros((n_bw + 1, n), dtype=a.dtype)
        for d in range(n_bw + 1):
            bands[d, : n - d] = np.diagonal(a, -d)
        return cls(bands)

    @classmethod
    def diagonal(cls, values):
        return cls(np.asarray(values, dtype=np.float64)[None, :])

    def to_dense(self):
        n, w = self.n, self.n_bw
        out = np.zeros((n, n), dtype=self.bands.dtype)
        for d in range(w + 1):
            idx = np.arange(n - d)
            out[idx + d, idx] = self.bands[d, : n - d]
            if d:
                out[idx, idx + d] = self.bands[d, : n - d].conj()
        return out

    def matmul(self, x):
        """Return ``D @ x`` using only the stored diagonals."""
        x = np.asarray(x)
        vec = x.ndim == 1
        if vec:
            x = x[:, None]
        n = self.n
        if x.shape[0] != n:
            raise ValueError(f"dimension mismatch: D is {n}x{n}, x has {x.shape[0]} rows")
        y = self.bands[0][:, None] * x
        y = y.astype(np.result_type(y, self.bands), copy=False)
        for d in range(1, self.n_bw + 1):
            sub = self.bands[d, : n - d][:, None]
            y[d:] += sub * x[: n - d]
            y[: n - d] += sub.conj() * x[d:]
        return y[:, 0] if vec else y

    def fro_norm(self):
        off = np.sum(np.abs(self.bands[1:]) ** 2)
        return float(np.sqrt(np.sum(np.abs(self.bands[0]) ** 2) + 2 * off))

    def gershgorin(self):
        """Interval ``(lo, hi)`` containing the whole spectrum."""
        n = self.n
        radius = np.zeros(n)
        for d in range(1, self.n_bw + 1):
            mag = np.abs(self.bands[d, : n - d])
            radius[d:] += mag
            radius[: n - d] += mag
        diag = self.bands[0].real
        return float(np.min(diag - radius)), float(np.max(diag + radius))


@dataclass(frozen=True)
class ReflectorPanel:
    """One block reflector ``Q = I - V T V^H`` acting on rows ``start:``."""

    start: int
    V: np.ndarray
    T: np.ndarray

    def apply(self, x):
        """Overwrite ``x`` with ``Q @ x``."""
        s = self.start
        x[s:] -= self.V @ (self.T @ (self.V.conj().T @ x[s:]))

    def apply_adjoint(self, x):
        """Overwrite ``x`` with ``Q^H @ x``."""
        s = self.start
        x[s:] -= self.V @ (self.T.conj().T @ (self.V.conj().T @ x[s:]))


@dataclass(frozen=True)
class BandReductionTransform:
    """The unitary ``U`` with ``D = U A U^H``, stored as reflector panels.

    ``U^H = Q_1 Q_2 ... Q_k`` where ``Q_i`` are the panels in order.
    """

    n: int
    n_bw: int
    panels: tuple = ()

    def apply_uh(self, x):
        """Return ``U^H @ x``."""
        out = np.array(x, dtype=np.result_type(x, *(p.V for p in self.panels)) if self.panels else None)
        for p in reversed(self.panels):
            p.apply(out)
        return out

    def apply_u(self, x):
        """Return ``U @ x``."""
        out = np.array(x, dtype=np.result_type(x, *(p.V for p in self.panels)) if self.panels else None)
        for p in self.panels:
            p.apply_adjoint(out)
        return out

    def matrix(self):
        """Materialize ``U`` as a dense array."""
        dtype = np.result_type(np.float64, *(p.V for p in self.panels))
        return self.apply_u(np.eye(self.n, dtype=dtype))


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        x = np.asarray(self.vectors)
        if x.ndim != 2 or x.shape[1] != v.shape[0]:
            raise ValueError(f"{v.shape[0]} values but vectors have shape {x.shape}")
        if v.size > 1 and np.any(np.diff(v) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "vectors", x)

    @property
    def count(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class AccuracyReport:
    orth: float
    max_residual: float
    per_pair_residuals: np.ndarray
    max_raw_residual: float = 0.0


def householder(x):
    """Elementary reflector annihilating ``x[1:]``.

    Returns ``(v, tau, beta)`` with ``v[0] = 1`` such that
    ``(I - tau v v^H)^H x = beta e_1`` and ``beta`` real (LAPACK ``xLARFG``).
    """
    alpha = x[0]
    xnorm = np.linalg.norm(x[1:])
    v = np.zeros_like(x)
    v[0] = 1
    if xnorm == 0 and np.imag(alpha) == 0:
        return v, x.dtype.type(0), np.real(alpha)
    beta = -np.copysign(np.hypot(np.abs(alpha), xnorm), np.real(alpha))
    tau = (beta - alpha) / beta
    v[1:] = x[1:] / (alpha - beta)
    return v, tau, beta


def _panel_qr(block):
    """Householder QR of ``block`` in place; returns ``(V, T)`` with ``Q = I - V T V^H``."""
    m, b = block.shape
    V = np.zeros((m, b), dtype=block.dtype)
    T = np.zeros((b, b), dtype=block.dtype)
    for i in range(b):
        v, tau, beta = householder(block[i:, i])
        if i + 1 < b:
            w = v.conj() @ block[i:, i + 1 :]
            block[i:, i + 1 :] -= np.conj(tau) * np.outer(v, w)
        block[i, i] = beta
        block[i + 1 :, i] = 0
        V[i:, i] = v
        T[:i, i] = -tau * (T[:i, :i] @ (V[:, :i].conj().T @ V[:, i]))
        T[i, i] = tau
    return V, T


def band_reduce(A, n_bw=DEFAULT_BANDWIDTH):
    """Reduce ``A`` to Hermitian band form ``D = U A U^H``.

    Parameters
    ----------
    A : DenseHermitian
    n_bw : int
        Target semibandwidth, ``1 <= n_bw < n``.

    Returns
    -------
    (BandedHermitian, BandReductionTransform)
    """
    n = A.n
    if not 1 <= n_bw < n:
        raise BandwidthError(f"need 1 <= n_bw < n, got n_bw={n_bw}, n={n}")
    a = np.array(A.data, order="F")
    panels = []
    for j in range(0, n - n_bw - 1, n_bw):
        r = j + n_bw
        b = min(n_bw, n - r - 1)
        block = a[r:, j : j + b]
        if not np.any(np.tril(block, -1)):
            continue
        V, T = _panel_qr(block.copy())
        # two-sided update on the trailing rows/columns
        a[r:, :] -= V @ (T.conj().T @ (V.conj().T @ a[r:, :]))
        a[:, r:] -= (a[:, r:] @ V) @ T @ V.conj().T
        panels.append(ReflectorPanel(r, V, T))
    D = BandedHermitian.from_dense(a, n_bw)
    return D, BandReductionTransform(n, n_bw, tuple(panels))


def backtransform(T, pairs):
    """Map banded-stage eigenvectors to eigenvectors of ``A``: ``X = U^H X_hat``."""
    if pairs.vectors.shape[0] != T.n:
        raise ValueError(f"dimension mismatch: transform is {T.n}, vectors have {pairs.vectors.shape[0]} rows")
    return EigenPairs(pairs.values, T.apply_uh(pairs.vectors))


def orthogonality(X, n=None):
    """``max|X^H X - I| / n`` with ``n`` the row dimension by default."""
    X = np.asarray(X)
    if n is None:
        n = X.shape[0]
    if X.shape[1] == 0:
        return 0.0
    G = X.conj().T @ X
    G[np.diag_indices_from(G)] -= 1
    return float(np.max(np.abs(G)) / n)


def residuals(A, pairs):
    """Raw per-pair residual norms ``||A x - lambda x||_2``.

    ``A`` is a dense array, DenseHermitian or BandedHermitian.
    """
    X = pairs.vectors
    if isinstance(A, BandedHermitian):
        AX = A.matmul(X)
    else:
        AX = np.asarray(getattr(A, "data", A)) @ X
    return np.linalg.norm(AX - X * pairs.values[None, :], axis=0)


def accuracy_report(A, pairs):
    raw = residuals(A, pairs)
    fro = A.fro_norm() if hasattr(A, "fro_norm") else float(np.linalg.norm(A))
    rel = raw / fro if fro > 0 else raw
    return AccuracyReport(
        orth=orthogonality(pairs.vectors),
        max_residual=float(rel.max(initial=0.0)),
        per_pair_residuals=rel,
        max_raw_residual=float(raw.max(initial=0.0)),
    )


def perturb_sequence(A, tau=1e-4, steps=1, seed=None):
    """Synthesize correlated matrices by ``a_ij <- a_ij (1 + tau eta_ij)``.

    Each step perturbs the nonzero upper-triangle entries of the *original*
    ``A`` with independent ``eta ~ U[0, 1]`` and mirrors the result.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    rng = np.random.default_rng(seed)
    n = A.n
    iu = np.triu_indices(n)
    out = []
    for _ in range(steps):
        eta = rng.uniform(0.0, 1.0, size=iu[0].size)
        up = np.zeros_like(A.data)
        up[iu] = A.data[iu] * (1 + tau * eta)
        out.append(DenseHermitian.from_upper(up, is_real=A.is_real))
    return out


def random_hermitian(n, seed=None, is_real=False):
    """Random Hermitian test matrix with entries of unit scale."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    if not is_real:
        a = a + 1j * rng.standard_normal((n, n))
    return DenseHermitian.from_upper((a + a.conj().T) / 2, is_real=is_real)

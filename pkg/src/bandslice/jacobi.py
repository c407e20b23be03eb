"""Cyclic Jacobi eigensolver for small dense Hermitian matrices.

Rotations are applied in round-robin (parallel) order: each round touches
``n // 2`` disjoint index pairs, so a round is a handful of vectorized
row/column updates instead of ``n // 2`` separate ones.
"""

from __future__ import annotations

import numpy as np


def round_robin_pairs(n):
    """Rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        rounds.append([(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n])
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A, tol=None, max_sweeps=60):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` with values ascending.
    """
    a = np.array(A, dtype=np.complex128 if np.iscomplexobj(A) else np.float64)
    n = a.shape[0]
    V = np.eye(n, dtype=a.dtype)
    if n == 1:
        return a.real.diagonal().copy(), V
    if tol is None:
        tol = np.finfo(np.float64).eps
    scale = np.linalg.norm(a)
    rounds = [np.array(r).T for r in round_robin_pairs(n) if r]
    tiny = np.finfo(np.float64).tiny / np.finfo(np.float64).eps
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(a[offdiag]) <= tol * scale:
            break
        for P, Q in rounds:
            apq = a[P, Q]
            mag = np.abs(apq)
            active = mag > tiny
            if not np.any(active):
                continue
            app = a[P, P].real
            aqq = a[Q, Q].real
            safe = np.where(active, mag, 1.0)
            theta = (aqq - app) / (2 * safe)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(1.0, theta))
            t[~active] = 0.0
            c = 1 / np.sqrt(1 + t**2)
            s = t * c
            # phase e^{-i phi} makes the 2x2 block real symmetric
            ph = np.where(active, apq.conj() / safe, 1.0)
            # J = diag(1, ph) [[c, s], [-s, c]]
            jpp, jpq = c, s
            jqp, jqq = -s * ph, c * ph
            ap, aq = a[:, P].copy(), a[:, Q].copy()
            a[:, P] = ap * jpp + aq * jqp
            a[:, Q] = ap * jpq + aq * jqq
            ap, aq = a[P, :].copy(), a[Q, :].copy()
            a[P, :] = np.conj(jpp)[:, None] * ap + np.conj(jqp)[:, None] * aq
            a[Q, :] = np.conj(jpq)[:, None] * ap + np.conj(jqq)[:, None] * aq
            a[P, Q] = 0
            a[Q, P] = 0
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = vp * jpp + vq * jqp
            V[:, Q] = vp * jpq + vq * jqq
    w = np.diagonal(a).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]

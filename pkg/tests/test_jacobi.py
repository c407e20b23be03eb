import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from bandslice.jacobi import jacobi_eigh, round_robin_pairs
from bandslice.linalg import random_hermitian


def test_round_robin_covers_every_pair_once():
    for n in (1, 2, 5, 8):
        seen = [tuple(sorted(p)) for rnd in round_robin_pairs(n) for p in rnd]
        assert len(seen) == len(set(seen)) == n * (n - 1) // 2
        for rnd in round_robin_pairs(n):
            flat = [i for p in rnd for i in p]
            assert len(flat) == len(set(flat))


def test_two_by_two():
    w, V = jacobi_eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(w, [-1, 1], atol=1e-15)
    assert np.allclose(np.abs(V), 1 / np.sqrt(2))


@given(st.integers(1, 30), st.integers(0, 2**31), st.booleans())
def test_matches_lapack(n, seed, is_real):
    A = random_hermitian(n, seed=seed, is_real=is_real).data
    w, V = jacobi_eigh(A)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(w, np.linalg.eigvalsh(A), atol=1e-12 * max(1, np.abs(w).max()))
    assert np.max(np.abs(A @ V - V * w)) <= 1e-11 * np.linalg.norm(A)
    assert np.max(np.abs(V.conj().T @ V - np.eye(n))) <= 1e-12

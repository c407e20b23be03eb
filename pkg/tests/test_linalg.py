import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandslice.linalg import (
    EPS,
    BandedHermitian,
    BandReductionTransform,
    DenseHermitian,
    EigenPairs,
    NotHermitianError,
    backtransform,
    band_reduce,
    householder,
    orthogonality,
    perturb_sequence,
    random_hermitian,
)

from oracles import jacobi_values_of, relative_error


@st.composite
def hermitian_and_width(draw, n_max=40):
    n = draw(st.integers(2, n_max))
    n_bw = draw(st.integers(1, n - 1))
    seed = draw(st.integers(0, 2**31))
    is_real = draw(st.booleans())
    return random_hermitian(n, seed=seed, is_real=is_real), n_bw


def test_dense_hermitian_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        DenseHermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotHermitianError):
        DenseHermitian(np.ones((2, 3)))


def test_dense_hermitian_real_diagonal():
    a = np.array([[1.0 + 1e-17j, 2 - 1j], [2 + 1j, 3.0]])
    A = DenseHermitian(a)
    assert np.all(np.diag(A.data).imag == 0)


def test_householder_annihilates_tail():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    v, tau, beta = householder(x)
    H = np.eye(6) - tau * np.outer(v, v.conj())
    y = H.conj().T @ x
    assert np.allclose(y[1:], 0, atol=1e-14)
    assert abs(y[0] - beta) < 1e-14 and np.isreal(beta)


def test_band_matrix_roundtrip_and_matmul():
    A = random_hermitian(12, seed=1)
    D = BandedHermitian.from_dense(A.data, 3)
    M = D.to_dense()
    assert np.array_equal(BandedHermitian.from_dense(M, 3).bands, D.bands)
    x = np.random.default_rng(0).standard_normal((12, 2))
    assert np.allclose(D.matmul(x), M @ x, atol=1e-14)
    assert D.fro_norm() == pytest.approx(np.linalg.norm(M))


def test_already_banded_is_fixed_point():
    D0 = BandedHermitian.from_dense(random_hermitian(20, seed=2).data, 3)
    D, T = band_reduce(DenseHermitian(D0.to_dense()), 3)
    assert T.panels == ()
    assert np.array_equal(D.to_dense(), D0.to_dense())


def test_diagonal_is_fixed_point():
    D, T = band_reduce(DenseHermitian(np.diag([1.0, 2.0, 3.0, 4.0])), 1)
    assert np.array_equal(D.to_dense(), np.diag([1.0, 2.0, 3.0, 4.0]))
    assert np.allclose(np.sort(np.diag(D.to_dense())), [1, 2, 3, 4])


def test_random_50_band4_against_jacobi():
    A = random_hermitian(50, seed=11)
    D, _ = band_reduce(A, 4)
    assert D.n_bw == 4
    ref = jacobi_values_of(A.data)
    assert relative_error(jacobi_values_of(D.to_dense()), ref) <= 1e-10


@given(hermitian_and_width())
def test_spectrum_preserved(case):
    A, n_bw = case
    D, _ = band_reduce(A, n_bw)
    assert relative_error(np.linalg.eigvalsh(D.to_dense()), jacobi_values_of(A.data)) <= 1e-10


@given(hermitian_and_width())
def test_transform_unitary_and_round_trip(case):
    A, n_bw = case
    n = A.n
    D, T = band_reduce(A, n_bw)
    U = T.matrix()
    assert np.max(np.abs(U.conj().T @ U - np.eye(n))) <= 100 * EPS * n
    back = U.conj().T @ D.to_dense() @ U
    assert np.max(np.abs(back - A.data)) <= 100 * EPS * n * np.max(np.abs(A.data))


@given(hermitian_and_width(n_max=30))
def test_backtransform_preserves_inner_products(case):
    A, n_bw = case
    _, T = band_reduce(A, n_bw)
    rng = np.random.default_rng(A.n)
    Y = rng.standard_normal((A.n, 4)) + 1j * rng.standard_normal((A.n, 4))
    X = backtransform(T, EigenPairs(np.arange(4.0), Y)).vectors
    assert np.allclose(X.conj().T @ X, Y.conj().T @ Y, atol=1e-12 * np.linalg.norm(Y) ** 2)


def test_backtransform_identity():
    Y = np.random.default_rng(0).standard_normal((7, 3))
    out = backtransform(BandReductionTransform(7, 2), EigenPairs([1.0, 2.0, 3.0], Y))
    assert np.array_equal(out.vectors, Y)


def test_orthogonality_examples():
    I = np.eye(6)
    assert orthogonality(I[:, :3]) == 0.0
    assert orthogonality(I[:, [0, 0]]) == pytest.approx(1 / 6)


def test_eigenpairs_validation():
    with pytest.raises(ValueError):
        EigenPairs([2.0, 1.0], np.eye(2))
    with pytest.raises(ValueError):
        EigenPairs([1.0], np.eye(2))


def test_perturb_sequence_tau_zero():
    A = random_hermitian(10, seed=4)
    for B in perturb_sequence(A, tau=0.0, steps=3, seed=1):
        assert np.array_equal(B.data, A.data)


def test_perturb_sequence_relative_change():
    A = DenseHermitian(np.ones((8, 8)), is_real=True)
    seq = perturb_sequence(A, tau=1e-4, steps=4, seed=2)
    assert len(seq) == 4
    for B in seq:
        rel = np.abs(B.data - A.data) / np.abs(A.data)
        assert rel.max() <= 1e-4
        assert not np.array_equal(B.data, A.data)


def test_perturbed_eigenvalues_stay_close():
    A = random_hermitian(100, seed=5)
    tau = 1e-4
    (B,) = perturb_sequence(A, tau=tau, steps=1, seed=6)
    shift = np.max(np.abs(jacobi_values_of(B.data) - jacobi_values_of(A.data)))
    # |E_ij| <= tau |A_ij| so ||E||_2 <= tau ||A||_F (Weyl)
    assert shift <= tau * np.linalg.norm(A.data)
    assert shift > 0


@given(hermitian_and_width(n_max=25))
def test_gershgorin_contains_spectrum(case):
    A, n_bw = case
    D = BandedHermitian.from_dense(A.data, n_bw)
    lo, hi = D.gershgorin()
    ev = np.linalg.eigvalsh(D.to_dense())
    assert lo <= ev[0] + 1e-12 and ev[-1] <= hi + 1e-12

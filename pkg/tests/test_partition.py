import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandslice.bandsolve import inertia
from bandslice.feast import ContourFilter, SliceSolveConfig, feast_slice, make_contour
from bandslice.linalg import BandedHermitian, band_reduce, random_hermitian
from bandslice import partition as P
from bandslice.partition import (
    CLUSTER_GAP,
    SPLIT_OPS,
    BoundConfig,
    BoundsError,
    OpCounter,
    SpectrumPartition,
    ValidationError,
    balanced_splits,
    compute_bounds,
    inertia_bisection,
    kmeans1d,
    validate_counts,
    window_by_inertia,
)

from oracles import jacobi_values_of, planted_clusters

# per-iteration work bound used by the instrumented k-means
OPS_CONSTANT = 3 * SPLIT_OPS


def _groups(values, part):
    idx = np.searchsorted(part.boundaries, values, side="right") - 1
    return [values[idx == g] for g in range(part.k)]


# ---------------------------------------------------------------- kmeans1d


def test_kmeans_symmetric_split():
    part = kmeans1d(np.arange(1.0, 7.0), 2)
    assert part.boundaries[1] == pytest.approx(3.5)
    assert list(part.counts) == [3, 3]


def test_kmeans_two_obvious_clusters():
    v = np.array([0, 0.1, 0.2, 10, 10.1, 10.2])
    part = kmeans1d(v, 2)
    assert 0.2 < part.boundaries[1] < 10
    assert list(part.counts) == [3, 3]


def _top_gap_check(v, part, n_gaps):
    gaps = np.diff(v)
    top = set(np.argsort(gaps)[-n_gaps:])
    for b in part.boundaries[1:-1]:
        j = int(np.searchsorted(v, b)) - 1
        assert v[j] < b < v[j + 1]
        assert j in top


def test_kmeans_planted_clusters_256():
    rng = np.random.default_rng(7)
    sizes = np.full(8, 32)
    v, _ = planted_clusters(rng, 8, sizes)
    assert v.size == 256
    part = kmeans1d(v, 8)
    assert part.k == 8
    _top_gap_check(v, part, 7)


def test_kmeans_planted_clusters_uneven():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 12))
        sizes = rng.integers(1, 60, k)
        v, _ = planted_clusters(rng, k, sizes)
        part = kmeans1d(v, k)
        assert part.k == k
        _top_gap_check(v, part, k - 1)


def test_kmeans_rejects_bad_input():
    with pytest.raises(ValueError):
        kmeans1d(np.array([2.0, 1.0]), 1)
    with pytest.raises(ValueError):
        kmeans1d(np.array([1.0, 2.0]), 3)
    with pytest.raises(ValueError):
        kmeans1d(np.array([]), 1)


def test_kmeans_fewer_distinct_values_warns():
    part = kmeans1d(np.array([1.0, 1.0, 1.0, 5.0]), 3)
    assert part.k == 2
    assert part.warning is not None
    assert list(part.counts) == [3, 1]


def test_kmeans_explicit_outer_bounds():
    v = np.array([1.0, 2.0, 8.0, 9.0])
    part = kmeans1d(v, 2, lower=0.0, upper=10.0)
    assert part.boundaries[0] == 0.0 and part.boundaries[-1] == 10.0
    assert part.counts.sum() == 4


@st.composite
def sorted_values(draw, max_n=80):
    n = draw(st.integers(1, max_n))
    vals = draw(
        st.lists(
            st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
            min_size=n,
            max_size=n,
        )
    )
    return np.sort(np.array(vals))


@given(sorted_values(), st.integers(1, 12))
def test_kmeans_groups_contiguous(v, k):
    k = min(k, v.size)
    part = kmeans1d(v, k)
    assert np.all(np.diff(part.boundaries) > 0)
    assert part.counts.sum() == v.size
    groups = _groups(v, part)
    assert [g.size for g in groups] == list(part.counts)
    for left, right, b in zip(groups[:-1], groups[1:], part.boundaries[1:-1]):
        assert left.size and right.size
        assert left.max() < b < right.min()


@given(st.integers(1, 500), st.integers(1, 40))
def test_balanced_init(n, k):
    k = min(k, n)
    sizes = np.diff(balanced_splits(n, k))
    assert sizes.sum() == n
    assert sizes.max() - sizes.min() <= 1
    big = n - (n // k) * k
    assert np.sum(sizes == n // k + 1) == big


@pytest.mark.filterwarnings("ignore:only .* separable groups")
@given(st.data())
def test_kmeans_keeps_tight_pairs_together(data):
    n = data.draw(st.integers(2, 60))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    v = np.sort(rng.uniform(0, 10, n))
    # make some neighbours nearly coincide
    tight = rng.random(n - 1) < 0.4
    for i in np.flatnonzero(tight):
        v[i + 1] = v[i] + rng.uniform(0, 0.5 * CLUSTER_GAP)
    v = np.sort(v)
    k = data.draw(st.integers(1, n))
    part = kmeans1d(v, k)
    gaps = np.diff(v)
    for b in part.boundaries[1:-1]:
        j = int(np.searchsorted(v, b)) - 1
        assert gaps[j] >= CLUSTER_GAP


@given(st.integers(0, 10_000), st.integers(1, 16))
def test_kmeans_work_per_iteration_linear(seed, extra):
    rng = np.random.default_rng(seed)
    n_clusters = int(rng.integers(1, 16))
    v, _ = planted_clusters(rng, n_clusters, rng.integers(1, 60, n_clusters))
    k = min(v.size, extra)
    c = OpCounter()
    kmeans1d(v, k, counter=c)
    assert c.per_iteration()
    assert max(c.per_iteration()) <= OPS_CONSTANT * (v.size + k)


def test_spectrum_partition_validation():
    with pytest.raises(ValueError):
        SpectrumPartition(np.array([0.0, 1.0]), np.array([1, 2]), "x")
    with pytest.raises(ValueError):
        SpectrumPartition(np.array([1.0, 0.0]), np.array([1]), "x")


# ----------------------------------------------------------- compute_bounds


def test_bounds_from_exact_priors():
    A = random_hermitian(60, seed=3)
    D, _ = band_reduce(A, 6)
    exact = jacobi_values_of(D.to_dense())
    b0, bk = compute_bounds(exact, 15, D)
    assert inertia(D, b0).n_neg == 0
    assert inertia(D, bk).n_neg == 15
    assert np.sum((exact >= b0) & (exact < bk)) == 15


def test_bounds_alpha_zero_collision(monkeypatch):
    D = BandedHermitian.diagonal(np.arange(1.0, 11.0))
    calls = []
    real = P.inertia

    def counting(D_, s, *a, **kw):
        calls.append(s)
        return real(D_, s, *a, **kw)

    monkeypatch.setattr(P, "inertia", counting)
    b0, bk = compute_bounds(np.arange(1.0, 11.0), 4, D, BoundConfig(alpha=0.0, beta=1e-3))
    # first probe sits on the eigenvalue, the single widening succeeds
    assert calls[0] == 4.0
    assert calls[1] == pytest.approx(4.0 * (1 + 1e-3))
    assert bk == pytest.approx(4.0 * (1 + 1e-3))
    assert real(D, bk).n_neg == 4
    assert b0 < 1.0


def test_bounds_negative_values():
    D = BandedHermitian.diagonal(np.arange(-5.0, 5.0))
    b0, bk = compute_bounds(np.arange(-5.0, 5.0), 3, D)
    assert bk > -3.0 and b0 < -5.0
    assert inertia(D, bk).n_neg == 3
    assert inertia(D, b0).n_neg == 0


def test_bounds_zero_prior_value():
    D = BandedHermitian.diagonal(np.array([-1.0, 0.0, 1.0, 2.0]))
    b0, bk = compute_bounds(np.array([-1.0, 0.0, 1.0, 2.0]), 2, D)
    assert 0.0 < bk < 1.0
    assert inertia(D, bk).n_neg == 2


def test_bounds_widen_for_drifted_priors():
    D = BandedHermitian.diagonal(np.arange(1.0, 11.0) + 0.003)
    b0, bk = compute_bounds(np.arange(1.0, 11.0), 5, D)
    assert inertia(D, bk).n_neg >= 5
    assert inertia(D, b0).n_neg == 0


def test_bounds_budget_exhausted():
    D = BandedHermitian.diagonal(np.arange(1.0, 11.0) + 5.0)
    with pytest.raises(BoundsError, match="fall back"):
        compute_bounds(np.arange(1.0, 11.0), 3, D, BoundConfig(max_attempts=2))


def test_bound_config_cap():
    with pytest.raises(ValueError):
        BoundConfig(alpha=0.2)


def test_bounds_need_enough_priors():
    D = BandedHermitian.diagonal(np.arange(5.0))
    with pytest.raises(ValueError):
        compute_bounds(np.arange(3.0), 4, D)


# ------------------------------------------------- cold partition by inertia


@pytest.mark.parametrize("n,nev,k,first", [(40, 10, 3, 0), (80, 80, 4, 0), (60, 20, 5, 7), (30, 1, 1, 0)])
def test_cold_partition_inertia_consistent(n, nev, k, first):
    A = random_hermitian(n, seed=n + nev)
    D, _ = band_reduce(A, 5)
    ref = jacobi_values_of(D.to_dense())
    b0, bk = window_by_inertia(D, nev, first)
    inside = (ref >= b0) & (ref < bk)
    assert np.flatnonzero(inside).tolist() == list(range(first, first + nev))
    part = inertia_bisection(D, b0, bk, nev, k)
    cap = int(1.5 * np.ceil(nev / k))
    assert part.counts.max() <= cap
    for (a, b), c in zip(part.slices(), part.counts):
        assert c == np.sum((ref >= a) & (ref < b))
        assert c == inertia(D, b).n_neg - inertia(D, a).n_neg


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_kmeans_partition_inertia_consistent(seed, k):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 40))
    A = random_hermitian(n, seed=seed, is_real=bool(seed % 2))
    D, _ = band_reduce(A, 3)
    ref = jacobi_values_of(D.to_dense())
    priors = np.sort(ref + rng.normal(0, 1e-6, n))
    nev = int(rng.integers(k, n + 1))
    b0, bk = compute_bounds(priors, nev, D)
    sel = priors[(priors >= b0) & (priors < bk)]
    part = kmeans1d(sel, min(k, sel.size), lower=b0, upper=bk)
    for a, b in part.slices():
        assert inertia(D, b).n_neg - inertia(D, a).n_neg == np.sum((ref >= a) & (ref < b))
    assert np.sum((ref >= b0) & (ref < bk)) >= nev


# ---------------------------------------------------------- validate_counts


def _setup_slices(n=100, nev=30, k=3, seed=11):
    A = random_hermitian(n, seed=seed)
    D, _ = band_reduce(A, 6)
    b0, bk = window_by_inertia(D, nev)
    part = inertia_bisection(D, b0, bk, nev, k)
    filters = [ContourFilter(D, make_contour(a, b, 16)) for a, b in part.slices()]
    return D, part, filters


def _solve(D, filters, i, m_i, m0=None, X0=None, seed=0):
    cfg = SliceSolveConfig(m_i=int(m_i), m0=m0, X0=X0, seed=seed)
    return feast_slice(D, filters[i].q, cfg, filt=filters[i])


def test_validate_exact_slices_no_inertia():
    D, part, filters = _setup_slices()
    results = [_solve(D, filters, i, c) for i, c in enumerate(part.counts)]
    rerun_calls = []
    out = validate_counts(results, 30, D, part, lambda *a: rerun_calls.append(a))
    assert out.inertia_calls == 0 and out.rounds == 0 and not rerun_calls
    assert out.pairs.count == 30


def test_validate_recovers_undercount():
    D, part, filters = _setup_slices()
    ref = jacobi_values_of(D.to_dense())[:30]
    truth = part.counts
    bad = int(np.argmax(truth))
    results = [
        _solve(D, filters, i, c, m0=int(c) - 2 if i == bad else None) for i, c in enumerate(truth)
    ]
    assert results[bad].m_found < truth[bad] or not results[bad].converged

    def rerun(i, m, m0):
        assert m0 >= max(int(np.ceil(1.3 * m)), m + 10) or m0 == D.n
        return _solve(D, filters, i, m, m0=m0, seed=1)

    out = validate_counts([r for r in results], 30, D, part, rerun)
    assert 1 <= out.rounds <= 2
    assert out.inertia_calls == part.k + 1
    assert list(out.exact_counts) == list(truth)
    assert np.allclose(out.pairs.values, ref, atol=1e-9)


def test_validate_truncates_extra_pairs():
    D, part, filters = _setup_slices()
    results = [_solve(D, filters, i, c) for i, c in enumerate(part.counts)]
    total = sum(r.m_found for r in results)
    out = validate_counts(results, total - 5, D, part, None)
    ref = jacobi_values_of(D.to_dense())[: total - 5]
    assert out.pairs.count == total - 5
    assert np.allclose(out.pairs.values, ref, atol=1e-9)


def test_validate_gives_up_after_two_rounds():
    D, part, filters = _setup_slices()
    results = [_solve(D, filters, i, c) for i, c in enumerate(part.counts)]
    results[0].pairs = type(results[0].pairs)(results[0].pairs.values[:-1], results[0].pairs.vectors[:, :-1])
    stuck = results[0]
    with pytest.raises(ValidationError) as info:
        validate_counts(results, 30, D, part, lambda i, m, m0: stuck)
    assert info.value.deficient[0][0] == 0
    assert "slice 0" in str(info.value)

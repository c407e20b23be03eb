"""Reference answers computed independently of the pipeline.

Eigenvalues come from the in-package cyclic Jacobi solver run on the dense
matrix; the pipeline itself never calls it (its Rayleigh-Ritz step uses
LAPACK), so agreement between the two is a genuine cross-check.
"""

from functools import lru_cache

import numpy as np

from bandslice.jacobi import jacobi_eigh
from bandslice.linalg import random_hermitian


@lru_cache(maxsize=None)
def jacobi_values(n, seed, is_real=False):
    A = random_hermitian(n, seed=seed, is_real=is_real)
    w, _ = jacobi_eigh(A.data)
    return w


def jacobi_values_of(M):
    w, _ = jacobi_eigh(np.asarray(M))
    return w


def relative_error(got, ref):
    """Max abs difference scaled by the largest eigenvalue magnitude."""
    got, ref = np.sort(np.asarray(got)), np.sort(np.asarray(ref))
    scale = max(np.max(np.abs(ref)), np.finfo(float).tiny)
    return float(np.max(np.abs(got - ref)) / scale)


def multiset_match(got, ref, rtol):
    """True when ``got`` and ``ref`` agree one-to-one within ``rtol`` (relative to max |ref|)."""
    got, ref = np.sort(np.asarray(got)), np.sort(np.asarray(ref))
    if got.size != ref.size:
        return False
    return relative_error(got, ref) <= rtol if got.size else True


def planted_clusters(rng, n_clusters, sizes, gap_ratio=100.0, width=1e-3):
    """Ascending values in ``n_clusters`` tight groups; gaps exceed ``gap_ratio`` x cluster width."""
    # consecutive clusters are separated by at least gap_ratio * width
    centers = np.cumsum(rng.uniform(1.0, 2.0, n_clusters) * gap_ratio * width + width)
    vals = [c + rng.uniform(0, width, s) for c, s in zip(centers, sizes)]
    return np.sort(np.concatenate(vals)), centers

"""Spectrum-slicing eigensolver for dense Hermitian matrices.

Dense matrices are first reduced to band form.  The wanted part of the
banded spectrum is then split into slices solved independently by contour
integration, and the eigenvectors are mapped back through the reduction.
"""

from .bandsolve import Inertia, ShiftedBandFactor, SingularShiftError, band_lu_factor, band_solve, inertia
from .feast import ContourQuadrature, SliceResult, SliceSolveConfig, feast_slice, make_contour, subspace_size
from .io import load_matrix, read_values, write_raw, write_values
from .jacobi import jacobi_eigh
from .layout import (
    BlockCyclicLayout,
    Irregular1DLayout,
    ProcessGrid,
    TrafficReport,
    gather_band_to_compact,
    naive_redistribute_oracle,
    redistribute_1d_to_2d,
    redistribute_2d_to_1d,
)
from .linalg import (
    AccuracyReport,
    BandedHermitian,
    BandReductionTransform,
    DenseHermitian,
    EigenPairs,
    accuracy_report,
    backtransform,
    band_reduce,
    perturb_sequence,
    random_hermitian,
)
from .partition import (
    BoundConfig,
    SpectrumPartition,
    compute_bounds,
    inertia_bisection,
    kmeans1d,
    validate_counts,
    window_by_inertia,
)
from .pipeline import PipelineConfig, PipelineError, ScfState, StepReport, solve_one, solve_sequence

__version__ = "0.1.0"

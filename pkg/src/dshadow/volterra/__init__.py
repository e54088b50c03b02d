"""Infinite-delay convolution equations ``x(n+1) = sum_j A(j) x(n-j)``."""

from dshadow.volterra.decomposition import (
    ResonantGrowthReport,
    SpectralDecomposition,
    coordinate_consistency,
    coordinate_dynamics,
    project_cu,
    resonant_forcing,
    resonate,
    spectral_decomposition,
)
from dshadow.volterra.kernel import VolterraKernel, char_derivative, char_det, char_matrix, char_tail_bound
from dshadow.volterra.roots import Spectrum, default_annulus, find_roots, winding_number
from dshadow.volterra.solution import (
    VocResult,
    adjoint_step,
    bilinear,
    bilinear_bound,
    forced_recursion,
    pair_arrays,
    voc_simulate,
    volterra_step,
)

__all__ = [
    "VolterraKernel",
    "char_matrix",
    "char_derivative",
    "char_det",
    "char_tail_bound",
    "Spectrum",
    "find_roots",
    "default_annulus",
    "winding_number",
    "volterra_step",
    "adjoint_step",
    "bilinear",
    "pair_arrays",
    "bilinear_bound",
    "VocResult",
    "voc_simulate",
    "forced_recursion",
    "SpectralDecomposition",
    "spectral_decomposition",
    "project_cu",
    "coordinate_dynamics",
    "coordinate_consistency",
    "ResonantGrowthReport",
    "resonant_forcing",
    "resonate",
]

"""Simulation and diagnostics toolkit for covariance-based normal
approximation of sums of dependent triangular arrays.

Subpackages: ``models`` (seeded generators), ``affinity`` (affinity-set
recipes), ``diagnostics`` (covariance-sum conditions and scaling verdicts),
``normality`` (whitened-sum distribution checks), ``apps`` (applied
estimators), ``cli`` (config-driven runner), ``kernels`` (hot loops with a
compiled backend and a pure-Python fallback).
"""

__version__ = "0.1.0"

from . import errors
from .core import (
    AffinityMap,
    CovKernel,
    OmegaMatrix,
    SampleArray,
    empirical_cov_kernel,
    inverse_sqrt,
    matrix_sqrt,
    omega_from_kernel,
    sum_vector,
    whiten,
)

__all__ = [
    "__version__",
    "errors",
    "SampleArray",
    "AffinityMap",
    "CovKernel",
    "OmegaMatrix",
    "sum_vector",
    "omega_from_kernel",
    "empirical_cov_kernel",
    "whiten",
    "inverse_sqrt",
    "matrix_sqrt",
]

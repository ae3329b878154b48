"""Global tests for CEF and density discontinuities along multivariate RD boundaries.

The heavy per-tree kernels live in a compiled extension; when it is not
built, a pure-Python implementation with identical results is used
instead.  ``rdglobal.BACKEND`` names the one in use, and setting
``RDGLOBAL_BACKEND=python`` forces the fallback.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .data import Dataset, read_csv
from .errors import (
    ConfigurationError,
    DataError,
    DegenerateDataError,
    EmptyNeighborhoodError,
    NumericalError,
    RdGlobalError,
)
from .forest_density import DensityParams, estimate_lambda, side_densities
from .forest_regression import ForestParams, boundary_contrast, estimate_gamma, fit_forest, llf_predict
from .geometry import BoundaryGeometry, HalfspaceRule, PolygonRule, quadrant_boundary, read_boundary_file
from .global_test import (
    CrossfitPlan,
    DensityTestParams,
    HetParams,
    TestResult,
    density_test,
    distance_rd,
    heterogeneity_test,
    make_plan,
)
from .simulation import DgpSpec, McConfig, McReport, generate, run_monte_carlo

__all__ = [
    "BACKEND",
    "BoundaryGeometry",
    "ConfigurationError",
    "CrossfitPlan",
    "DataError",
    "Dataset",
    "DegenerateDataError",
    "DensityParams",
    "DensityTestParams",
    "DgpSpec",
    "EmptyNeighborhoodError",
    "ForestParams",
    "HalfspaceRule",
    "HetParams",
    "McConfig",
    "McReport",
    "NumericalError",
    "PolygonRule",
    "RdGlobalError",
    "TestResult",
    "boundary_contrast",
    "density_test",
    "distance_rd",
    "estimate_gamma",
    "estimate_lambda",
    "fit_forest",
    "generate",
    "heterogeneity_test",
    "llf_predict",
    "make_plan",
    "quadrant_boundary",
    "read_boundary_file",
    "read_csv",
    "run_monte_carlo",
    "side_densities",
]

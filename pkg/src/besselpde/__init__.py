"""Bessel semigroup of low dimension and a Picard solver for the semilinear
backward Kolmogorov equation it drives, with Monte Carlo cross-checks."""

from ._version import __version__
from .config import RunConfig, load_config, parse_config
from .estimators import BesselSemigroup, PicardSolver
from .montecarlo import MCEstimate, PathEnsemble, feynman_kac, martingale_defect, sample_euler, sample_exact
from .mspace import Grid, GridFunction, SobolevNorms, TestFunction, inner_mu, make_grid, norms
from .semigroup import KernelMatrix, KernelParams, apply, apply_dx, build_kernel_matrix, kernel_density, kernel_dx
from .solver import SemilinearProblem, SolverReport, SpaceTimeFunction, TimeMesh, solve
from .specfn import BesselOrder, bessel_i_scaled, beta, log_gamma

__all__ = [
    "__version__",
    "BesselOrder",
    "bessel_i_scaled",
    "beta",
    "log_gamma",
    "Grid",
    "GridFunction",
    "SobolevNorms",
    "TestFunction",
    "make_grid",
    "inner_mu",
    "norms",
    "KernelParams",
    "KernelMatrix",
    "kernel_density",
    "kernel_dx",
    "build_kernel_matrix",
    "apply",
    "apply_dx",
    "SemilinearProblem",
    "TimeMesh",
    "SpaceTimeFunction",
    "SolverReport",
    "solve",
    "PathEnsemble",
    "MCEstimate",
    "sample_exact",
    "sample_euler",
    "feynman_kac",
    "martingale_defect",
    "RunConfig",
    "load_config",
    "parse_config",
    "BesselSemigroup",
    "PicardSolver",
]

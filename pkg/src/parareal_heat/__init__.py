"""Parareal for the 2D heat equation with strip-wise and time-dependent diffusion."""

__version__ = "0.1.0"

from .errors import (
    AssemblyError,
    ConfigurationError,
    GeometryError,
    PararealHeatError,
    SolverError,
    UnsupportedConfigurationError,
)
from .fem import DiscreteSystem, InitialCondition, StripCoefficients, assemble, project_initial_condition
from .integrators import Method, NuKind, NuProfile, Propagator, propagate
from .mesh import Mesh, StripGeometry, build_strip_mesh, mesh_width_stats, refine_uniform
from .parareal import PararealConfig, PararealState, TimeSlicePartition, run
from .spectral import IterationOperator, build_propagator_matrix, check_nilpotent, estimate_sigma_max
from .sparse import SolverConfig, SparseMatrix

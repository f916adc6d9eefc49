"""qfd: grid-based quantum hydrodynamics and trajectory simulation."""

__version__ = "0.1.0"

from .grids import Grid1D, Grid2D, PERIODIC, DIRICHLET
from .fields import ComplexField, RealField, gradient, laplacian, integrate, HBAR
from .potentials import PotentialSpec
from .propagator import PropagatorConfig, Propagator, propagate, step

__all__ = [
    "Grid1D", "Grid2D", "PERIODIC", "DIRICHLET",
    "ComplexField", "RealField", "gradient", "laplacian", "integrate", "HBAR",
    "PotentialSpec", "PropagatorConfig", "Propagator", "propagate", "step",
    "__version__",
]

"""Field containers and second-order finite-difference operators.

All quantities use atomic units (hbar = m_e = 1). Fields are value types:
operations return new fields and never mutate their inputs.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from .grids import DIRICHLET, PERIODIC, Grid1D, Grid2D

HBAR = 1.0

Grid = Union[Grid1D, Grid2D]


def _check_shape(grid, values):
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} does not match grid shape {grid.shape}")


@dataclass(frozen=True)
class RealField:
    """Real scalar samples on a grid (density, potential, velocity, ...).

    NaN entries are permitted only where a consumer has explicitly masked
    the field (e.g. quantum potential inside nodal regions).
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        _check_shape(self.grid, self.values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, fn):
        if grid.ndim == 1:
            return cls(grid, fn(grid.x))
        return cls(grid, fn(*grid.meshgrid()))


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude samples on a grid (a discretized wavefunction)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.complex128))
        _check_shape(self.grid, self.values)

    @classmethod
    def from_function(cls, grid, fn):
        if grid.ndim == 1:
            return cls(grid, fn(grid.x))
        return cls(grid, fn(*grid.meshgrid()))

    def norm_sq(self):
        """Sum |psi_i|^2 * cell volume (the norm the propagators conserve)."""
        return float(np.sum(np.abs(self.values) ** 2).real * self.grid.cell_volume)

    def normalize(self):
        n2 = self.norm_sq()
        if n2 <= 0 or not np.isfinite(n2):
            raise ValueError(f"cannot normalize field with |psi|^2 sum {n2}")
        return ComplexField(self.grid, self.values / np.sqrt(n2))

    def density(self):
        return RealField(self.grid, np.abs(self.values) ** 2)


Field = Union[RealField, ComplexField]


def _axis_meta(grid, axis):
    if grid.ndim == 1:
        if axis != 0:
            raise ValueError(f"axis {axis} out of range for 1D grid")
        return grid.dx, grid.boundary
    g = grid.axis_grid(axis)
    return g.dx, g.boundary


def _gradient_values(f, dx, boundary, axis):
    out = (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * dx)
    if boundary == DIRICHLET:
        # one-sided second-order stencils replace the wrapped endpoints
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim

        def at(sl, i):
            sl[axis] = i
            return tuple(sl)

        out[at(lo, 0)] = (-3.0 * f[at(lo, 0)] + 4.0 * f[at(lo, 1)] - f[at(lo, 2)]) / (2.0 * dx)
        out[at(hi, -1)] = (3.0 * f[at(hi, -1)] - 4.0 * f[at(hi, -2)] + f[at(hi, -3)]) / (2.0 * dx)
    return out


def _laplacian_values_axis(f, dx, boundary, axis):
    out = (np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)) / (dx * dx)
    if boundary == DIRICHLET:
        sl = [slice(None)] * f.ndim

        def at(i):
            s = list(sl)
            s[axis] = i
            return tuple(s)

        out[at(0)] = (2.0 * f[at(0)] - 5.0 * f[at(1)] + 4.0 * f[at(2)] - f[at(3)]) / (dx * dx)
        out[at(-1)] = (2.0 * f[at(-1)] - 5.0 * f[at(-2)] + 4.0 * f[at(-3)] - f[at(-4)]) / (dx * dx)
    return out


def gradient(field, axis=0):
    """Central second-order derivative along one axis.

    Periodic axes wrap around; Dirichlet axes use one-sided second-order
    stencils at the two edge points.
    """
    dx, boundary = _axis_meta(field.grid, axis)
    vals = _gradient_values(field.values, dx, boundary, axis)
    return type(field)(field.grid, vals)


def laplacian(field):
    """3-point (1D) / 5-point (2D) second-order Laplacian."""
    grid = field.grid
    if grid.ndim == 1:
        vals = _laplacian_values_axis(field.values, grid.dx, grid.boundary, 0)
    else:
        vals = _laplacian_values_axis(field.values, grid.gx.dx, grid.gx.boundary, 0)
        vals = vals + _laplacian_values_axis(field.values, grid.gy.dx, grid.gy.boundary, 1)
    return type(field)(grid, vals)


def laplacian_axis(field, axis):
    """Second derivative along a single axis of a 2D field."""
    dx, boundary = _axis_meta(field.grid, axis)
    return type(field)(field.grid, _laplacian_values_axis(field.values, dx, boundary, axis))


def integration_weights(grid):
    """Quadrature weights: plain Riemann on periodic axes, trapezoid edge
    halving on Dirichlet axes."""

    def axis_w(g):
        w = np.full(g.n_points, g.dx)
        if g.boundary == DIRICHLET:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    if grid.ndim == 1:
        return axis_w(grid)
    return np.outer(axis_w(grid.gx), axis_w(grid.gy))


def integrate(field):
    """Integral of a real field over its grid."""
    return float(np.sum(integration_weights(field.grid) * field.values))


def inner(f, g):
    """<f|g> with the plain cell-volume measure (matches norm_sq)."""
    return complex(np.sum(np.conj(f.values) * g.values) * f.grid.cell_volume)

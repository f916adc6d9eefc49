"""Uniform 1D/2D grids with periodic or Dirichlet boundaries."""

from dataclasses import dataclass

import numpy as np

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
_BOUNDARIES = (PERIODIC, DIRICHLET)


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid x(i) = x_min + i*dx, i in [0, n_points).

    For periodic boundaries the box length is n_points*dx (the point at
    x_min + n_points*dx is identified with x_min). For Dirichlet, the
    wavefunction is held at zero on ghost points just outside the grid.
    """

    n_points: int
    x_min: float
    dx: float
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.n_points < 8:
            raise ValueError(f"n_points must be >= 8, got {self.n_points}")
        if not self.dx > 0:
            raise ValueError(f"dx must be > 0, got {self.dx}")
        if self.boundary not in _BOUNDARIES:
            raise ValueError(f"boundary must be one of {_BOUNDARIES}, got {self.boundary!r}")

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def length(self):
        """Box length (periodic identification length for periodic grids)."""
        return self.n_points * self.dx

    @property
    def cell_volume(self):
        return self.dx

    @property
    def shape(self):
        return (self.n_points,)

    @property
    def ndim(self):
        return 1

    @classmethod
    def from_extent(cls, n_points, x_min, x_max, boundary=PERIODIC):
        """Grid covering [x_min, x_max): dx = (x_max - x_min)/n_points."""
        dx = (x_max - x_min) / n_points
        return cls(n_points=n_points, x_min=x_min, dx=dx, boundary=boundary)


@dataclass(frozen=True)
class Grid2D:
    """Tensor product of two 1D grids.

    Axis 0 is gx (first coordinate), axis 1 is gy (second coordinate);
    in two-particle configuration space these are particle 1 and particle 2.
    """

    gx: Grid1D
    gy: Grid1D

    @property
    def shape(self):
        return (self.gx.n_points, self.gy.n_points)

    @property
    def n_total(self):
        return self.gx.n_points * self.gy.n_points

    @property
    def cell_volume(self):
        return self.gx.dx * self.gy.dx

    @property
    def ndim(self):
        return 2

    def meshgrid(self):
        """(X, Y) coordinate arrays of shape (nx, ny)."""
        return np.meshgrid(self.gx.x, self.gy.x, indexing="ij")

    def axis_grid(self, axis):
        if axis == 0:
            return self.gx
        if axis == 1:
            return self.gy
        raise ValueError(f"axis must be 0 or 1, got {axis}")

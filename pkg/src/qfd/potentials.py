"""External potential specifications evaluable on any grid at any time."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fields import RealField

FREE = "free"
HARMONIC = "harmonic"
GAUSSIAN_BARRIER = "gaussian_barrier"
DOUBLE_SLIT_2D = "double_slit_2d"
CUSTOM_TABLE = "custom_table"


@dataclass(frozen=True)
class PotentialSpec:
    """A named analytic potential family or a tabulated potential, with an
    optional time-dependent scaling envelope f(t)."""

    kind: str
    params: dict = field(default_factory=dict)
    envelope: Optional[Callable[[float], float]] = None

    @classmethod
    def free(cls):
        return cls(FREE)

    @classmethod
    def harmonic(cls, omega, center=0.0):
        return cls(HARMONIC, {"omega": float(omega), "center": float(center)})

    @classmethod
    def gaussian_barrier(cls, height, width, center=0.0):
        return cls(GAUSSIAN_BARRIER,
                   {"height": float(height), "width": float(width), "center": float(center)})

    @classmethod
    def double_slit_2d(cls, height, center_x, thickness, slit_separation, slit_width):
        return cls(DOUBLE_SLIT_2D, {
            "height": float(height), "center_x": float(center_x),
            "thickness": float(thickness), "slit_separation": float(slit_separation),
            "slit_width": float(slit_width)})

    @classmethod
    def custom_table(cls, table: RealField):
        return cls(CUSTOM_TABLE, {"table": table})

    def with_envelope(self, envelope):
        return PotentialSpec(self.kind, self.params, envelope)

    @property
    def is_static(self):
        return self.envelope is None

    def _base_values(self, grid):
        p = self.params
        if self.kind == FREE:
            return np.zeros(grid.shape)
        if self.kind == HARMONIC:
            c, w = p["center"], p["omega"]
            if grid.ndim == 1:
                return 0.5 * w * w * (grid.x - c) ** 2
            X, Y = grid.meshgrid()
            return 0.5 * w * w * ((X - c) ** 2 + (Y - c) ** 2)
        if self.kind == GAUSSIAN_BARRIER:
            h, w, c = p["height"], p["width"], p["center"]
            if grid.ndim == 1:
                return h * np.exp(-((grid.x - c) ** 2) / (2.0 * w * w))
            X, _ = grid.meshgrid()
            return h * np.exp(-((X - c) ** 2) / (2.0 * w * w))
        if self.kind == DOUBLE_SLIT_2D:
            if grid.ndim != 2:
                raise ValueError("double_slit_2d requires a 2D grid")
            X, Y = grid.meshgrid()
            in_wall = np.abs(X - p["center_x"]) <= 0.5 * p["thickness"]
            in_slit = np.abs(np.abs(Y) - 0.5 * p["slit_separation"]) <= 0.5 * p["slit_width"]
            return np.where(in_wall & ~in_slit, p["height"], 0.0)
        if self.kind == CUSTOM_TABLE:
            table = p["table"]
            if table.grid.shape != grid.shape:
                raise ValueError("custom_table grid does not match target grid")
            return table.values
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def evaluate(self, grid, t=0.0):
        """Potential values on the grid at time t (hartree)."""
        vals = self._base_values(grid)
        if self.envelope is not None:
            scale = float(self.envelope(t))
            if not np.isfinite(scale):
                raise ValueError(f"potential envelope is non-finite at t={t}")
            vals = vals * scale
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"potential {self.kind!r} produced non-finite values at t={t}")
        return vals

    def as_field(self, grid, t=0.0):
        return RealField(grid, self.evaluate(grid, t))

"""qfd-plotkit: deterministic figures from qfd artifact directories."""

__version__ = "0.1.0"

from .render import KINDS, PlotSpec, render

__all__ = ["PlotSpec", "render", "KINDS", "__version__"]

"""Numerical laboratory for the fractional p-Laplacian Dirichlet problem on an interval."""

from fracp.grid import Grid, KernelWeights, build_grid, kernel_weights
from fracp.reaction import ReactionSpec, make_reaction, truncate

__all__ = [
    "Grid",
    "KernelWeights",
    "ReactionSpec",
    "build_grid",
    "kernel_weights",
    "make_reaction",
    "truncate",
]

__version__ = "0.1.0"

"""Uniform midpoint discretization of an interval and the kernel data of the
fractional Gagliardo energy.

The state is a vector of cell values on ``(a, b)``; everything outside the
interval is zero. Interior pairs interact through ``W`` and each cell talks to
the (zero) exterior through the closed-form tail weight ``rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid discretization parameters."""


@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    n: int
    s: float
    p: float
    h: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = (self.b - self.a) / self.n
        x = self.a + (np.arange(self.n) + 0.5) * h
        x.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "x", x)

    @property
    def ps(self) -> float:
        return self.p * self.s

    @property
    def p_star(self) -> float:
        """Fractional Sobolev exponent p/(1 - ps) in one dimension (inf if ps >= 1)."""
        if self.ps >= 1.0:
            return math.inf
        return self.p / (1.0 - self.ps)

    @property
    def diam(self) -> float:
        return self.b - self.a

    @property
    def subcritical(self) -> bool:
        return self.ps < 1.0

    def refine(self) -> "Grid":
        """Same domain and exponents with half the cell width."""
        return Grid(self.a, self.b, 2 * self.n, self.s, self.p)


@dataclass(frozen=True)
class KernelWeights:
    """Pair weights ``W``, exterior tail weights ``rho`` and boundary weights ``ds``.

    ``form2`` is the symmetric matrix ``B`` with ``u @ B @ u`` equal to the
    discrete seminorm at p = 2. It is the exact quadratic form there and a
    fixed Riesz-map preconditioner for every other p.
    """

    W: np.ndarray
    rho: np.ndarray
    ds: np.ndarray
    form2: np.ndarray


def build_grid(a: float, b: float, n: int, s: float, p: float, strict: bool = True) -> Grid:
    """Midpoint grid on ``(a, b)`` with ``n`` cells.

    With ``strict`` the one-dimensional scaling condition ``p*s < 1`` is
    enforced. ``strict=False`` admits ``p*s >= 1``, where the Sobolev exponent
    is infinite and every power growth is subcritical.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
        raise GridError(f"need a < b, got a={a}, b={b}")
    if int(n) != n or n < 2:
        raise GridError(f"need an integer n >= 2, got {n}")
    if not 0.0 < s < 1.0:
        raise GridError(f"need 0 < s < 1, got {s}")
    if not p > 1.0:
        raise GridError(f"need p > 1, got {p}")
    if strict and p * s >= 1.0:
        raise GridError(f"supercritical scaling for N = 1: p*s = {p * s:g} >= 1")
    return Grid(float(a), float(b), int(n), float(s), float(p))


def exterior_weight(x, a: float, b: float, ps: float):
    """Exact value of the integral of |x - y|^-(1+ps) over y outside (a, b)."""
    x = np.asarray(x, dtype=float)
    return ((b - x) ** (-ps) + (x - a) ** (-ps)) / ps


def kernel_weights(g: Grid) -> KernelWeights:
    x, h, ps = g.x, g.h, g.ps
    dist = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dist, 1.0)
    W = h * h / dist ** (1.0 + ps)
    np.fill_diagonal(W, 0.0)
    # exact symmetry regardless of rounding in the power
    W = 0.5 * (W + W.T)
    rho = exterior_weight(x, g.a, g.b, ps)
    ds = np.minimum(x - g.a, g.b - x) ** g.s

    form2 = -2.0 * W
    form2[np.diag_indices(g.n)] = 2.0 * W.sum(axis=1) + 2.0 * h * rho

    for arr in (W, rho, ds, form2):
        arr.setflags(write=False)
    return KernelWeights(W=W, rho=rho, ds=ds, form2=form2)

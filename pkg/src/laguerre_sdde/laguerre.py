"""Weighted Laguerre basis of L^2_w on the negative half-line.

Basis index ``k`` follows the product-space convention: ``k = 0`` is the
scalar slot e0 = (1, 0) and ``k >= 1`` is (0, L_{k-1}), where

    L_j(xi) = sqrt(2 p0) * P~_j(-2 p0 xi) * exp((p0 - p/2) xi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .weighted_space import WeightSpec

__all__ = [
    "laguerre_poly",
    "laguerre_table",
    "basis_eval",
    "basis_matrix",
    "AStarCoefficients",
    "astar_on_basis",
    "laguerre_drift",
]


def laguerre_table(max_degree: int, x) -> np.ndarray:
    """Values of P~_0 .. P~_max_degree at ``x``; shape ``(max_degree + 1, *x.shape)``.

    Uses the three-term recurrence (j+1) P_{j+1} = (2j+1-x) P_j - j P_{j-1}.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("Laguerre polynomials are evaluated on x >= 0")
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = 1.0 - x
    for j in range(1, max_degree):
        out[j + 1] = ((2 * j + 1 - x) * out[j] - j * out[j - 1]) / (j + 1)
    return out


def laguerre_poly(k: int, x):
    """P~_k(x) for x >= 0 (scalar in, scalar out)."""
    if k < 0:
        raise DomainError("degree must be non-negative")
    val = laguerre_table(k, x)[k]
    return float(val) if np.ndim(val) == 0 else val


def basis_matrix(n: int, spec: WeightSpec, xi) -> np.ndarray:
    """Rows are L_0 .. L_{n-1} (function parts of e1 .. en) evaluated at ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi > 0):
        raise DomainError("basis functions live on xi <= 0")
    if n == 0:
        return np.empty((0,) + xi.shape)
    p0, p = spec.p0, spec.p
    poly = laguerre_table(n - 1, -2 * p0 * xi)
    return math.sqrt(2 * p0) * poly * np.exp((p0 - p / 2) * xi)


def basis_eval(k: int, spec: WeightSpec, xi):
    """Function part of basis vector ``e^k`` (k >= 1) at ``xi <= 0``."""
    if k < 1:
        raise DomainError("e^0 has no function part; k must be >= 1")
    val = basis_matrix(k, spec, xi)[k - 1]
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class AStarCoefficients:
    """Expansion of A* e^k = to_e0 e^0 + to_lower (e^1 + .. + e^{k-1}) + to_self e^k."""

    k: int
    to_e0: float
    to_lower: float
    to_self: float

    def row(self, n: int) -> np.ndarray:
        """Coefficients on e^0 .. e^n (zero beyond index k)."""
        out = np.zeros(n + 1)
        if self.k <= n:
            out[0] = self.to_e0
            out[1:self.k] = self.to_lower
            out[self.k] = self.to_self
        return out


def astar_on_basis(k: int, spec: WeightSpec) -> AStarCoefficients:
    """Action of the adjoint generator on ``e^k``.

    With A*(0, f) = (f(0), -f' - p f) and L_j' = (p0 - p/2) L_j + 2 p0 sum_{i<j} L_i,
    the diagonal term is -(p0 + p/2) = -(lam - p/2), strictly negative.
    """
    if k < 1:
        raise DomainError("A* e^0 = 0; k must be >= 1")
    p0, p = spec.p0, spec.p
    return AStarCoefficients(k=k, to_e0=math.sqrt(2 * p0), to_lower=-2 * p0,
                             to_self=-(p0 + p / 2))


def laguerre_drift(n: int, spec: WeightSpec):
    """Drift data ``(q, Q)`` of the auxiliary block dX = (q S + Q X) dt."""
    c = astar_on_basis(1, spec)
    q = np.full(n, c.to_e0)
    Q = np.tril(np.full((n, n), c.to_lower), -1) + c.to_self * np.eye(n)
    return q, Q

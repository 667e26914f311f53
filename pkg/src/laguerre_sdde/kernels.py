"""Delay kernels and their Fourier-Laguerre projections.

A kernel ``k`` enters the dynamics through ``int k(xi) S_{t+xi} w(xi) dxi``,
i.e. it is already divided by the weight.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrabilityError, SpecMismatch
from .exppoly import ExpPolyFunction
from .laguerre import basis_matrix
from .weighted_space import QuadratureRule, WeightSpec, _build_rule, make_quadrature

__all__ = [
    "Kernel",
    "UniformWindow",
    "ExpPolyKernel",
    "Tabulated",
    "Combination",
    "FunctionKernel",
    "Unweighted",
    "ProjectedKernel",
    "kernel_eval",
    "project_kernel",
    "tail_norm_sq",
    "rule_for_kernels",
]

ROLES = ("alpha", "beta", "gamma")


class Kernel:
    """Base class; subclasses implement ``_values`` on xi <= 0 (zero off support)."""

    role: str = "gamma"

    #: lower end of the support, or None for unbounded support
    support: float | None = None

    @property
    def breakpoints(self) -> tuple:
        return ()

    def _values(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, xi):
        return kernel_eval(self, xi)

    def decay_rate(self) -> float | None:
        """Exponential decay rate of |k| at -infinity for unbounded kernels."""
        return None


def kernel_eval(k: Kernel, xi):
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr > 0):
        raise DomainError("kernels are defined on xi <= 0")
    vals = k._values(xi_arr)
    return float(vals) if np.ndim(vals) == 0 else vals


@dataclass(frozen=True)
class UniformWindow(Kernel):
    """``height * 1[-delta, 0]``; the default height 1/delta gives a moving average."""

    delta: float
    height: float | None = None
    role: str = "gamma"

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("window length delta must be positive")
        if self.height is None:
            object.__setattr__(self, "height", 1.0 / self.delta)

    @property
    def support(self):
        return -self.delta

    @property
    def breakpoints(self):
        return (-self.delta,)

    def _values(self, xi):
        return np.where(xi >= -self.delta, self.height, 0.0)


@dataclass(frozen=True)
class ExpPolyKernel(Kernel):
    func: ExpPolyFunction
    role: str = "gamma"

    @classmethod
    def from_terms(cls, terms, role="gamma"):
        return cls(ExpPolyFunction(tuple(terms)), role=role)

    def _values(self, xi):
        return self.func(xi)

    def decay_rate(self):
        return min(mu.real for _, mu, _ in self.func.terms) if self.func.terms else math.inf

    def max_degree(self):
        return max((j for j, _, _ in self.func.terms), default=0)


@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Piecewise-linear kernel on a grid; zero below the first grid point."""

    xi: np.ndarray
    values: np.ndarray
    role: str = "gamma"

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if xi.ndim != 1 or xi.shape != vals.shape or len(xi) < 2:
            raise DomainError("tabulated kernel needs matching 1-d grids with >= 2 points")
        if np.any(np.diff(xi) <= 0) or xi[-1] > 0:
            raise DomainError("tabulated grid must be strictly increasing within xi <= 0")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, f, lower: float, points: int = 2001, role="gamma"):
        grid = np.linspace(lower, 0.0, points)
        return cls(grid, np.asarray(f(grid), dtype=float), role=role)

    @classmethod
    def from_csv(cls, path, role="gamma"):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        arr = np.array(sorted(rows))
        return cls(arr[:, 0], arr[:, 1], role=role)

    @property
    def support(self):
        return float(self.xi[0])

    @property
    def breakpoints(self):
        return (float(self.xi[0]),)

    def _values(self, xi):
        return np.where(xi >= self.xi[0], np.interp(xi, self.xi, self.values), 0.0)

    def __call__(self, xi):
        xi_arr = np.asarray(xi, dtype=float)
        if np.any(xi_arr < self.xi[0]):
            raise DomainError("xi lies outside the tabulated range")
        return kernel_eval(self, xi)


@dataclass(frozen=True, eq=False)
class FunctionKernel(Kernel):
    """Kernel given by a vectorised callable on ``[support, 0]``."""

    func: object
    support: float | None = None
    role: str = "gamma"
    rate: float | None = None

    @property
    def breakpoints(self):
        return () if self.support is None else (self.support,)

    def _values(self, xi):
        vals = np.asarray(self.func(xi), dtype=float)
        if self.support is not None:
            vals = np.where(xi >= self.support, vals, 0.0)
        return vals

    def decay_rate(self):
        return self.rate


@dataclass(frozen=True, eq=False)
class Combination(Kernel):
    """Linear combination ``sum_i a_i k_i``."""

    parts: tuple
    role: str = "gamma"

    @property
    def support(self):
        sups = [k.support for _, k in self.parts]
        return None if any(s is None for s in sups) else min(sups)

    @property
    def breakpoints(self):
        return tuple(sorted({b for _, k in self.parts for b in k.breakpoints}))

    def _values(self, xi):
        out = np.zeros(np.shape(xi))
        for a, k in self.parts:
            out = out + a * k._values(xi)
        return out

    def decay_rate(self):
        rates = [k.decay_rate() for _, k in self.parts if k.support is None]
        if any(r is None for r in rates):
            return None
        return min(rates, default=None)


@dataclass(frozen=True, eq=False)
class Unweighted(Kernel):
    """Kernel given against plain ``dxi``, i.e. ``int k(xi) S_{t+xi} dxi``.

    Stored as ``k(xi) exp(-p xi)`` so that it fits the weighted convention.
    """

    base: Kernel
    p: float
    role: str = "gamma"

    @property
    def support(self):
        return self.base.support

    @property
    def breakpoints(self):
        return self.base.breakpoints

    def _values(self, xi):
        return self.base._values(xi) * np.exp(-self.p * xi)

    def decay_rate(self):
        r = self.base.decay_rate()
        return None if r is None else r - self.p


@dataclass(frozen=True, eq=False)
class ProjectedKernel:
    coeffs: np.ndarray
    n: int
    norm_sq_w: float
    tail_sq: float
    spec: WeightSpec
    tails: np.ndarray = field(repr=False)

    def tail_at(self, m: int) -> float:
        """Clamped tail after keeping coefficients 1..m (m <= n)."""
        return max(float(self.tails[m]), 0.0)


def tail_norm_sq(pk: ProjectedKernel) -> float:
    return max(pk.tail_sq, 0.0)


def rule_for_kernels(spec: WeightSpec, n: int, kernels=(), tail_tol: float = 1e-12,
                     node_count: int | None = None) -> QuadratureRule:
    """Quadrature fine enough for Laguerre degree < n and aligned with kernel jumps."""
    breaks = sorted({b for k in kernels if k is not None for b in k.breakpoints})
    rates = []
    for k in kernels:
        if k is None or k.support is not None:
            continue
        r = k.decay_rate()
        if r is not None:
            # kernel * basis * w decays like exp((mu + p0 + p/2) xi)
            rates.append(r + spec.p0 + spec.p / 2)
    decay = min([2 * spec.p0 + min(spec.p, 0.0), *rates])
    if decay <= 0:
        raise IntegrabilityError(
            f"kernel decay rate {min(rates):g} is too slow: kernel times basis times weight "
            "does not decay, so the kernel is not in the weighted space")
    if node_count is None:
        node_count = max(2000, 160 * n)
    return make_quadrature(spec, node_count, tail_tol, max_degree=max(n - 1, 0),
                           breakpoints=breaks, decay_rate=decay)


def _norm_sq(k: Kernel, spec: WeightSpec, rule: QuadratureRule) -> float:
    v = k._values(rule.nodes)
    return float(np.sum(v * v * (rule.weights * spec.weight(rule.nodes))))


def project_kernel(k: Kernel, n: int, spec: WeightSpec,
                   rule: QuadratureRule | None = None) -> ProjectedKernel:
    """Coefficients ``c^k = <e^k, (0, kernel)>_w`` for k = 0..n (c^0 = 0).

    Raises :class:`IntegrabilityError` when the weighted norm is not stable
    under doubling both the node count and the truncation length.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    if rule is None:
        rule = rule_for_kernels(spec, n, [k])
    for b in k.breakpoints:
        if -rule.cutoff < b < 0 and not rule.has_edge(b):
            raise DomainError(f"quadrature rule has no panel edge at kernel breakpoint {b!r}")
    weighted = k._values(rule.nodes) * (rule.weights * spec.weight(rule.nodes))
    norm_sq = _norm_sq(k, spec, rule)
    if not math.isfinite(norm_sq):
        raise IntegrabilityError("kernel has infinite weighted norm")
    if k.support is None or k.support < -rule.cutoff:
        wide = _build_rule(2 * rule.cutoff, 2 * len(rule.nodes), rule.edges[:-1])
        wide_sq = _norm_sq(k, spec, wide)
        if not math.isfinite(wide_sq) or abs(wide_sq - norm_sq) > 1e-3 * max(abs(norm_sq), 1e-300):
            raise IntegrabilityError(
                f"weighted norm changes from {norm_sq:.6g} to {wide_sq:.6g} when the domain is doubled"
            )
    coeffs = np.zeros(n + 1)
    if n > 0:
        B = basis_matrix(n, spec, rule.nodes)
        coeffs[1:] = np.sum(B * weighted, axis=1)
    tails = norm_sq - np.concatenate([[0.0], np.cumsum(coeffs[1:] ** 2)])
    return ProjectedKernel(coeffs=coeffs, n=n, norm_sq_w=norm_sq, tail_sq=float(tails[-1]),
                           spec=spec, tails=tails)


def check_spec(pk: ProjectedKernel, spec: WeightSpec):
    if pk.spec != spec:
        raise SpecMismatch(f"projection computed for {pk.spec}, system uses {spec}")

"""Exponential weights on the negative half-line and the matching quadrature.

Every projection in the package is an integral of the form

    <f, g>_w = int_{-inf}^0 f(xi) g(xi) exp(p xi) dxi,

which is evaluated with composite Gauss-Legendre panels on a truncated
domain [-cutoff, 0].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaincc, gammaln, roots_legendre

from .errors import DomainError

__all__ = [
    "WeightSpec",
    "QuadratureRule",
    "make_weight",
    "make_quadrature",
    "inner_product_w",
    "norm_sq_w",
]

PANEL_ORDER = 16


@dataclass(frozen=True)
class WeightSpec:
    """Weight ``w(xi) = exp(p xi)`` together with the Laguerre decay ``lam``.

    ``p0 = lam - p`` is the scale of the weighted Laguerre basis.
    """

    p: float
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.lam)):
            raise DomainError("p and lambda must be finite")
        if self.lam <= max(self.p, self.p / 2):
            raise DomainError(
                f"lambda={self.lam!r} violates lambda > max(p, p/2) = "
                f"{max(self.p, self.p / 2)!r} (p={self.p!r})"
            )

    @property
    def p0(self) -> float:
        return self.lam - self.p

    @property
    def lambda_star(self) -> float:
        """Critical exponent: exp(mu xi) w^{-1/2} is in L^2 iff mu > p/2."""
        return self.p / 2

    def weight(self, xi):
        return np.exp(self.p * np.asarray(xi, dtype=float))


def make_weight(p: float, lam: float) -> WeightSpec:
    """Validated constructor; raises :class:`DomainError` unless lam > max(p, p/2)."""
    return WeightSpec(float(p), float(lam))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("nodes", "weights", "edges"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.nodes)

    def has_edge(self, x: float, tol: float = 1e-12) -> bool:
        return bool(np.any(np.abs(self.edges - x) <= tol * max(1.0, abs(x))))

    def refined(self, factor: int = 2) -> "QuadratureRule":
        """Same cutoff and breakpoints with ``factor`` times as many nodes."""
        inner = [e for e in self.edges[1:-1]]
        return _build_rule(self.cutoff, factor * len(self.nodes), inner)


def default_decay_rate(spec: WeightSpec) -> float:
    # basis x basis x w decays like exp(2 p0 xi); p < 0 slows other integrands
    return 2 * spec.p0 + min(spec.p, 0.0)


def _laguerre_tail_bound(degree: int, x: float) -> float:
    """Upper bound of int_x^inf B(t)^2 exp(-t) dt with B(t) = sum_i C(d,i) t^i / i!.

    B dominates |P_d(t)| on t >= 0, so this bounds the neglected mass of any
    product of two weighted Laguerre functions of degree <= d.
    """
    i = np.arange(degree + 1)
    log_a = gammaln(degree + 1) - gammaln(i + 1) - gammaln(degree - i + 1) - gammaln(i + 1)
    s = i[:, None] + i[None, :] + 1
    log_terms = log_a[:, None] + log_a[None, :] + gammaln(s) + np.log(gammaincc(s, x) + 1e-300)
    m = log_terms.max()
    return float(math.exp(m) * np.exp(log_terms - m).sum())


def choose_cutoff(spec: WeightSpec, tail_tol: float, max_degree: int = 0,
                  decay_rate: float | None = None) -> float:
    rate = default_decay_rate(spec) if decay_rate is None else float(decay_rate)
    if not rate > 0:
        raise DomainError(f"integrand decay rate {rate!r} must be positive")
    cutoff = -math.log(tail_tol) / rate
    if max_degree > 0:
        scale = 2 * spec.p0
        f = lambda x: math.log(_laguerre_tail_bound(max_degree, x)) - math.log(tail_tol)
        hi = max(4.0 * max_degree + 10.0, 2 * cutoff * scale)
        while f(hi) > 0:
            hi *= 2
        x = brentq(f, 1e-9, hi, xtol=1e-6) if f(1e-9) > 0 else 0.0
        cutoff = max(cutoff, x / scale)
    return cutoff


def _build_rule(cutoff: float, node_count: int, breakpoints) -> QuadratureRule:
    pts = sorted({float(b) for b in breakpoints if -cutoff < b < 0})
    bounds = [-cutoff, *pts, 0.0]
    lengths = np.diff(bounds)
    n_panels = max(len(lengths), -(-node_count // PANEL_ORDER))
    # largest-remainder allocation, at least one panel per segment
    raw = lengths / lengths.sum() * n_panels
    alloc = np.maximum(np.floor(raw).astype(int), 1)
    order = np.argsort(-(raw - np.floor(raw)), kind="stable")
    j = 0
    while alloc.sum() < n_panels:
        alloc[order[j % len(order)]] += 1
        j += 1
    edges = np.concatenate(
        [np.linspace(a, b, k + 1)[:-1] for a, b, k in zip(bounds[:-1], bounds[1:], alloc)]
        + [np.array([0.0])]
    )
    x, w = roots_legendre(PANEL_ORDER)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes=nodes, weights=weights, cutoff=cutoff, edges=edges)


def make_quadrature(spec: WeightSpec, node_count: int = 2000, tail_tol: float = 1e-12,
                    *, max_degree: int = 0, breakpoints=(), decay_rate=None) -> QuadratureRule:
    """Composite Gauss-Legendre rule on ``[-cutoff, 0]``.

    The cutoff makes ``exp(-decay_rate * cutoff) <= tail_tol``; by default the
    rate is that of a product of two basis functions with the weight.  When
    ``max_degree`` is given, the cutoff is also pushed past the oscillatory
    region of Laguerre functions up to that degree.  ``breakpoints`` (kernel
    discontinuities) become panel edges.
    """
    if node_count < 16:
        raise DomainError("node_count must be at least 16")
    if not tail_tol > 0:
        raise DomainError("tail_tol must be positive")
    cutoff = choose_cutoff(spec, tail_tol, max_degree, decay_rate)
    if not math.isfinite(cutoff):
        raise DomainError("no finite cutoff achieves the requested tail tolerance")
    return _build_rule(cutoff, node_count, breakpoints)


def _on_nodes(f, rule: QuadratureRule) -> np.ndarray:
    if callable(f):
        vals = np.asarray(f(rule.nodes), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
    if vals.shape[-1:] != rule.nodes.shape:
        vals = np.broadcast_to(vals, rule.nodes.shape)
    return vals


def inner_product_w(f, g, spec: WeightSpec, rule: QuadratureRule) -> float:
    """Quadrature approximation of ``<f, g>_w``.

    ``f`` and ``g`` are callables or arrays of values on ``rule.nodes``.
    The product f*g is formed first, so the result is bit-for-bit symmetric.
    """
    fg = _on_nodes(f, rule) * _on_nodes(g, rule)
    return float(np.sum(fg * (rule.weights * spec.weight(rule.nodes))))


def norm_sq_w(f, spec: WeightSpec, rule: QuadratureRule) -> float:
    return inner_product_w(f, f, spec, rule)

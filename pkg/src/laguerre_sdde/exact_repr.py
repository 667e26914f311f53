"""Exact finite-dimensional representations for exponential-polynomial kernels.

If every kernel is a combination of ``xi^j exp(mu xi)``, the span of these
monomials (closed under differentiation) is invariant under the adjoint
generator, and the delay equation reduces exactly to a finite SDE system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import MarkovSystem
from .errors import DegenerateError, DomainError
from .exppoly import ExpPolyFunction, exppoly_integral_Rminus, exppoly_mul
from .kernels import ExpPolyKernel
from .oracle import DynamicsSpec
from .weighted_space import WeightSpec

__all__ = [
    "ExpPolyFunction",
    "exppoly_mul",
    "exppoly_integral_Rminus",
    "StableSubspace",
    "build_stable_subspace",
    "gram_schmidt_w",
    "exact_system",
]

PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StableSubspace:
    """Invariant subspace with a w-orthonormal basis and its adjoint-generator data.

    ``monomials`` are real functions f_m whose products with the weight,
    v_m = f_m w, satisfy ``v' = M v``.  ``q`` and ``Q`` give
    ``A* e^k = q_k e^0 + sum_h Q[k, h] e^h``.
    """

    spec: WeightSpec
    monomials: tuple
    M: np.ndarray
    ortho_basis: tuple
    q: np.ndarray
    Q: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.ortho_basis)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.M) if self.dimension else np.zeros(0)

    def coefficients(self, f: ExpPolyFunction) -> np.ndarray:
        return np.array([f.inner_w(e, self.spec.p) for e in self.ortho_basis])

    def residual_sq(self, f: ExpPolyFunction) -> float:
        """Squared w-norm of the part of ``f`` orthogonal to the subspace (closed form)."""
        if f.is_zero:
            return 0.0
        c = self.coefficients(f)
        r = f
        for ck, e in zip(c, self.ortho_basis):
            r = r - ck * e
        return r.inner_w(r, self.spec.p)


def _check_exponents(f: ExpPolyFunction, spec: WeightSpec):
    # f w has exponents mu + p; these are the eigenvalues of M and must exceed p/2
    for j, mu, _ in f.terms:
        if mu.real + spec.p <= spec.lambda_star:
            raise DomainError(
                f"term xi^{j} exp({mu} xi): eigenvalue Re(mu + p) = {mu.real + spec.p:g} "
                f"must be strictly greater than lambda* = {spec.lambda_star:g}"
            )


def _closure(generators) -> list:
    """Highest power per exponent, then all lower powers: the differentiation closure."""
    top = {}
    for g in generators:
        for j, mu, _ in g.terms:
            key = (round(mu.real, 14), round(abs(mu.imag), 14))
            top[key] = max(top.get(key, -1), j)
    funcs = []
    for (re, im), jmax in sorted(top.items()):
        for j in range(jmax + 1):
            funcs.extend(ExpPolyFunction.real_monomials(j, complex(re, im)))
    return funcs


def _coordinates(funcs, targets) -> np.ndarray:
    """Express each target in the span of ``funcs`` via complex monomial coordinates."""
    keys = sorted({(j, round(mu.real, 14), round(mu.imag, 14)) for f in list(funcs) + list(targets)
                   for j, mu, _ in f.terms})
    index = {k: i for i, k in enumerate(keys)}

    def vec(f):
        v = np.zeros(len(keys), dtype=complex)
        for j, mu, c in f.terms:
            v[index[(j, round(mu.real, 14), round(mu.imag, 14))]] += c
        return v

    A = np.array([vec(f) for f in funcs]).T
    B = np.array([vec(f) for f in targets]).T
    coef, *_ = np.linalg.lstsq(A, B, rcond=None)
    if np.max(np.abs(A @ coef - B), initial=0.0) > 1e-9 * max(1.0, np.abs(B).max(initial=0.0)):
        raise DegenerateError("targets are not in the span of the given functions")
    return coef.T.real


def gram_schmidt_w(funcs, p: float, passes: int = 2):
    """Modified Gram-Schmidt with the closed-form weighted inner product.

    Raises :class:`DegenerateError` when a pivot falls below ``PIVOT_TOL`` of
    the original norm (linear dependence).
    """
    basis = []
    for f in funcs:
        norm0 = f.inner_w(f, p)
        v = f
        for _ in range(passes):
            for e in basis:
                v = v - v.inner_w(e, p) * e
        nv = v.inner_w(v, p)
        if nv <= PIVOT_TOL * norm0:
            raise DegenerateError("linearly dependent generators (Gram pivot below tolerance)")
        basis.append((1.0 / math.sqrt(nv)) * v)
    return basis


def build_stable_subspace(generators, spec: WeightSpec) -> StableSubspace:
    """Smallest differentiation-closed monomial span containing ``generators``."""
    generators = [g for g in generators]
    if not generators or any(g.is_zero for g in generators):
        raise DomainError("generators must be non-empty and nonzero")
    for g in generators:
        _check_exponents(g, spec)
    # the generators themselves must be independent
    gram_schmidt_w(generators, spec.p)
    monomials = _closure(generators)
    p = spec.p
    # (f w)' / w = f' + p f, expressed on the monomials
    M = _coordinates(monomials, [m.derivative() + p * m for m in monomials])
    ortho = gram_schmidt_w(monomials, p)
    n = len(ortho)
    q = np.array([e.at_zero() for e in ortho])
    Q = np.empty((n, n))
    for k, e in enumerate(ortho):
        astar = -(e.derivative() + p * e)
        for h, eh in enumerate(ortho):
            Q[k, h] = astar.inner_w(eh, p)
    return StableSubspace(spec=spec, monomials=tuple(monomials), M=M, ortho_basis=tuple(ortho), q=q, Q=Q)


def _as_func(k) -> ExpPolyFunction:
    if k is None:
        return ExpPolyFunction()
    if isinstance(k, ExpPolyKernel):
        return k.func
    if isinstance(k, ExpPolyFunction):
        return k
    raise DomainError("exact representations need exponential-polynomial kernels")


def exact_system(alpha, beta, gamma, dyn: DynamicsSpec, spec: WeightSpec, gamma0: float = 0.0,
                 *, tol: float = 1e-10) -> MarkovSystem:
    """Markov system spanned by the union of the kernels' stable subspaces."""
    funcs = {role: _as_func(k) for role, k in (("alpha", alpha), ("beta", beta), ("gamma", gamma))}
    nonzero = [f for f in funcs.values() if not f.is_zero]
    if not nonzero:
        z = np.zeros(1)
        g = np.array([gamma0], dtype=float)
        return MarkovSystem(n=0, spec=spec, alpha=z, beta=z.copy(), gamma=g, dyn=dyn,
                            q=np.zeros(0), Q=np.zeros((0, 0)), variant="exact", basis=())
    for f in nonzero:
        _check_exponents(f, spec)
    generators = _closure(nonzero)
    sub = build_stable_subspace(generators, spec)
    coeffs = {}
    for role, f in funcs.items():
        c = np.zeros(sub.dimension + 1)
        if not f.is_zero:
            c[1:] = sub.coefficients(f)
            resid = sub.residual_sq(f)
            if resid > tol * max(1.0, f.inner_w(f, spec.p)):
                raise DegenerateError(f"{role} is not represented exactly (residual {resid:.3g})")
        coeffs[role] = c
    coeffs["gamma"][0] = gamma0
    return MarkovSystem(n=sub.dimension, spec=spec, alpha=coeffs["alpha"], beta=coeffs["beta"],
                        gamma=coeffs["gamma"], dyn=dyn, q=sub.q, Q=sub.Q, variant="exact",
                        basis=sub.ortho_basis)

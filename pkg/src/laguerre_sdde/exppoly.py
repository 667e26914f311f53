"""Closed-form algebra on exponential polynomials sum_t c_t xi^j_t exp(mu_t xi)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["ExpPolyFunction", "exppoly_mul", "exppoly_integral_Rminus"]

_KEY_DIGITS = 14


def _mu_key(mu: complex):
    return (round(mu.real, _KEY_DIGITS), round(mu.imag, _KEY_DIGITS))


@dataclass(frozen=True)
class ExpPolyFunction:
    """Real-valued exponential polynomial on xi <= 0.

    ``terms`` holds ``(j, mu, c)`` meaning ``c * xi**j * exp(mu * xi)``.
    Complex exponents must come in conjugate pairs with conjugate
    coefficients so that the function is real.  Instances are kept in
    canonical form: like terms merged, zeros dropped, sorted by
    ``(Re mu, Im mu, j)``.
    """

    terms: tuple = ()

    def __post_init__(self):
        merged = {}
        for j, mu, c in self.terms:
            j = int(j)
            if j < 0:
                raise DomainError("polynomial degree must be non-negative")
            mu, c = complex(mu), complex(c)
            key = (_mu_key(mu), j)
            if key in merged:
                merged[key] = (j, merged[key][1], merged[key][2] + c)
            else:
                merged[key] = (j, mu, c)
        canon = tuple(
            (j, mu, c) for (_, _), (j, mu, c) in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1]))
            if c != 0
        )
        object.__setattr__(self, "terms", canon)

    @classmethod
    def monomial(cls, j: int, mu: complex, c: complex = 1.0) -> "ExpPolyFunction":
        return cls(((j, mu, c),))

    @classmethod
    def real_monomials(cls, j: int, mu: complex):
        """Real functions spanning xi^j exp(mu xi) and its conjugate.

        Returns one function for real ``mu`` and the cosine/sine pair otherwise.
        """
        mu = complex(mu)
        if mu.imag == 0:
            return [cls.monomial(j, mu.real)]
        cos = cls(((j, mu, 0.5), (j, mu.conjugate(), 0.5)))
        sin = cls(((j, mu, -0.5j), (j, mu.conjugate(), 0.5j)))
        return [cos, sin]

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def exponents(self):
        return sorted({_mu_key(mu) for _, mu, _ in self.terms})

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=complex)
        for j, mu, c in self.terms:
            out += c * xi**j * np.exp(mu * xi)
        return out.real

    def imag_residual(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=complex)
        for j, mu, c in self.terms:
            out += c * xi**j * np.exp(mu * xi)
        return float(np.max(np.abs(out.imag), initial=0.0))

    def __add__(self, other):
        if not isinstance(other, ExpPolyFunction):
            return NotImplemented
        return ExpPolyFunction(self.terms + other.terms)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, ExpPolyFunction):
            return exppoly_mul(self, other)
        c = complex(other)
        return ExpPolyFunction(tuple((j, mu, c * a) for j, mu, a in self.terms))

    __rmul__ = __mul__

    def shift(self, a: float) -> "ExpPolyFunction":
        """Multiply by exp(a xi)."""
        return ExpPolyFunction(tuple((j, mu + a, c) for j, mu, c in self.terms))

    def derivative(self) -> "ExpPolyFunction":
        out = []
        for j, mu, c in self.terms:
            out.append((j, mu, c * mu))
            if j > 0:
                out.append((j - 1, mu, c * j))
        return ExpPolyFunction(tuple(out))

    def at_zero(self) -> float:
        return float(sum(c for j, _, c in self.terms if j == 0).real)

    def integral(self) -> float:
        return exppoly_integral_Rminus(self)

    def inner_w(self, other: "ExpPolyFunction", p: float) -> float:
        """Closed-form ``int f g exp(p xi) dxi`` over the negative half-line."""
        return exppoly_integral_Rminus((self * other).shift(p))


def exppoly_mul(f: ExpPolyFunction, g: ExpPolyFunction) -> ExpPolyFunction:
    return ExpPolyFunction(tuple(
        (j1 + j2, m1 + m2, c1 * c2) for j1, m1, c1 in f.terms for j2, m2, c2 in g.terms
    ))


def exppoly_integral_Rminus(f: ExpPolyFunction) -> float:
    """Exact integral over (-inf, 0] using int xi^j e^{mu xi} = (-1)^j j! / mu^(j+1)."""
    total = 0j
    for j, mu, c in f.terms:
        if mu.real <= 0:
            raise DomainError(f"term xi^{j} exp({mu} xi) is not integrable on the negative half-line")
        total += c * (-1) ** j * math.factorial(j) / mu ** (j + 1)
    scale = max(1.0, sum(abs(c) * math.factorial(j) / abs(mu) ** (j + 1) for j, mu, c in f.terms))
    if abs(total.imag) > 1e-12 * scale:
        raise DomainError("exponential polynomial is not real: conjugate terms are missing")
    return float(total.real)

"""Finite-dimensional Markov systems (S^n, X^{n,1}, ..., X^{n,n}) and their simulation.

The auxiliary coordinates follow ``dX = (q S + Q X) dt``; ``(q, Q)`` is the
Laguerre shift structure for truncated systems or comes from an exact
stable subspace.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, NumericalBlowup, SpecMismatch
from .kernels import ProjectedKernel, check_spec, project_kernel, rule_for_kernels
from .laguerre import basis_matrix, laguerre_drift
from .noise import NoisePath
from .oracle import DEFAULT_GUARD, DynamicsSpec, InitialDatum, OraclePath, SDDEModel, evaluate_control, simulate_sdde
from .weighted_space import QuadratureRule, WeightSpec, make_quadrature

__all__ = [
    "MarkovSystem",
    "ChainPath",
    "build_laguerre_system",
    "laguerre_system",
    "project_initial_state",
    "simulate_chain",
    "coupled_run",
]

SCHEMES = ("euler", "exponential")


@dataclass(frozen=True, eq=False)
class MarkovSystem:
    """Coefficient vectors have length n+1; slot 0 is 0 for alpha/beta and gamma0 for gamma."""

    n: int
    spec: WeightSpec
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    dyn: DynamicsSpec
    q: np.ndarray
    Q: np.ndarray
    variant: str = "laguerre"
    basis: object = field(default=None, repr=False)

    @property
    def gamma0(self) -> float:
        return float(self.gamma[0])

    def basis_values(self, xi) -> np.ndarray:
        """Function parts of e^1..e^n at ``xi``, shape (n, len(xi))."""
        if self.basis is None:
            return basis_matrix(self.n, self.spec, xi)
        return np.array([f(xi) for f in self.basis]).reshape((self.n,) + np.shape(xi))

    def drift_rows(self) -> np.ndarray:
        """Row k (k = 1..n): coefficients of the X^k drift on (S, X^1, .., X^n)."""
        return np.column_stack([self.q, self.Q]) if self.n else np.zeros((0, 1))

    def initial_state(self, init: InitialDatum, rule: QuadratureRule | None = None) -> np.ndarray:
        return _project_history(init, self, rule)


@dataclass(frozen=True, eq=False)
class ChainPath:
    times: np.ndarray
    S: np.ndarray
    X: np.ndarray  # (..., n, steps + 1)
    Z: np.ndarray
    u: np.ndarray


def _coeffs(pk: ProjectedKernel | None, n: int, spec: WeightSpec) -> np.ndarray:
    if pk is None:
        return np.zeros(n + 1)
    check_spec(pk, spec)
    if pk.n < n:
        raise DomainError(f"projection has {pk.n} coefficients, system needs {n}")
    out = np.array(pk.coeffs[: n + 1], dtype=float)
    out[0] = 0.0
    return out


def build_laguerre_system(n: int, spec: WeightSpec, alpha: ProjectedKernel | None,
                          beta: ProjectedKernel | None, gamma: ProjectedKernel | None,
                          gamma0: float, dyn: DynamicsSpec) -> MarkovSystem:
    if n < 0:
        raise DomainError("n must be non-negative")
    g = _coeffs(gamma, n, spec)
    g[0] = gamma0
    q, Q = laguerre_drift(n, spec)
    return MarkovSystem(n=n, spec=spec, alpha=_coeffs(alpha, n, spec), beta=_coeffs(beta, n, spec),
                        gamma=g, dyn=dyn, q=q, Q=Q, variant="laguerre")


def laguerre_system(model: SDDEModel, n: int, rule: QuadratureRule | None = None) -> MarkovSystem:
    """Project the model's kernels onto e^1..e^n and assemble the truncated system."""
    kernels = model.kernels()
    if rule is None:
        rule = rule_for_kernels(model.spec, n, [k for k in kernels.values() if k is not None])
    pks = {role: None if k is None else project_kernel(k, n, model.spec, rule)
           for role, k in kernels.items()}
    return build_laguerre_system(n, model.spec, pks["alpha"], pks["beta"], pks["gamma"],
                                 model.gamma0, model.dyn)


def _history_rule(spec: WeightSpec, n: int) -> QuadratureRule:
    # a bounded history against basis x w decays like exp((p0 + p/2) xi)
    return make_quadrature(spec, max(2000, 160 * n), 1e-12, max_degree=max(n - 1, 0),
                           decay_rate=min(spec.p0 + spec.p / 2, 2 * spec.p0))


def _project_history(init: InitialDatum, sys_or_n, rule: QuadratureRule | None, spec=None) -> np.ndarray:
    if isinstance(sys_or_n, MarkovSystem):
        n, spec = sys_or_n.n, sys_or_n.spec
        values = sys_or_n.basis_values
    else:
        n = int(sys_or_n)
        values = lambda xi: basis_matrix(n, spec, xi)
    x = np.zeros(n + 1)
    x[0] = init.s0
    if n == 0 or init.s1 is None:
        return x
    if rule is None:
        rule = _history_rule(spec, n)
    h = init.history(rule.nodes) * rule.weights * spec.weight(rule.nodes)
    x[1:] = np.sum(values(rule.nodes) * h, axis=1)
    return x


def project_initial_state(init: InitialDatum, n: int, spec: WeightSpec,
                          rule: QuadratureRule | None = None) -> np.ndarray:
    """``(s0, <e^1, s>_w, ..., <e^n, s>_w)`` for the Laguerre basis."""
    return _project_history(init, n, rule, spec)


def _stability_check(sys: MarkovSystem, dt: float):
    if sys.variant != "laguerre" or sys.n == 0:
        return
    bound = dt * (sys.spec.p0 * (2 * sys.n + 1) + abs(sys.spec.p) / 2)
    if bound >= 0.5:
        warnings.warn(
            f"dt*(p0*(2n+1)+|p|/2) = {bound:.3g} >= 0.5: explicit Euler on the auxiliary "
            "block may be unstable; use scheme='exponential' or a smaller dt",
            RuntimeWarning, stacklevel=3)


def _exponential_step(q: np.ndarray, Q: np.ndarray, dt: float):
    """E, F0, F1 with X_{i+1} = E X_i + F0 S_i + F1 S_{i+1} for S linear over the step."""
    n = len(q)
    A = np.zeros((n + 2, n + 2))
    A[:n, :n] = Q * dt
    A[:n, n] = q * dt
    A[n, n + 1] = 1.0
    E_all = expm(A)
    E = E_all[:n, :n]
    G0 = E_all[:n, n]
    G1 = E_all[:n, n + 1]
    return E, G0 - G1, G1


def simulate_chain(sys: MarkovSystem, x0, noise: NoisePath, T: float | None = None, control=None,
                   *, scheme: str = "euler", guard: float = DEFAULT_GUARD) -> ChainPath:
    """Euler-Maruyama for S^n; the auxiliary block uses explicit Euler or an exact
    exponential step with S interpolated linearly across the step."""
    if scheme not in SCHEMES:
        raise DomainError(f"scheme must be one of {SCHEMES}")
    N = noise.check_horizon(T)
    dt = noise.dt
    if scheme == "euler":
        _stability_check(sys, dt)
    single = noise.increments.ndim == 1
    dW = np.atleast_2d(noise.increments)[:, :N]
    M = dW.shape[0]
    n = sys.n
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != n + 1:
        raise SpecMismatch(f"initial state has {x0.shape[-1]} entries, system order is {n}")

    S = np.empty((M, N + 1))
    X = np.empty((M, n, N + 1))
    S[:, 0] = x0[..., 0]
    X[:, :, 0] = x0[..., 1:]
    a, b, g = sys.alpha[1:], sys.beta[1:], sys.gamma[1:]
    g0 = sys.gamma[0]
    U = np.zeros((M, N))
    if scheme == "exponential" and n:
        E, F0, F1 = _exponential_step(sys.q, sys.Q, dt)
    QT = sys.Q.T
    for i in range(N):
        s, x = S[:, i], X[:, :, i]
        ya = x @ a
        yb = x @ b
        z = g0 * s + x @ g
        u = evaluate_control(control, i, i * dt, s, ya, z, M)
        U[:, i] = u
        s_next = s + sys.dyn.drift(s, ya, u) * dt + sys.dyn.diffusion(s, yb, u) * dW[:, i]
        if not np.all(np.abs(s_next) <= guard):
            raise NumericalBlowup(f"chain state exceeded {guard:g} at step {i + 1} (t={(i + 1) * dt:g})")
        S[:, i + 1] = s_next
        if n:
            if scheme == "euler":
                X[:, :, i + 1] = x + (np.outer(s, sys.q) + x @ QT) * dt
            else:
                X[:, :, i + 1] = x @ E.T + np.outer(s, F0) + np.outer(s_next, F1)
            if not np.all(np.abs(X[:, :, i + 1]) <= guard):
                raise NumericalBlowup(f"auxiliary state exceeded {guard:g} at step {i + 1}")
    Z = g0 * S + np.einsum("mkt,k->mt", X, g)
    times = dt * np.arange(N + 1)
    if single:
        return ChainPath(times, S[0], X[0], Z[0], U[0])
    return ChainPath(times, S, X, Z, U)


def coupled_run(model: SDDEModel, sys: MarkovSystem, noise: NoisePath, T: float | None = None,
                control=None, *, x0=None, scheme: str = "euler",
                oracle: OraclePath | None = None) -> tuple[OraclePath, ChainPath]:
    """Oracle and chain driven by the same Brownian increments."""
    if sys.spec != model.spec:
        raise SpecMismatch("system and model use different weights")
    if oracle is None:
        oracle = simulate_sdde(model, noise, T, control)
    elif len(oracle.times) != noise.check_horizon(T) + 1 or not math.isclose(oracle.dt, noise.dt):
        raise SpecMismatch("oracle path grid does not match the noise grid")
    if x0 is None:
        x0 = sys.initial_state(model.init)
    chain = simulate_chain(sys, x0, noise, T, control, scheme=scheme)
    return oracle, chain

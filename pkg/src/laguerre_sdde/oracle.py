"""Reference solver: explicit Euler-Maruyama on the delay equation itself.

The distributed-delay terms ``y(t) = int k(xi) S_{t+xi} w(xi) dxi`` are
evaluated at every step by the trapezoid rule over the stored path, merged
with the initial history for lags reaching before time zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalBlowup
from .kernels import Kernel, Tabulated, UniformWindow
from .noise import NoisePath
from .weighted_space import WeightSpec

__all__ = [
    "DynamicsSpec",
    "gbm",
    "mean_revert_delay",
    "linear_dynamics",
    "InitialDatum",
    "SDDEModel",
    "OraclePath",
    "lag_weights",
    "simulate_sdde",
    "moving_average_path",
    "evaluate_control",
]

DEFAULT_GUARD = 1e12


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """Drift ``b(x, y, u)`` and diffusion ``sigma(x, y, u)``, vectorised over paths.

    Lipschitz continuity and linear growth are the caller's responsibility.
    """

    drift: object
    diffusion: object
    name: str = "custom"


def gbm(mu: float, sigma: float) -> DynamicsSpec:
    """Geometric Brownian motion with additive control: b = mu x + u, sigma(x) = sigma x."""
    return DynamicsSpec(lambda x, y, u: mu * x + u, lambda x, y, u: sigma * x + 0.0 * y,
                        name=f"gbm(mu={mu}, sigma={sigma})")


def mean_revert_delay(kappa: float, sigma: float) -> DynamicsSpec:
    """Reversion towards the delayed average: b = kappa (y - x) + u, constant noise."""
    return DynamicsSpec(lambda x, y, u: kappa * (y - x) + u,
                        lambda x, y, u: sigma + 0.0 * x,
                        name=f"mean_revert_delay(kappa={kappa}, sigma={sigma})")


def linear_dynamics(drift=(0.0, 0.0, 0.0, 0.0), diffusion=(0.0, 0.0, 0.0, 0.0)) -> DynamicsSpec:
    """Affine coefficients from a table ``(const, x, y, u)`` for drift and diffusion."""
    b0, bx, by, bu = (float(v) for v in drift)
    s0, sx, sy, su = (float(v) for v in diffusion)
    return DynamicsSpec(lambda x, y, u: b0 + bx * x + by * y + bu * u,
                        lambda x, y, u: s0 + sx * x + sy * y + su * u,
                        name=f"linear(drift={tuple(drift)}, diffusion={tuple(diffusion)})")


@dataclass(frozen=True, eq=False)
class InitialDatum:
    """``S_0 = s0`` and ``S_xi = s1(xi)`` for xi < 0.

    ``s1`` may be ``None`` (zero history), a number (constant history), a
    callable, or a :class:`Tabulated` grid.
    """

    s0: float
    s1: object = None

    def history(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        s1 = self.s1
        if s1 is None:
            return np.zeros(xi.shape)
        if isinstance(s1, (int, float)):
            return np.full(xi.shape, float(s1))
        if isinstance(s1, Tabulated):
            return s1._values(xi)
        return np.asarray(s1(xi), dtype=float) * np.ones(xi.shape)


@dataclass(frozen=True, eq=False)
class SDDEModel:
    """Everything that defines the delay equation and its output functional."""

    spec: WeightSpec
    dyn: DynamicsSpec
    init: InitialDatum
    alpha: Kernel | None = None
    beta: Kernel | None = None
    gamma: Kernel | None = None
    gamma0: float = 0.0
    history_tol: float = 1e-12

    def kernels(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class OraclePath:
    times: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    y_alpha: np.ndarray
    y_beta: np.ndarray
    u: np.ndarray
    init: InitialDatum = field(repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def kernel_length(k: Kernel, p: float, tol: float = 1e-12) -> float:
    """Lag beyond which ``|k| w`` is negligible (the support for compact kernels)."""
    if k.support is not None:
        return -float(k.support)
    rate = k.decay_rate()
    if rate is None or not math.isfinite(rate):
        raise DomainError("unbounded kernel without a known decay rate needs an explicit history length")
    rate += p
    if rate <= 0:
        raise DomainError("kernel times weight does not decay")
    deg = getattr(k, "max_degree", lambda: 0)()
    L = -math.log(tol) / rate
    for _ in range(50):
        L = (-math.log(tol) + deg * math.log(max(L, 1.0))) / rate
    return L


def lag_weights(k: Kernel, p: float, dt: float, length: float | None = None) -> np.ndarray:
    """Weights ``W_j`` with ``int k(xi) S(t+xi) exp(p xi) dxi ~ sum_j W_j S(t - j dt)``.

    Trapezoid rule on the lag grid merged with the kernel breakpoints; values
    of S off the grid are linearly interpolated.
    """
    L = kernel_length(k, p) if length is None else float(length)
    J = int(math.ceil(L / dt - 1e-9))
    grid = -dt * np.arange(J + 1)
    extra = [-L] + [b for b in k.breakpoints if -L < b < 0]
    nodes = np.unique(np.concatenate([grid[grid >= -L - 1e-12 * dt], extra]))
    g = k._values(nodes) * np.exp(p * nodes)
    h = np.diff(nodes)
    node_w = np.zeros(len(nodes))
    node_w[:-1] += h / 2 * g[:-1]
    node_w[1:] += h / 2 * g[1:]
    W = np.zeros(J + 2)
    s = -nodes / dt
    j0 = np.floor(s + 1e-9).astype(int)
    frac = np.clip(s - j0, 0.0, 1.0)
    frac[np.abs(frac) < 1e-9] = 0.0
    np.add.at(W, j0, node_w * (1 - frac))
    np.add.at(W, np.minimum(j0 + 1, J + 1), node_w * frac)
    return W[: J + 1] if W[J + 1] == 0 else W


def evaluate_control(control, i, t, s, y, z, n_paths):
    """Control at step ``i``: None (zero), an open-loop array, or feedback ``f(t, s, y, z)``."""
    if control is None:
        return 0.0
    if callable(control):
        return np.asarray(control(t, s, y, z), dtype=float)
    arr = np.asarray(control, dtype=float)
    return arr[..., i]


def simulate_sdde(model: SDDEModel, noise: NoisePath, T: float | None = None, control=None,
                  *, guard: float = DEFAULT_GUARD) -> OraclePath:
    """Explicit Euler-Maruyama for the delay equation on the grid of ``noise``.

    S_{i+1} = S_i + b(S_i, y_alpha_i, u_i) dt + sigma(S_i, y_beta_i, u_i) dW_i,
    Z_i = gamma0 S_i + y_gamma_i.
    """
    N = noise.check_horizon(T)
    dt = noise.dt
    single = noise.increments.ndim == 1
    dW = np.atleast_2d(noise.increments)[:, :N]
    M = dW.shape[0]
    p = model.spec.p

    weights = {}
    for role, k in model.kernels().items():
        if k is not None:
            weights[role] = lag_weights(k, p, dt)
    J = max((len(W) - 1 for W in weights.values()), default=0)

    H = np.empty((M, J + N + 1))
    H[:, :J] = model.init.history(-dt * np.arange(J, 0, -1))
    H[:, J] = model.init.s0

    def conv(role, i):
        W = weights.get(role)
        if W is None:
            return np.zeros(M)
        m = len(W) - 1
        return H[:, J + i - m: J + i + 1] @ W[::-1]

    ya = np.zeros((M, N + 1))
    yb = np.zeros((M, N + 1))
    Z = np.zeros((M, N + 1))
    U = np.zeros((M, N))
    for i in range(N + 1):
        S = H[:, J + i]
        ya[:, i] = conv("alpha", i)
        yb[:, i] = conv("beta", i)
        Z[:, i] = model.gamma0 * S + conv("gamma", i)
        if i == N:
            break
        u = evaluate_control(control, i, i * dt, S, ya[:, i], Z[:, i], M)
        U[:, i] = u
        S_next = S + model.dyn.drift(S, ya[:, i], u) * dt + model.dyn.diffusion(S, yb[:, i], u) * dW[:, i]
        if not np.all(np.abs(S_next) <= guard):
            raise NumericalBlowup(f"oracle state exceeded {guard:g} at step {i + 1} (t={(i + 1) * dt:g})")
        H[:, J + i + 1] = S_next

    S_out = H[:, J:]
    times = dt * np.arange(N + 1)
    out = (S_out, Z, ya, yb, U)
    if single:
        out = tuple(a[0] for a in out)
    return OraclePath(times, *out, init=model.init)


def moving_average_path(path: OraclePath, delta: float) -> np.ndarray:
    """Trapezoid average of S over ``[t - delta, t]`` at every grid time."""
    dt = path.dt
    if delta < dt - 1e-12:
        raise DomainError("window must be at least one time step")
    W = lag_weights(UniformWindow(delta), 0.0, dt)
    J = len(W) - 1
    S = np.atleast_2d(path.S)
    hist = path.init.history(-dt * np.arange(J, 0, -1))
    full = np.concatenate([np.broadcast_to(hist, (S.shape[0], J)), S], axis=1)
    windows = np.lib.stride_tricks.sliding_window_view(full, J + 1, axis=1)
    out = windows @ W[::-1]
    return out[0] if np.ndim(path.S) == 1 else out

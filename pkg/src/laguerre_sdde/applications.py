"""Optimal stopping by least-squares Monte Carlo and policy cost evaluation.

Both run either on a truncated Markov system or on the delay equation itself
(the reference).  Training and evaluation use disjoint blocks of path
indices, so estimates for different systems with the same seed share noise.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import fit_rate, kernel_tails
from .chain import MarkovSystem, build_laguerre_system, simulate_chain
from .errors import DomainError, RegressionError, SpecMismatch
from .io import write_csv, write_json
from .kernels import Kernel, project_kernel, rule_for_kernels
from .noise import brownian_increments
from .oracle import SDDEModel, simulate_sdde

__all__ = [
    "OutputFunctional",
    "StoppingProblem",
    "ControlProblem",
    "MCResult",
    "put_payoff",
    "call_payoff",
    "discounted",
    "lsmc_value",
    "oracle_lsmc_value",
    "policy_cost",
    "GapReport",
    "value_gap_report",
]

RIDGE = 1e-10
CHUNK = 4096


@dataclass(frozen=True, eq=False)
class OutputFunctional:
    """``Z_t = gamma0 S_t + int gamma(xi) S_{t+xi} w(xi) dxi``."""

    gamma0: float = 0.0
    gamma_kernel: Kernel | None = None

    def norm_sq_w(self, spec, rule=None) -> float:
        if self.gamma_kernel is None:
            return self.gamma0**2
        if rule is None:
            rule = rule_for_kernels(spec, 0, [self.gamma_kernel])
        return self.gamma0**2 + project_kernel(self.gamma_kernel, 0, spec, rule).norm_sq_w

    def attach(self, model: SDDEModel) -> SDDEModel:
        return dataclasses.replace(model, gamma=self.gamma_kernel, gamma0=self.gamma0)


def put_payoff(strike: float):
    return lambda t, z: np.maximum(strike - z, 0.0)


def call_payoff(strike: float):
    return lambda t, z: np.maximum(z - strike, 0.0)


def discounted(payoff, rate: float):
    return lambda t, z: np.exp(-rate * np.asarray(t)) * payoff(t, z)


@dataclass(frozen=True, eq=False)
class StoppingProblem:
    """Exercise on a grid of dates ending at T.

    ``direction="sup"`` prices an option (regression on in-the-money paths
    by default); ``"inf"`` minimises an expected cost.
    """

    T: float
    exercise_dates: tuple
    payoff: object
    direction: str = "sup"
    itm_only: bool | None = None

    def __post_init__(self):
        dates = tuple(float(d) for d in self.exercise_dates)
        if not dates or any(b <= a for a, b in zip(dates, dates[1:])):
            raise DomainError("exercise dates must be non-empty and strictly increasing")
        if not math.isclose(dates[-1], self.T, rel_tol=1e-12, abs_tol=1e-12) or dates[0] < 0:
            raise DomainError("exercise dates must lie in [0, T] and end at T")
        if self.direction not in ("sup", "inf"):
            raise DomainError("direction must be 'sup' or 'inf'")
        object.__setattr__(self, "exercise_dates", dates)
        if self.itm_only is None:
            object.__setattr__(self, "itm_only", self.direction == "sup")

    @classmethod
    def bermudan(cls, T: float, count: int, payoff, direction: str = "sup"):
        return cls(T, tuple(T * (k + 1) / count for k in range(count)), payoff, direction)

    @classmethod
    def european(cls, T: float, payoff, direction: str = "sup"):
        return cls(T, (T,), payoff, direction)

    def indices(self, dt: float) -> np.ndarray:
        idx = np.rint(np.array(self.exercise_dates) / dt).astype(int)
        if np.any(np.abs(idx * dt - np.array(self.exercise_dates)) > 1e-9 * max(dt, 1.0)):
            raise SpecMismatch("exercise dates are not on the simulation grid")
        return idx


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Cost ``E[int_0^T f(t, Z_t, u_t) dt + phi(Z_T)]`` over a set of feedback policies.

    Policies are callables ``u(t, s, y_alpha, z)``; Lipschitz continuity of
    ``f`` and ``phi`` is the caller's declaration.
    """

    T: float
    running_cost: object
    terminal_cost: object
    policies: tuple = ()


@dataclass
class MCResult:
    value: float
    stderr: float
    paths: int
    seed: int
    n: int | None = None
    in_sample: float | None = None
    in_sample_stderr: float | None = None
    samples: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {"value": self.value, "stderr": self.stderr, "paths": self.paths, "seed": self.seed, "n": self.n}
        if self.in_sample is not None:
            d.update(in_sample=self.in_sample, in_sample_stderr=self.in_sample_stderr)
        return d


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


# --- regression -------------------------------------------------------------

@dataclass
class _Fit:
    keep: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    coef: np.ndarray | None
    degree: int


def _design(F: np.ndarray, fit: _Fit) -> np.ndarray:
    X = (F[:, fit.keep] - fit.mean) / fit.scale
    cols = [np.ones(len(X))]
    for d in range(1, fit.degree + 1):
        for combo in itertools.combinations_with_replacement(range(X.shape[1]), d):
            cols.append(np.prod(X[:, combo], axis=1))
    return np.column_stack(cols)


def _regress(F: np.ndarray, y: np.ndarray, degree: int) -> _Fit:
    if len(y) < 2:
        return _Fit(np.zeros(F.shape[1], dtype=bool), np.zeros(0), np.zeros(0), None, degree)
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    keep = scale > 1e-12 * (1.0 + np.abs(mean))
    fit = _Fit(keep, mean[keep], scale[keep], None, degree)
    A = _design(F, fit)
    if len(y) < 2 * A.shape[1]:
        return fit  # too few samples: no exercise at this date
    G = A.T @ A
    G[np.diag_indices_from(G)] += RIDGE * np.trace(G) / len(G)
    try:
        coef = np.linalg.solve(G, A.T @ y)
    except np.linalg.LinAlgError as exc:
        raise RegressionError(f"normal equations are singular: {exc}") from None
    if not np.all(np.isfinite(coef)):
        raise RegressionError("regression produced non-finite coefficients")
    fit.coef = coef
    return fit


def _exercise(prob: StoppingProblem, h, F, fit: _Fit):
    """Boolean exercise decision at one date."""
    if fit.coef is None:
        return np.zeros(len(h), dtype=bool)
    cont = _design(F, fit) @ fit.coef
    better = h > cont if prob.direction == "sup" else h < cont
    return better & (h > 0) if prob.itm_only else better


def _lsmc(simulate, prob: StoppingProblem, paths: int, degree: int, dt: float, seed: int, n=None):
    if paths < 2:
        raise DomainError("need at least two paths")
    if degree < 1:
        raise DomainError("regression degree must be at least 1")
    idx = prob.indices(dt)
    times = idx * dt

    Z, F = simulate(0, paths, idx)
    cf = prob.payoff(times[-1], Z[:, -1])
    fits = [None] * len(idx)
    for j in range(len(idx) - 2, -1, -1):
        h = prob.payoff(times[j], Z[:, j])
        sel = h > 0 if prob.itm_only else np.ones(len(h), dtype=bool)
        fit = _regress(F[sel, :, j], cf[sel], degree)
        fits[j] = fit
        ex = _exercise(prob, h, F[:, :, j], fit)
        cf = np.where(ex, h, cf)
    in_sample, in_se = _mean_se(cf)

    Z, F = simulate(paths, paths, idx)
    stopped = np.full(paths, np.nan)
    alive = np.ones(paths, dtype=bool)
    for j in range(len(idx) - 1):
        h = prob.payoff(times[j], Z[:, j])
        ex = alive & _exercise(prob, h, F[:, :, j], fits[j])
        stopped[ex] = h[ex]
        alive &= ~ex
    stopped[alive] = prob.payoff(times[-1], Z[alive, -1])
    value, se = _mean_se(stopped)
    return MCResult(value, se, paths, seed, n=n, in_sample=in_sample, in_sample_stderr=in_se, samples=stopped)


def _chunks(first: int, count: int):
    for start in range(first, first + count, CHUNK):
        yield start, min(CHUNK, first + count - start)


def _chain_sampler(sys: MarkovSystem, x0, seed: int, dt: float, T: float, scheme: str, control=None):
    steps = int(round(T / dt))
    m = min(sys.n, 3)

    def simulate(first, count, idx):
        Zs, Fs = [], []
        for start, size in _chunks(first, count):
            noise = brownian_increments(seed, steps, dt, size, first_path=start)
            cp = simulate_chain(sys, x0, noise, T, control, scheme=scheme)
            Zs.append(cp.Z[:, idx])
            feats = [cp.S[:, idx], cp.Z[:, idx]] + [cp.X[:, k, idx] for k in range(m)]
            Fs.append(np.stack(feats, axis=1))
        return np.concatenate(Zs), np.concatenate(Fs)

    return simulate


def _oracle_sampler(model: SDDEModel, seed: int, dt: float, T: float, control=None):
    steps = int(round(T / dt))

    def simulate(first, count, idx):
        Zs, Fs = [], []
        for start, size in _chunks(first, count):
            noise = brownian_increments(seed, steps, dt, size, first_path=start)
            op = simulate_sdde(model, noise, T, control)
            Zs.append(op.Z[:, idx])
            Fs.append(np.stack([op.S[:, idx], op.Z[:, idx]], axis=1))
        return np.concatenate(Zs), np.concatenate(Fs)

    return simulate


def lsmc_value(sys: MarkovSystem, x0, prob: StoppingProblem, paths: int, degree: int, seed: int,
               *, dt: float, scheme: str = "euler") -> MCResult:
    """Bermudan value on the chain by backward induction (Longstaff-Schwartz).

    Continuation values are regressed on polynomials of (S, Z, X^1..X^3);
    the reported value comes from an independent resimulation (path indices
    ``paths .. 2 paths - 1``) with the fitted rule and is low-biased for sup.
    """
    if paths < 1000:
        raise DomainError("LSMC needs at least 1000 paths")
    sim = _chain_sampler(sys, np.asarray(x0, dtype=float), seed, dt, prob.T, scheme)
    return _lsmc(sim, prob, paths, degree, dt, seed, n=sys.n)


def oracle_lsmc_value(model: SDDEModel, prob: StoppingProblem, paths: int, degree: int, seed: int,
                      *, dt: float) -> MCResult:
    """Reference LSMC on the augmented state (S, Z) simulated from the delay equation."""
    if paths < 1000:
        raise DomainError("LSMC needs at least 1000 paths")
    return _lsmc(_oracle_sampler(model, seed, dt, prob.T), prob, paths, degree, dt, seed)


def _trapezoid(values, dt):
    return dt * (values[:, 1:-1].sum(axis=1) + 0.5 * (values[:, 0] + values[:, -1]))


def _final_control(policy, T, s, y, z, u_last):
    if policy is None:
        return np.zeros_like(s)
    if callable(policy):
        return np.asarray(policy(T, s, y, z), dtype=float) * np.ones_like(s)
    return u_last


def policy_cost(target, problem: ControlProblem, policy, paths: int, seed: int, *, dt: float,
                init=None, x0=None, scheme: str = "euler", first_path: int = 0) -> MCResult:
    """Monte Carlo cost of ``policy`` on a Markov system or on the delay equation (``SDDEModel``)."""
    if paths < 2:
        raise DomainError("need at least two paths")
    T = problem.T
    steps = int(round(T / dt))
    if isinstance(target, MarkovSystem):
        if x0 is None:
            if init is None:
                raise DomainError("a Markov system needs x0 or an initial datum")
            x0 = target.initial_state(init)
        x0 = np.asarray(x0, dtype=float)
    elif not isinstance(target, SDDEModel):
        raise DomainError("target must be a MarkovSystem or an SDDEModel")
    out = []
    for start, size in _chunks(first_path, paths):
        noise = brownian_increments(seed, steps, dt, size, first_path=start)
        if isinstance(target, MarkovSystem):
            cp = simulate_chain(target, x0, noise, T, policy, scheme=scheme)
            S, Z, U = cp.S, cp.Z, cp.u
            y_end = cp.X[:, :, -1] @ target.alpha[1:]
        else:
            op = simulate_sdde(target, noise, T, policy)
            S, Z, U = op.S, op.Z, op.u
            y_end = op.y_alpha[:, -1]
        u_end = _final_control(policy, T, S[:, -1], y_end, Z[:, -1], U[:, -1])
        U_full = np.concatenate([U, u_end[:, None]], axis=1)
        times = dt * np.arange(steps + 1)
        f = np.asarray(problem.running_cost(times[None, :], Z, U_full), dtype=float) * np.ones_like(Z)
        out.append(_trapezoid(f, dt) + np.asarray(problem.terminal_cost(Z[:, -1]), dtype=float))
    samples = np.concatenate(out)
    value, se = _mean_se(samples)
    n = target.n if isinstance(target, MarkovSystem) else None
    return MCResult(value, se, paths, seed, n=n, samples=samples)


# --- value gaps ---------------------------------------------------------------

@dataclass
class GapReport:
    kind: str
    reference: float
    reference_stderr: float
    n_values: list
    tail_sq: list
    values: list
    stderrs: list
    gaps: list
    gap_stderrs: list
    paths: int
    seed: int

    def K(self) -> float:
        """Smallest constant with gap_n <= K sqrt(tail_n) over the scan."""
        t = np.asarray(self.tail_sq)
        g = np.asarray(self.gaps)
        ok = t > 0
        return float(np.max(g[ok] / np.sqrt(t[ok]))) if np.any(ok) else math.nan

    def ratio_spread(self) -> float:
        t = np.asarray(self.tail_sq)
        r = np.asarray(self.gaps) ** 2 / t
        r = r[(t > 0) & (r > 0)]
        return float(r.max() / r.min()) if len(r) else math.nan

    def rows(self):
        return list(zip(self.n_values, self.tail_sq, self.values, self.stderrs, self.gaps, self.gap_stderrs))

    def summary(self) -> dict:
        fit = None
        try:
            fit = fit_rate(self.n_values, self.gaps)
        except DomainError:
            pass
        return {"kind": self.kind, "reference": self.reference, "reference_stderr": self.reference_stderr,
                "paths": self.paths, "seed": self.seed, "K": self.K(), "ratio_spread": self.ratio_spread(),
                "gap_fit": None if fit is None else {"slope": fit[0], "intercept": fit[1], "r2": fit[2]}}

    def to_csv(self, path):
        return write_csv(path, ["n", "tail_sq", "value", "stderr", "gap", "gap_stderr"], self.rows())

    def to_json(self, path):
        return write_json(path, self.summary())


def _best(results, direction):
    vals = [r.value for r in results]
    i = int(np.argmax(vals) if direction == "sup" else np.argmin(vals))
    return i, results[i]


def value_gap_report(model: SDDEModel, n_list, problem, paths: int, seed: int, *, dt: float,
                     degree: int = 2, scheme: str = "euler", policies=None, rule=None) -> GapReport:
    """Reference value from the delay equation versus truncated systems, on shared noise.

    For a :class:`ControlProblem` the value is the best cost over the policy
    set; for a :class:`StoppingProblem` it is the LSMC value.
    """
    n_list = [int(n) for n in n_list]
    pks, tails = kernel_tails(model, max(n_list), rule)
    systems = {n: build_laguerre_system(n, model.spec, pks["alpha"], pks["beta"], pks["gamma"],
                                        model.gamma0, model.dyn) for n in n_list}
    rows = []
    if isinstance(problem, StoppingProblem):
        kind = "stopping"
        ref = oracle_lsmc_value(model, problem, paths, degree, seed, dt=dt)
        for n in n_list:
            sys = systems[n]
            res = lsmc_value(sys, sys.initial_state(model.init), problem, paths, degree, seed,
                             dt=dt, scheme=scheme)
            diff = res.samples - ref.samples
            rows.append((n, res, diff))
    elif isinstance(problem, ControlProblem):
        kind = "control"
        pols = tuple(policies if policies is not None else problem.policies)
        if not pols:
            raise DomainError("control problems need at least one policy")
        ref_all = [policy_cost(model, problem, u, paths, seed, dt=dt) for u in pols]
        _, ref = _best(ref_all, "inf")
        for n in n_list:
            sys = systems[n]
            res_all = [policy_cost(sys, problem, u, paths, seed, dt=dt, init=model.init, scheme=scheme)
                       for u in pols]
            _, res = _best(res_all, "inf")
            rows.append((n, res, res.samples - ref.samples))
    else:
        raise DomainError("problem must be a StoppingProblem or a ControlProblem")
    report = GapReport(kind, ref.value, ref.stderr, [], [], [], [], [], [], paths, seed)
    for n, res, diff in rows:
        g, gse = _mean_se(diff)
        report.n_values.append(n)
        report.tail_sq.append(float(tails[n]))
        report.values.append(res.value)
        report.stderrs.append(res.stderr)
        report.gaps.append(abs(g))
        report.gap_stderrs.append(gse)
    return report

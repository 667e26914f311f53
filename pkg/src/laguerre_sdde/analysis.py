"""Monte Carlo truncation-error scans and log-log rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import build_laguerre_system, simulate_chain
from .errors import DomainError, NumericalBlowup
from .io import write_csv, write_json
from .kernels import project_kernel, rule_for_kernels
from .noise import brownian_increments
from .oracle import SDDEModel, simulate_sdde

__all__ = ["ErrorReport", "error_scan", "fit_rate", "batch_stderr", "kernel_tails"]

MIN_BATCHES = 10


def fit_rate(xs, ys):
    """Least-squares line through ``(log x, log y)``; returns (slope, intercept, r2)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise DomainError("need at least three matching points")
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise DomainError("rate fits need strictly positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([slope, intercept])
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def batch_stderr(samples, batches: int = MIN_BATCHES) -> tuple[float, float]:
    """Mean and standard error from contiguous batch means."""
    s = np.asarray(samples, dtype=float)
    if len(s) < batches:
        raise DomainError(f"need at least {batches} samples for {batches} batches")
    means = np.array([b.mean() for b in np.array_split(s, batches)])
    return float(s.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def kernel_tails(model: SDDEModel, n_max: int, rule=None):
    """Projections at ``n_max`` and the summed tail ``tail_a + tail_b + tail_g`` for m = 0..n_max."""
    kernels = model.kernels()
    if rule is None:
        rule = rule_for_kernels(model.spec, n_max, [k for k in kernels.values() if k is not None])
    pks = {role: None if k is None else project_kernel(k, n_max, model.spec, rule)
           for role, k in kernels.items()}
    total = np.zeros(n_max + 1)
    for pk in pks.values():
        if pk is not None:
            total += np.maximum(pk.tails, 0.0)
    return pks, total


@dataclass
class ErrorReport:
    n_values: list
    tail_sq: list
    error: list
    stderr: list
    paths: int
    dt: float
    T: float
    seed: int
    batches: int = MIN_BATCHES
    scheme: str = "euler"
    failed_n: int | None = None
    failure: str | None = None
    tail_fit: tuple | None = field(default=None)
    error_fit: tuple | None = field(default=None)

    def ratios(self) -> np.ndarray:
        t = np.asarray(self.tail_sq, dtype=float)
        e = np.asarray(self.error, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t > 0, e / t, np.inf)

    def ratio_spread(self) -> float:
        r = self.ratios()
        return float(r.max() / r.min()) if len(r) and r.min() > 0 else math.inf

    def strictly_decreasing(self, k: float = 2.0) -> bool:
        """Each error exceeds the next by more than ``k`` combined standard errors."""
        e, s = np.asarray(self.error), np.asarray(self.stderr)
        return bool(np.all(e[:-1] - e[1:] > k * np.hypot(s[:-1], s[1:])))

    def rows(self):
        r = self.ratios()
        return [(n, t, e, s, ri) for n, t, e, s, ri in zip(self.n_values, self.tail_sq, self.error, self.stderr, r)]

    def summary(self) -> dict:
        def fit(f):
            return None if f is None else {"slope": f[0], "intercept": f[1], "r2": f[2]}
        return {
            "n_values": list(self.n_values), "paths": self.paths, "dt": self.dt, "T": self.T,
            "seed": self.seed, "batches": self.batches, "scheme": self.scheme,
            "tail_fit": fit(self.tail_fit), "error_fit": fit(self.error_fit),
            "ratio_spread": self.ratio_spread() if self.n_values else None,
            "failed_n": self.failed_n, "failure": self.failure,
        }

    def to_csv(self, path):
        return write_csv(path, ["n", "tail_sq", "error", "stderr", "ratio"], self.rows())

    def to_json(self, path):
        return write_json(path, self.summary())


def _fit_or_none(xs, ys):
    try:
        return fit_rate(xs, ys)
    except DomainError:
        return None


def error_scan(model: SDDEModel, n_list, paths: int, dt: float, T: float, seed: int = 0,
               *, control=None, scheme: str = "euler", batches: int = MIN_BATCHES,
               noise=None, rule=None) -> ErrorReport:
    """Estimate ``E[sup_t |Z - Z^n|^2]`` on shared noise for each n.

    The oracle is simulated once; every truncated chain reuses its Brownian
    increments.  A blowup stops the scan and is recorded in the report.
    """
    n_list = [int(n) for n in n_list]
    if paths < 100:
        raise DomainError("error scans need at least 100 paths")
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or not n_list or n_list[0] < 0:
        raise DomainError("n_list must be non-negative and strictly increasing")
    steps = int(round(T / dt))
    if noise is None:
        noise = brownian_increments(seed, steps, dt, paths)
    oracle = simulate_sdde(model, noise, T, control)
    pks, tails = kernel_tails(model, n_list[-1], rule)
    report = ErrorReport(n_values=[], tail_sq=[], error=[], stderr=[], paths=paths, dt=dt, T=T,
                         seed=seed, batches=batches, scheme=scheme)
    for n in n_list:
        sys = build_laguerre_system(n, model.spec, pks["alpha"], pks["beta"], pks["gamma"],
                                    model.gamma0, model.dyn)
        try:
            chain = simulate_chain(sys, sys.initial_state(model.init), noise, T, control, scheme=scheme)
        except NumericalBlowup as exc:
            report.failed_n, report.failure = n, str(exc)
            break
        sup_sq = np.max((oracle.Z - chain.Z) ** 2, axis=-1)
        mean, se = batch_stderr(sup_sq, batches)
        report.n_values.append(n)
        report.tail_sq.append(float(tails[n]))
        report.error.append(mean)
        report.stderr.append(se)
    if len(report.n_values) >= 3:
        report.tail_fit = _fit_or_none(report.n_values, report.tail_sq)
        report.error_fit = _fit_or_none(report.n_values, report.error)
    return report

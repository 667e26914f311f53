"""Reproducible Brownian increments from a counter-based generator.

Path ``i`` of a run seeded with ``seed`` always draws from Philox with key
``seed`` and the counter block reserved for ``i``, so any subset of paths can
be regenerated independently of how a run is split into batches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SpecMismatch

__all__ = ["NoisePath", "brownian_increments", "path_generator"]


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    counter = np.array([0, 0, path_index, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian increments on a uniform grid; ``increments`` is (steps,) or (paths, steps)."""

    dt: float
    increments: np.ndarray
    seed: int = 0
    first_path: int = 0

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        if not self.dt > 0:
            raise DomainError("dt must be positive")

    @property
    def n_steps(self) -> int:
        return self.increments.shape[-1]

    @property
    def n_paths(self) -> int:
        return 1 if self.increments.ndim == 1 else self.increments.shape[0]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def coarsen(self, factor: int = 2) -> "NoisePath":
        """Sum consecutive increments: the same Brownian path on a grid ``factor`` times coarser."""
        if self.n_steps % factor:
            raise SpecMismatch("step count is not divisible by the coarsening factor")
        inc = self.increments.reshape(self.increments.shape[:-1] + (-1, factor)).sum(axis=-1)
        return NoisePath(self.dt * factor, inc, self.seed, self.first_path)

    def paths(self, start: int, stop: int) -> "NoisePath":
        inc = np.atleast_2d(self.increments)[start:stop]
        return NoisePath(self.dt, inc, self.seed, self.first_path + start)

    def check_horizon(self, T: float | None) -> int:
        if T is None:
            return self.n_steps
        steps = T / self.dt
        if abs(steps - round(steps)) > 1e-12 * max(1.0, steps) or round(steps) > self.n_steps:
            raise SpecMismatch(f"T={T} is not a multiple of dt={self.dt} within the noise horizon")
        return int(round(steps))


def brownian_increments(seed: int, n_steps: int, dt: float, paths: int | None = None,
                        first_path: int = 0) -> NoisePath:
    """Increments ``sqrt(dt) * N(0, 1)``; ``paths=None`` gives a single 1-d path."""
    if n_steps < 1:
        raise DomainError("need at least one step")
    count = 1 if paths is None else paths
    out = np.empty((count, n_steps))
    scale = math.sqrt(dt)
    for i in range(count):
        out[i] = path_generator(seed, first_path + i).standard_normal(n_steps)
    out *= scale
    return NoisePath(dt, out[0] if paths is None else out, seed, first_path)

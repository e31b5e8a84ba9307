"""Brownian-driven paths and their composition with inverse subordinators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .levy import (
    HorizonError,
    LaplaceExponent,
    SubordinatorPath,
    invert_subordinator,
    sample_subordinator,
    _check_grid,
)


@dataclass(frozen=True, eq=False)
class SamplePath:
    times: np.ndarray
    values: np.ndarray
    x0: float = 0.0
    alpha: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same shape")
        if self.times.size and self.times[0] != 0.0:
            raise ValueError("paths start at time 0")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, u):
        """Linear interpolation in time."""
        return np.interp(u, self.times, self.values)


@dataclass(frozen=True, eq=False)
class TimeChangedPath:
    """X*(t) = X(E(t)) sampled at outer times.

    Outer times are nondecreasing: a repeated outer time marks an instantaneous
    move of X* (it happens when the model subordinator has zero drift).
    """

    outer_times: np.ndarray
    values: np.ndarray
    inner_times: np.ndarray
    source: SamplePath | None = None
    subordinator: SubordinatorPath | None = None

    @property
    def times(self) -> np.ndarray:
        return self.outer_times

    @property
    def horizon(self) -> float:
        return float(self.outer_times[-1])


def simulate_bm(x0: float, alpha: float, sigma: float, grid, rng: np.random.Generator) -> SamplePath:
    """X(u) = x0 + sigma B(u) - alpha u on the grid."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    g = _check_grid(grid)
    dt = np.diff(g)
    inc = sigma * np.sqrt(dt) * rng.standard_normal(dt.size) - alpha * dt
    return SamplePath(g, x0 + np.concatenate([[0.0], np.cumsum(inc)]), float(x0), float(alpha), float(sigma))


def reflect_at_running_min(path: SamplePath) -> tuple[SamplePath, np.ndarray]:
    """R = B - running min of B, and the local-time proxy start - running min."""
    m = np.minimum.accumulate(path.values)
    r = path.values - m
    lt = path.values[0] - m
    return SamplePath(path.times, r, 0.0, path.alpha, path.sigma), lt


def vertex_grid(inner: SamplePath, sub: SubordinatorPath) -> tuple[np.ndarray, np.ndarray]:
    """(outer, inner) vertices on which X* is exactly piecewise linear.

    Contains every inner grid point and both ends of every trap.
    """
    horizon = min(inner.horizon, sub.horizon)
    ug = inner.times[inner.times <= horizon]
    at, _ = sub.atoms
    at = at[at <= horizon]
    u = np.concatenate([ug, at, at])
    outer = np.concatenate([sub.value_at(ug), sub.value_left(at), sub.value_at(at)])
    key = np.concatenate([np.full(ug.size, 2), np.zeros(at.size, int), np.ones(at.size, int)])
    order = np.lexsort((outer, key, u))
    u, outer = u[order], outer[order]
    # equal (u, outer) pairs carry identical information
    keep = np.ones(u.size, bool)
    keep[1:] = (np.diff(u) != 0) | (np.diff(outer) != 0)
    u, outer = u[keep], outer[keep]
    return np.maximum.accumulate(outer), u


def time_change(inner: SamplePath, sub: SubordinatorPath, outer_grid=None) -> TimeChangedPath:
    """Compose a path with the inverse of a subordinator path.

    With no outer grid the exact vertex representation is returned.
    """
    if outer_grid is None:
        outer, e = vertex_grid(inner, sub)
    else:
        outer = np.asarray(outer_grid, dtype=float)
        if outer.ndim != 1 or np.any(np.diff(outer) < 0):
            raise ValueError("outer grid must be nondecreasing")
        e = np.atleast_1d(invert_subordinator(sub, outer))
    if e.size and e[-1] > inner.horizon + 1e-12:
        raise HorizonError("inner path too short for the requested outer horizon")
    return TimeChangedPath(outer, inner.at(e), e, inner, sub)


def gbm_under_P(x: float, sigma: float, tc: TimeChangedPath) -> TimeChangedPath:
    """Stock path x exp(sigma B*(t)) on the same outer grid."""
    return TimeChangedPath(tc.outer_times, x * np.exp(sigma * tc.values), tc.inner_times, tc.source, tc.subordinator)


def extend_subordinator(path: SubordinatorPath, exponent: LaplaceExponent, n_steps: int, step: float,
                         rng: np.random.Generator) -> SubordinatorPath:
    """Append n_steps independent cells of width step to a sampled path."""
    block = sample_subordinator(exponent, step * np.arange(n_steps + 1), rng)
    u0, s0 = path.horizon, path.max_value
    grid = np.concatenate([path.grid_times, u0 + block.grid_times[1:]])
    values = np.concatenate([path.values, s0 + block.values[1:]])
    jumps = np.concatenate([path.jumps, block.jumps + np.array([u0, 0.0])]) if len(block.jumps) else path.jumps
    return SubordinatorPath(grid, values, jumps, path.kappa_effective)


def sample_subordinator_past(exponent: LaplaceExponent, level: float, step: float,
                             rng: np.random.Generator, block: float = 1.0,
                             max_inner: float = 1e4) -> SubordinatorPath:
    """Sample S on a uniform inner grid until it exceeds ``level``."""
    n = max(1, int(round(block / step)))
    sub = sample_subordinator(exponent, step * np.arange(n + 1), rng)
    while sub.max_value <= level:
        if sub.horizon >= max_inner:
            raise HorizonError("subordinator did not pass the level before the inner cap")
        sub = extend_subordinator(sub, exponent, n, step, rng)
    return sub


def simulate_time_changed_bm(exponent: LaplaceExponent, outer_horizon: float, step: float,
                             rng: np.random.Generator, x0: float = 0.0, alpha: float = 0.0,
                             sigma: float = 1.0, reflect: bool = False, outer_grid=None,
                             max_inner: float = 1e4) -> TimeChangedPath:
    """Simulate (X, S) on an inner grid long enough that S exceeds the outer horizon."""
    rng_b, rng_s = rng.spawn(2)
    sub = sample_subordinator_past(exponent, outer_horizon, step, rng_s, max_inner=max_inner)
    bm = simulate_bm(x0, alpha, sigma, sub.grid_times, rng_b)
    if reflect:
        bm, _ = reflect_at_running_min(bm)
    return time_change(bm, sub, outer_grid)

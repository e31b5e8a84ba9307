"""Occupation measures of paths and the time-change identity A*(v) = S(A(v)) in law."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harness import TestReport, as_generator, ks_critical_value
from .levy import LaplaceExponent, sample_subordinator, subordinator_increments
from .pathlab import simulate_bm, time_change


@dataclass(frozen=True, eq=False)
class OccupationCDF:
    """A(v) = Leb{t <= horizon : X(t) <= v} at increasing levels."""

    levels: np.ndarray
    mass: np.ndarray
    horizon: float

    def __call__(self, v):
        """Right-continuous step interpolation between stored levels."""
        i = np.searchsorted(self.levels, v, side="right") - 1
        return np.where(i >= 0, self.mass[np.maximum(i, 0)], 0.0)


def sublevel_time(times, values, levels) -> np.ndarray:
    """Exact time a piecewise-linear path spends at or below each level."""
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    v = np.atleast_1d(np.asarray(levels, dtype=float))
    dt = np.diff(t)
    lo = np.minimum(x[:-1], x[1:])
    hi = np.maximum(x[:-1], x[1:])
    span = hi - lo
    flat = span == 0.0
    safe = np.where(flat, 1.0, span)
    frac = np.where(flat[None, :], (lo[None, :] <= v[:, None]).astype(float),
                    np.clip((v[:, None] - lo[None, :]) / safe[None, :], 0.0, 1.0))
    return frac @ dt


def occupation_cdf(path, horizon: float | None = None, level_grid=None) -> OccupationCDF:
    """Occupation CDF of a sampled path, linearly interpolated between samples.

    Works for SamplePath and TimeChangedPath alike; repeated times add nothing.
    """
    from .excursions import _truncate
    t = np.asarray(path.times, dtype=float)
    x = np.asarray(path.values, dtype=float)
    horizon = float(t[-1]) if horizon is None else float(horizon)
    if horizon > t[-1] + 1e-12:
        raise ValueError("path does not reach the horizon")
    t, x, _ = _truncate(t, x, t, horizon)
    levels = np.sort(np.atleast_1d(np.asarray(level_grid if level_grid is not None else np.unique(x), dtype=float)))
    return OccupationCDF(levels, sublevel_time(t, x, levels), horizon)


@dataclass(frozen=True)
class ProcessSpec:
    """X(u) = x0 + sigma B(u) - alpha u."""

    x0: float = 0.0
    alpha: float = 0.0
    sigma: float = 1.0


def time_changed_occupation(process: ProcessSpec, exponent: LaplaceExponent, tau: float,
                            levels, step: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(A*(v), kappa A(v)) over [0, S(tau)] from one joint draw of (X, S).

    The second entry is only meaningful for drift exponents, where it must agree
    with the first pathwise.
    """
    n = max(1, int(round(tau / step)))
    grid = np.linspace(0.0, tau, n + 1)
    rng_x, rng_s = rng.spawn(2)
    x = simulate_bm(process.x0, process.alpha, process.sigma, grid, rng_x)
    sub = sample_subordinator(exponent, grid, rng_s)
    tc = time_change(x, sub)
    a_star = sublevel_time(tc.outer_times, tc.values, levels)
    kappa = exponent.kappa if exponent.kind == "drift" else np.nan
    return a_star, kappa * sublevel_time(x.times, x.values, levels)


def subordinated_occupation(process: ProcessSpec, exponent: LaplaceExponent, tau: float,
                            levels, step: float, rng: np.random.Generator) -> np.ndarray:
    """S(A(v)) with S independent of X, evaluated exactly at the sorted A values."""
    n = max(1, int(round(tau / step)))
    grid = np.linspace(0.0, tau, n + 1)
    rng_x, rng_s = rng.spawn(2)
    x = simulate_bm(process.x0, process.alpha, process.sigma, grid, rng_x)
    a = sublevel_time(x.times, x.values, levels)
    order = np.argsort(a, kind="stable")
    lengths = np.diff(np.concatenate([[0.0], a[order]]))
    s = np.cumsum(subordinator_increments(exponent, lengths, rng_s))
    out = np.empty_like(a)
    out[order] = s
    return out


def verify_time_change_identity(process: ProcessSpec, exponent: LaplaceExponent, tau: float,
                                level_grid, n_paths: int, rng, step: float = 1e-3,
                                level: float = 0.01) -> TestReport:
    """Compare A*(v) with S(A(v)) at each level.

    Drift exponents are checked pathwise (same draw of X); other exponents use
    two-sample KS tests per level and on the increment between the two
    outermost levels, with a Bonferroni-corrected size.
    """
    from scipy import stats
    rng = as_generator(rng)
    levels = np.sort(np.atleast_1d(np.asarray(level_grid, dtype=float)))
    if not tau > 0:
        raise ValueError("tau must be positive")
    rng_l, rng_r = rng.spawn(2)
    left_rngs = rng_l.spawn(n_paths)
    if exponent.kind == "drift":
        err = 0.0
        for g in left_rngs:
            a_star, ka = time_changed_occupation(process, exponent, tau, levels, step, g)
            err = max(err, float(np.max(np.abs(a_star - ka))))
        return TestReport("time_change_identity_drift", err, 1e-12, bool(err > 1e-12), (n_paths,),
                          {"levels": len(levels)})
    left = np.array([time_changed_occupation(process, exponent, tau, levels, step, g)[0] for g in left_rngs])
    right = np.array([subordinated_occupation(process, exponent, tau, levels, step, g)
                      for g in rng_r.spawn(n_paths)])
    n_tests = levels.size + (1 if levels.size > 1 else 0)
    alpha = level / n_tests
    stats_ = [float(stats.ks_2samp(left[:, j], right[:, j]).statistic) for j in range(levels.size)]
    if levels.size > 1:
        stats_.append(float(stats.ks_2samp(left[:, -1] - left[:, 0], right[:, -1] - right[:, 0]).statistic))
    thr = ks_critical_value(n_paths, n_paths, alpha)
    worst = max(stats_)
    return TestReport("time_change_identity_ks", worst, thr, bool(worst > thr), (n_paths, n_paths),
                      {"levels": ";".join(f"{v:.17g}" for v in levels),
                       "per_test": ";".join(f"{d:.6g}" for d in stats_), "bonferroni_level": alpha})

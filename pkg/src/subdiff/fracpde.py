"""Time-fractional PDEs d^S u = L u, u(., 0) = f: Monte Carlo and L1 finite differences.

Two generators act on (z, s):
  heat:    L = 1/2 d_zz + d_s              (xi = (z + B(u), s + u))
  bessel:  L = 1/2 d_zz + 1/(2z) d_z + d_s (xi = (2-d Bessel from z, s + u))
The probabilistic solution is u(z, s; t) = E f(xi(E(t))).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy.linalg import solve_banded

from . import _numba as nbh
from .harness import RngStream, as_generator, concat_chunks, run_chunks
from .levy import LaplaceExponent, LevyTail, invert_subordinator, positive_stable
from .pathlab import sample_subordinator_past

KINDS = ("heat", "bessel")


class ConfigurationError(ValueError):
    """Invalid discretization settings."""


@dataclass(frozen=True)
class TimeFracProblem:
    kind: str
    initial: Callable
    exponent: LaplaceExponent
    support_radius: float = 0.0
    vanish_radius: float = 0.0
    z_max: float | None = None
    s_max: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.kind == "bessel":
            if not self.vanish_radius > 0:
                raise ValueError("the bessel problem needs initial data vanishing near z = 0")
            zz = np.linspace(0.0, self.vanish_radius, 65)[:-1]
            for s in (0.0, 1.0, 10.0):
                if np.any(np.asarray(self.initial(zz, np.full_like(zz, s))) != 0.0):
                    raise ValueError("initial data does not vanish below the declared radius")

    def f(self, z, s):
        z, s = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(s, dtype=float))
        return np.asarray(self.initial(z, s), dtype=float)


@dataclass(frozen=True)
class SolutionSample:
    value: float
    stderr: float
    n_paths: int = 0
    method: str = "mc"


# ---------------------------------------------------------------------------
# inverse subordinator samples


@numba.njit(cache=True)
def _inverse_kernel(t, h, c, beta, kappa, inner_cap, out):
    """E(t_k) for sorted t on a grid of step h; each cell's stable part is one
    atom at its midpoint, the drift part is spread linearly."""
    n, nt = out.shape
    half = 0.5 * h
    for p in range(n):
        s = 0.0
        u = 0.0
        k = 0
        while k < nt:
            atom = 0.0
            if c > 0.0:
                atom = (c * h) ** (1.0 / beta) * nbh.nb_positive_stable(beta)
            s_mid = s + kappa * half
            s_end = s_mid + atom + kappa * half
            while k < nt and t[k] < s_end:
                if t[k] < s_mid:
                    out[p, k] = u + (t[k] - s) / kappa
                elif t[k] < s_mid + atom:
                    out[p, k] = u + half
                else:
                    out[p, k] = u + half + (t[k] - s_mid - atom) / kappa
                k += 1
            s = s_end
            u += h
            if u > inner_cap:
                while k < nt:
                    out[p, k] = np.nan
                    k += 1


def _inverse_chunk(n, rng, t, step, params, inner_cap):
    c, beta, kappa = params
    nbh.seed_from(rng)
    out = np.empty((n, t.size))
    _inverse_kernel(t, step, c, beta, kappa, inner_cap, out)
    return out


def sample_inverse_subordinator(exponent: LaplaceExponent, t_grid, n_paths: int, rng,
                                step: float = 1e-3, inner_cap: float = 1e4, workers: int = 1) -> np.ndarray:
    """(n_paths, len(t_grid)) samples of E(t) sharing one path of S per row."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t < 0):
        raise ValueError("outer times must be nonnegative")
    order = np.argsort(t, kind="stable")
    ts = t[order]
    if exponent.kind in ("stable", "drift"):
        stream = rng if isinstance(rng, RngStream) else RngStream(int(as_generator(rng).integers(2**63)))
        from functools import partial
        fn = partial(_inverse_chunk, t=ts, step=float(step), params=nbh.exponent_params(exponent),
                     inner_cap=float(inner_cap))
        e_sorted = concat_chunks(run_chunks(fn, n_paths, stream, workers))
    else:
        gen = as_generator(rng)
        e_sorted = np.empty((n_paths, ts.size))
        for p in range(n_paths):
            sub = sample_subordinator_past(exponent, ts[-1], step, gen, max_inner=inner_cap)
            e_sorted[p] = invert_subordinator(sub, ts)
    out = np.empty_like(e_sorted)
    out[:, order] = e_sorted
    return out


def inverse_stable_exact(c: float, beta: float, t, n: int, rng) -> np.ndarray:
    """Exact draws of E(t) = (t / X)^beta / c, X one-sided stable."""
    x = positive_stable(beta, n, as_generator(rng))
    return np.power(float(t) / x, beta) / c


# ---------------------------------------------------------------------------
# Monte Carlo solver


def _xi_at(problem: TimeFracProblem, z, s, e, normals):
    root = np.sqrt(e)
    if problem.kind == "heat":
        zz = z + root * normals[..., 0]
    else:
        zz = np.hypot(z + root * normals[..., 0], root * normals[..., 1])
    return zz, s + e


def solve_mc_grid(problem: TimeFracProblem, z: float, s: float, t_grid, n_paths: int, rng,
                  step: float = 1e-3, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Values and standard errors on a t-grid with common random numbers."""
    if problem.kind == "bessel" and z < 0:
        raise ValueError("bessel radius must be nonnegative")
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    stream = rng if isinstance(rng, RngStream) else RngStream(int(as_generator(rng).integers(2**63)))
    e = sample_inverse_subordinator(problem.exponent, t, n_paths, stream.child("E"), step, workers=workers)
    if np.isnan(e).any():
        raise RuntimeError("inner time cap reached while inverting the subordinator")
    normals = stream.child("xi").generator().standard_normal((n_paths, 1, 2))
    zz, ss = _xi_at(problem, z, s, e, normals)
    vals = problem.f(zz, ss)
    vals = np.where(t[None, :] == 0.0, problem.f(z, s), vals)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n_paths) if n_paths > 1 else np.zeros_like(mean)
    return mean, se


def solve_mc(problem: TimeFracProblem, z: float, s: float, t: float, n_paths: int, rng,
             step: float = 1e-3, workers: int = 1) -> SolutionSample:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return SolutionSample(float(problem.f(z, s)), 0.0, n_paths, "mc")
    m, se = solve_mc_grid(problem, z, s, [t], n_paths, rng, step, workers)
    return SolutionSample(float(m[0]), float(se[0]), n_paths, "mc")


# ---------------------------------------------------------------------------
# L1 finite differences


def generalized_kernel_weights(tail: LevyTail, kappa: float, time_grid) -> np.ndarray:
    """Matrix M with (M f)[n] approximating kappa f'(t_n) + d/dt int_0^t w(t - x)(f(x) - f(0)) dx.

    f is taken piecewise linear on the grid, so the convolution part becomes
    sum_j (f_{j+1} - f_j) (W(t_n - t_j) - W(t_n - t_{j+1})) / dt_j with W' = w,
    and the drift part a backward difference.  Row 0 is zero.
    """
    t = np.asarray(time_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing from 0")
    n = t.size
    dt = np.diff(t)
    diff = t[:, None] - t[None, :]
    W = tail.integral(np.maximum(diff, 0.0))
    a = np.zeros((n, n - 1))
    for i in range(1, n):
        a[i, :i] = (W[i, :i] - W[i, 1:i + 1]) / dt[:i]
    m = np.zeros((n, n))
    m[:, 1:] += a
    m[:, :-1] -= a
    if kappa:
        idx = np.arange(1, n)
        m[idx, idx] += kappa / dt
        m[idx, idx - 1] -= kappa / dt
    return m


def l1_weights_textbook(beta: float, n: int, dt: float) -> np.ndarray:
    """Uniform-grid L1 coefficients b_j = ((j+1)^(1-beta) - j^(1-beta)) dt^-beta / Gamma(2-beta)."""
    from scipy.special import gamma as gamma_fn
    j = np.arange(n)
    return ((j + 1.0) ** (1 - beta) - j ** (1.0 - beta)) * dt ** (-beta) / gamma_fn(2.0 - beta)


def graded_mesh(T: float, n: int, r: float) -> np.ndarray:
    return T * (np.arange(n + 1) / n) ** r


def _z_operator(kind: str, zg: np.ndarray, dz: float):
    """Tridiagonal coefficients (lower, diag, upper) of the z-part of L."""
    m = zg.size
    if kind == "heat":
        lo = np.full(m, 0.5 / dz**2)
        up = np.full(m, 0.5 / dz**2)
    else:
        zl = np.maximum(zg - 0.5 * dz, 0.0)
        zr = zg + 0.5 * dz
        lo = zl / (2.0 * zg * dz**2)
        up = zr / (2.0 * zg * dz**2)
    return lo, -(lo + up), up


def solve_caputo_l1(problem: TimeFracProblem, z: float, s: float, t: float, n_steps: int = 128,
                    dz: float = 0.025, ds: float = 0.05, grading: float | None = None,
                    error_estimate: bool = True) -> SolutionSample:
    """Implicit L1 scheme on a graded time mesh; central in z, upwind in s.

    The heat grid is centred at z with half width z_max; the bessel grid uses
    cell centres (i + 1/2) dz so z = 0 is never a node, with zero flux through
    the origin.  Far boundaries hold the initial data.  The error estimate is
    the change against the same scheme with half the time steps.
    """
    val = _l1_value(problem, z, s, t, n_steps, dz, ds, grading)
    err = abs(val - _l1_value(problem, z, s, t, max(2, n_steps // 2), dz, ds, grading)) if error_estimate else np.nan
    return SolutionSample(val, float(err), 0, "l1")


def _l1_value(problem, z, s, t, n_steps, dz, ds, grading):
    u = solve_caputo_l1_field(problem, z, s, t, n_steps, dz, ds, grading)
    zg, field = u
    if problem.kind == "heat":
        return float(np.interp(z, zg, field[0]))
    if z < zg[0]:
        u0 = (9.0 * field[0, 0] - field[0, 1]) / 8.0
        return float(u0 + (field[0, 0] - u0) * (z / zg[0]) ** 2)
    return float(np.interp(z, zg, field[0]))


def solve_caputo_l1_field(problem: TimeFracProblem, z: float, s: float, t: float, n_steps: int = 128,
                          dz: float = 0.025, ds: float = 0.05, grading: float | None = None):
    """(z grid, u at time t on the s-rows starting at s)."""
    e = problem.exponent
    if e.kind == "stable":
        tail, kappa, beta = LevyTail.stable(e.c, e.beta), 0.0, e.beta
    elif e.kind == "drift":
        tail, kappa, beta = LevyTail.zero(), e.kappa, 1.0
    else:
        tail, kappa, beta = e.levy_tail(), e.kappa, 0.5
    if not (dz > 0 and ds > 0) or n_steps < 2:
        raise ConfigurationError("grid steps must be positive and n_steps >= 2")
    r = (2.0 - beta) / beta if grading is None else float(grading)
    if r < 1.0:
        raise ConfigurationError("mesh grading must be >= 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    half = 6.0 * np.sqrt(max(t, 1e-12)) + problem.support_radius
    if problem.kind == "heat":
        width = problem.z_max if problem.z_max is not None else half
        m = int(np.ceil(width / dz))
        zg = z + dz * np.arange(-m, m + 1)
    else:
        width = problem.z_max if problem.z_max is not None else z + half
        m = int(np.ceil(width / dz))
        zg = dz * (np.arange(m) + 0.5)
    s_span = problem.s_max - s if problem.s_max is not None else 10.0 * max(1.0, t)
    ns = int(np.ceil(s_span / ds))
    sg = s + ds * np.arange(ns + 1)
    Z, Sg = np.meshgrid(zg, sg)
    u0 = problem.f(Z, Sg)
    if t == 0:
        return zg, u0
    tg = graded_mesh(t, n_steps, r)
    M = generalized_kernel_weights(tail, kappa, tg)
    lo, di, up = _z_operator(problem.kind, zg, dz)
    nz = zg.size
    # Dirichlet at the far z edge(s); zero flux at the bessel origin is already in lo[0] = 0
    left_fixed = problem.kind == "heat"
    states = np.empty((tg.size,) + u0.shape)
    states[0] = u0
    for n in range(1, tg.size):
        hist = np.tensordot(M[n, :n], states[:n], axes=1)
        ab = np.zeros((3, nz))
        ab[0, 1:] = -up[:-1]
        ab[1] = M[n, n] - di + 1.0 / ds
        ab[2, :-1] = -lo[1:]
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        if left_fixed:
            ab[1, 0] = 1.0
            ab[0, 1] = 0.0
        new = states[n]
        new[-1] = u0[-1]
        for k in range(ns - 1, -1, -1):
            rhs = new[k + 1] / ds - hist[k]
            rhs[-1] = u0[k, -1]
            if left_fixed:
                rhs[0] = u0[k, 0]
            new[k] = solve_banded((1, 1), ab, rhs, check_finite=False)
    return zg, states[-1]

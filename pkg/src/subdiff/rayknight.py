"""Laplace functionals of occupation times of time-changed drifted Brownian motion
killed at 0, through the backward Riccati equation and CBI processes.

For X(t) = x + B(t) - alpha t and tau* the hitting time of 0 by X*(t) = X(E(t)),
E exp(-int_0^tau* g(X*)) = exp(-2 int_0^x u) with
u(r) + 2 int_r^a (u^2 + alpha u) = int_r^a phi(g).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from . import _numba as nbh
from .harness import RngStream, as_generator, concat_chunks, run_chunks
from .levy import LaplaceExponent, phi_eval
from .pathlab import SamplePath


class NumericalError(ArithmeticError):
    """A numerical tolerance could not be met."""


@dataclass(frozen=True)
class StepFunction:
    """g(y) = values[i] on [breaks[i], breaks[i+1]), zero elsewhere."""

    breaks: tuple
    values: tuple

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        if b.size != len(self.values) + 1 or np.any(np.diff(b) <= 0):
            raise ValueError("breaks must be increasing with one more entry than values")
        if np.any(np.asarray(self.values) < 0):
            raise ValueError("g must be nonnegative")

    @staticmethod
    def indicator(lo: float, hi: float, level: float = 1.0) -> "StepFunction":
        return StepFunction((float(lo), float(hi)), (float(level),))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        b = np.asarray(self.breaks)
        v = np.concatenate([[0.0], np.asarray(self.values, dtype=float), [0.0]])
        return v[np.searchsorted(b, y, side="right")]

    @property
    def support_end(self) -> float:
        return float(self.breaks[-1])


@dataclass(frozen=True)
class RiccatiProblem:
    a: float
    alpha: float
    exponent: LaplaceExponent
    g: Callable
    breakpoints: tuple = ()

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def forcing(self, r):
        return phi_eval(self.exponent, np.asarray(self.g(r), dtype=float))

    def all_breakpoints(self) -> tuple:
        b = list(self.breakpoints)
        if isinstance(self.g, StepFunction):
            b += list(self.g.breaks)
        return tuple(b)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    r: np.ndarray
    u: np.ndarray
    u_mid: np.ndarray
    residual: float
    a: float

    def integral(self, x: float) -> float:
        """int_0^x u, with u = 0 above a; x must be a node or at least a."""
        if x < 0:
            raise ValueError("x must be nonnegative")
        x = min(x, self.a)
        k = int(np.searchsorted(self.r, x))
        if k >= self.r.size or not np.isclose(self.r[k], x, rtol=0, atol=1e-13):
            raise ValueError("x is not a node of the solution grid")
        h = np.diff(self.r[:k + 1])
        return float(np.sum(h * (self.u[:k] + 4.0 * self.u_mid[:k] + self.u[1:k + 1]) / 6.0))


def _grid(a: float, step: float, extra) -> np.ndarray:
    pts = [0.0, a] + [p for p in extra if 0.0 < p < a]
    pts = np.unique(np.asarray(pts, dtype=float))
    pieces = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        m = max(1, int(np.ceil((hi - lo) / step - 1e-9)))
        pieces.append(np.linspace(lo, hi, m + 1)[:-1])
    return np.concatenate(pieces + [[a]])


def _rk4_backward(psi2: float, psi1: float, forcing: Callable, grid: np.ndarray, terminal: float):
    """Integrate u' = psi2 u^2 + psi1 u - h(r) from grid[-1] down to grid[0].

    h is sampled strictly inside each cell so jumps at nodes are resolved.
    Returns node values and midpoint values.
    """
    f = lambda u, hv: psi2 * u * u + psi1 * u - hv
    n = grid.size
    u = np.empty(n)
    um = np.empty(n - 1)
    u[-1] = terminal
    hi = grid[1:]
    lo = grid[:-1]
    eps = 1e-12 * np.maximum(1.0, np.abs(hi))
    h_top = forcing(hi - eps)
    h_mid = forcing(0.5 * (lo + hi))
    h_bot = forcing(lo + eps)
    h_q = forcing(hi - 0.25 * (hi - lo))
    for i in range(n - 2, -1, -1):
        dh = -(grid[i + 1] - grid[i])
        y = u[i + 1]
        k1 = f(y, h_top[i])
        k2 = f(y + 0.5 * dh * k1, h_mid[i])
        k3 = f(y + 0.5 * dh * k2, h_mid[i])
        k4 = f(y + dh * k3, h_bot[i])
        u[i] = y + dh * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        # half step for the midpoint value used by Simpson's rule
        hh = 0.5 * dh
        q1 = k1
        q2 = f(y + 0.5 * hh * q1, h_q[i])
        q3 = f(y + 0.5 * hh * q2, h_q[i])
        q4 = f(y + hh * q3, h_mid[i])
        um[i] = y + hh * (q1 + 2 * q2 + 2 * q3 + q4) / 6.0
    return u, um, h_top, h_mid, h_bot


def _simpson_cells(grid, left, mid, right):
    return np.diff(grid) * (left + 4.0 * mid + right) / 6.0


def solve_u(problem: RiccatiProblem, step: float | None = None, nodes=(), tol: float = 1e-6) -> RiccatiSolution:
    """Backward RK4 for u' = 2u^2 + 2 alpha u - phi(g), u(a) = 0.

    The residual of the integral equation is evaluated with cellwise Simpson
    sums; values below -1e-12 are clipped to 0 with a warning.
    """
    a = problem.a
    step = 1e-3 * a if step is None else float(step)
    if not (0 < step <= 1e-3 * a * (1 + 1e-12)):
        raise ValueError("step must be positive and at most 1e-3 * a")
    grid = _grid(a, step, tuple(problem.all_breakpoints()) + tuple(nodes))
    al = problem.alpha
    u, um, h_top, h_mid, h_bot = _rk4_backward(2.0, 2.0 * al, problem.forcing, grid, 0.0)
    if np.any(u < -1e-12) or np.any(um < -1e-12):
        warnings.warn("negative values in the Riccati solution were clipped to 0", RuntimeWarning)
    u = np.where(u < -1e-12, 0.0, u)
    um = np.where(um < -1e-12, 0.0, um)
    q = lambda v: v * v + al * v
    cells_q = _simpson_cells(grid, q(u[:-1]), q(um), q(u[1:]))
    cells_h = _simpson_cells(grid, h_bot, h_mid, h_top)
    tail_q = np.concatenate([np.cumsum(cells_q[::-1])[::-1], [0.0]])
    tail_h = np.concatenate([np.cumsum(cells_h[::-1])[::-1], [0.0]])
    resid = float(np.max(np.abs(u + 2.0 * tail_q - tail_h)))
    if resid > tol:
        raise NumericalError(f"Riccati residual {resid:.3e} exceeds {tol:.1e}")
    return RiccatiSolution(grid, u, um, resid, a)


def lt_occupation_functional(problem: RiccatiProblem, x: float, step: float | None = None) -> float:
    """exp(-2 int_0^x u)."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    sol = solve_u(problem, step, nodes=(x,) if x < problem.a else ())
    return float(np.exp(-2.0 * sol.integral(x)))


# ---------------------------------------------------------------------------
# CBI processes


@dataclass(frozen=True)
class CBISpec:
    """Branching psi(l) = quad l^2 + lin l; immigration phi_hat(l) = imm l."""

    alpha: float = 0.0
    immigration: float = 2.0
    x0: float = 0.0
    r0: float = 0.0
    quad: float = 2.0

    def __post_init__(self):
        if self.quad < 0 or self.immigration < 0 or self.x0 < 0:
            raise ValueError("CBI coefficients and start must be nonnegative")

    @property
    def lin(self) -> float:
        return 2.0 * self.alpha

    def psi(self, lam):
        return self.quad * lam * lam + self.lin * lam

    def phi_hat(self, lam):
        return self.immigration * lam


def cbi_simulate_batch(spec: CBISpec, horizon: float, step: float, n_paths: int, rng) -> np.ndarray:
    """Full-truncation Euler for dZ = (imm - lin Z) dv + sqrt(2 quad Z^+) dW on a uniform grid."""
    rng = as_generator(rng)
    if not step > 0:
        raise ValueError("step must be positive")
    m = int(np.ceil(horizon / step - 1e-9))
    h = horizon / m if m else 0.0
    out = np.empty((n_paths, m + 1))
    z = np.full(n_paths, float(spec.x0))
    out[:, 0] = z
    vol = np.sqrt(2.0 * spec.quad)
    for k in range(m):
        zp = np.maximum(z, 0.0)
        z = z + (spec.immigration - spec.lin * zp) * h + vol * np.sqrt(zp * h) * rng.standard_normal(n_paths)
        z = np.maximum(z, 0.0)
        out[:, k + 1] = z
    return out


def cbi_simulate(spec: CBISpec, horizon: float, step: float, rng) -> SamplePath:
    z = cbi_simulate_batch(spec, horizon, step, 1, rng)[0]
    grid = np.linspace(0.0, horizon, z.size) if z.size > 1 else np.zeros(1)
    return SamplePath(grid, z, spec.x0, spec.alpha, 1.0)


def cbi_integral_lt(spec: CBISpec, g: Callable, K: float, x: float | None = None,
                    exponent: LaplaceExponent | None = None, step: float | None = None,
                    terminal: float = 0.0, breakpoints=()) -> float:
    """E exp(-int_r0^K phi(g(v)) Z(v) dv - terminal Z(K)) for Z ~ CBI started at (r0, x).

    Equals exp(-x u(r0) - int_r0^K phi_hat(u)) with u' = psi(u) - phi(g), u(K) = terminal.
    Without an exponent phi is the identity.
    """
    x = spec.x0 if x is None else float(x)
    r0 = spec.r0
    if K <= r0:
        return float(np.exp(-x * terminal))
    step = 1e-3 * (K - r0) if step is None else float(step)
    extra = tuple(breakpoints) + (tuple(g.breaks) if isinstance(g, StepFunction) else ())
    grid = r0 + _grid(K - r0, step, tuple(p - r0 for p in extra))
    if exponent is None:
        forcing = lambda r: np.asarray(g(r), dtype=float)
    else:
        forcing = lambda r: phi_eval(exponent, np.asarray(g(r), dtype=float))
    u, um, *_ = _rk4_backward(spec.quad, spec.lin, forcing, grid, float(terminal))
    integ = float(np.sum(_simpson_cells(grid, spec.phi_hat(u[:-1]), spec.phi_hat(um), spec.phi_hat(u[1:]))))
    return float(np.exp(-x * u[0] - integ))


def cbi_two_piece_lt(alpha: float, exponent: LaplaceExponent, g: Callable, x: float, a: float,
                     step: float | None = None) -> float:
    """Occupation functional from the concatenation: immigration on [0, x], none on [x, a]."""
    if x >= a:
        return cbi_integral_lt(CBISpec(alpha, 2.0, 0.0, 0.0), g, a, exponent=exponent, step=step,
                               breakpoints=(x,))
    step = 1e-3 * a if step is None else step
    w = _terminal_value(alpha, exponent, g, x, a, step)
    return cbi_integral_lt(CBISpec(alpha, 2.0, 0.0, 0.0), g, x, exponent=exponent, step=step, terminal=w)


def _terminal_value(alpha, exponent, g, x, a, step):
    """w(x) for w' = psi(w) - phi(g) on [x, a], w(a) = 0 (the second piece)."""
    extra = tuple(g.breaks) if isinstance(g, StepFunction) else ()
    grid = x + _grid(a - x, step, tuple(p - x for p in extra))
    forcing = lambda r: phi_eval(exponent, np.asarray(g(r), dtype=float))
    u, *_ = _rk4_backward(2.0, 2.0 * alpha, forcing, grid, 0.0)
    return float(u[0])


def cbi_mc_integral_lt(spec: CBISpec, g: Callable, K: float, step: float, n_paths: int, rng) -> tuple[float, float]:
    """Monte Carlo of E exp(-int g(v) Z(v) dv) over Euler CBI paths (trapezoid in v)."""
    z = cbi_simulate_batch(spec, K, step, n_paths, rng)
    v = np.linspace(spec.r0, K, z.shape[1])
    gv = np.asarray(g(v), dtype=float)
    h = v[1] - v[0]
    integ = h * (0.5 * (gv[0] * z[:, 0] + gv[-1] * z[:, -1]) + z[:, 1:-1] @ gv[1:-1])
    val = np.exp(-integ)
    return float(val.mean()), float(val.std(ddof=1) / np.sqrt(n_paths))


# ---------------------------------------------------------------------------
# Monte Carlo of the time-changed functional


@numba.njit(cache=True)
def _rk_kernel(z, rows, sqh, h, alpha, breaks, vals, c, beta, kappa, inner_cap,
               xs, us, run_len, run_g, total, status):
    m = z.shape[1]
    nb = breaks.size
    for r in range(rows.size):
        p = rows[r]
        x = xs[p]
        u = us[p]
        for k in range(m):
            xn = x + sqh * z[r, k] - alpha * h
            killed = xn <= 0.0
            if not killed and x * xn < 20.0 * h:
                killed = np.random.random() < np.exp(-2.0 * x * xn / h)
            y = 0.5 * (x + xn)
            if killed:
                y = 0.5 * x
            gi = 0.0
            for j in range(nb - 1):
                if breaks[j] <= y < breaks[j + 1]:
                    gi = vals[j]
                    break
            if gi != run_g[p]:
                if run_g[p] > 0.0 and run_len[p] > 0.0:
                    total[p] += run_g[p] * nbh.nb_sub_length(run_len[p], c, beta, kappa)
                run_g[p] = gi
                run_len[p] = 0.0
            if killed:
                run_len[p] += 0.5 * h
                if run_g[p] > 0.0:
                    total[p] += run_g[p] * nbh.nb_sub_length(run_len[p], c, beta, kappa)
                status[p] = 1
                break
            run_len[p] += h
            x = xn
            u += h
            if u >= inner_cap:
                status[p] = 2
                break
        xs[p] = x
        us[p] = u


def _rk_chunk(n, rng, x0, alpha, breaks, vals, params, step, inner_cap, block):
    c, beta, kappa = params
    nbh.seed_from(rng)
    xs = np.full(n, float(x0))
    us = np.zeros(n)
    run_len = np.zeros(n)
    run_g = np.zeros(n)
    total = np.zeros(n)
    status = np.zeros(n, np.int64)
    active = np.arange(n)
    if x0 <= 0:
        status[:] = 1
        active = active[:0]
    while active.size:
        z = rng.standard_normal((active.size, block))
        _rk_kernel(z, active, np.sqrt(step), step, alpha, breaks, vals, c, beta, kappa, inner_cap,
                   xs, us, run_len, run_g, total, status)
        active = active[status[active] == 0]
    return {"value": np.exp(-total), "status": status}


def mc_occupation_functional(exponent: LaplaceExponent, alpha: float, g: StepFunction, x: float,
                             n_paths: int, stream: RngStream, step: float = 1e-3,
                             inner_cap: float = 1e3, workers: int = 1, block: int = 512) -> dict:
    """E exp(-int_0^tau g(X(u)) dS(u)) with the inner path killed at 0.

    Killing uses the Brownian-bridge crossing probability inside each step;
    S is drawn once per run of constant g(X), which is exact in law.
    Censored paths (inner cap reached) are reported and kept with their
    accumulated value.
    """
    from functools import partial
    fn = partial(_rk_chunk, x0=float(x), alpha=float(alpha), breaks=np.asarray(g.breaks, dtype=float),
                 vals=np.asarray(g.values, dtype=float), params=nbh.exponent_params(exponent),
                 step=float(step), inner_cap=float(inner_cap), block=block)
    out = concat_chunks(run_chunks(fn, n_paths, stream, workers))
    v = out["value"]
    return {"value": float(v.mean()), "stderr": float(v.std(ddof=1) / np.sqrt(v.size)),
            "censored_fraction": float(np.mean(out["status"] == 2)), "n_paths": int(v.size)}

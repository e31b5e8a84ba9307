"""Laplace exponents, subordinator sampling and right-continuous inverses.

A sampled subordinator is stored as grid values plus a list of atoms.  Recorded
jumps are atoms at their exact times.  Whatever part of a grid increment is not
explained by the drift and the recorded jumps (for stable paths: all of it) is
placed as one atom at the cell midpoint.  Between atoms S is affine with slope
kappa_effective, which makes S right-continuous and the inverse exact on the
model path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn


class HorizonError(ValueError):
    """Query beyond the simulated horizon; the caller must extend the path."""


# ---------------------------------------------------------------------------
# Levy tails


@dataclass(frozen=True)
class LevyTail:
    """Tail function w(x) = nu((x, inf)).

    ``integral_0_1`` is the integrability certificate for int_0^1 w.  An
    optional closed-form ``inverse`` maps v in (0, w(0+)) to sup{y: w(y) > v}.
    """

    w: Callable
    integral_0_1: float
    infinite_mass: bool
    inverse: Callable | None = None
    breakpoints: tuple = ()
    name: str = "custom"
    primitive: Callable | None = None

    def __post_init__(self):
        if not np.isfinite(self.integral_0_1) or self.integral_0_1 < 0:
            raise ValueError("tail is not integrable at 0")

    def __call__(self, x):
        return np.asarray(self.w(np.asarray(x, dtype=float)), dtype=float)

    @staticmethod
    def stable(c: float, beta: float) -> "LevyTail":
        """Tail of the stable exponent c*lambda**beta: w(x) = c x^-beta / Gamma(1-beta)."""
        _check_beta(beta)
        k = c / gamma_fn(1.0 - beta)
        return LevyTail(
            w=lambda x: k * np.power(x, -beta),
            integral_0_1=k / (1.0 - beta),
            infinite_mass=True,
            inverse=lambda v: np.power(np.asarray(v) / k, -1.0 / beta),
            name=f"stable(c={c}, beta={beta})",
            primitive=lambda y: k * np.power(y, 1.0 - beta) / (1.0 - beta),
        )

    @staticmethod
    def truncated_stable(c: float, beta: float, cutoff: float) -> "LevyTail":
        """Stable Levy density restricted to jump sizes at most ``cutoff``."""
        _check_beta(beta)
        k = c / gamma_fn(1.0 - beta)
        tail_r = k * cutoff ** (-beta)

        def w(x):
            x = np.asarray(x, dtype=float)
            return np.where(x < cutoff, k * np.power(np.maximum(x, 1e-300), -beta) - tail_r, 0.0)

        def inv(v):
            return np.minimum(np.power((np.asarray(v) + tail_r) / k, -1.0 / beta), cutoff)

        lo = min(1.0, cutoff)
        cert = k * lo ** (1 - beta) / (1 - beta) - tail_r * lo
        return LevyTail(w, cert, True, inv, (cutoff,), f"truncated_stable({c}, {beta}, {cutoff})")

    @staticmethod
    def unit_mass(size: float = 1.0, rate: float = 1.0) -> "LevyTail":
        """Jumps of one fixed size at the given rate (compound Poisson)."""
        return LevyTail(
            w=lambda x: np.where(np.asarray(x) < size, rate, 0.0),
            integral_0_1=rate * min(size, 1.0),
            infinite_mass=False,
            inverse=lambda v: np.full(np.shape(v), float(size)),
            breakpoints=(size,),
            name=f"unit_mass({size})",
            primitive=lambda y: rate * np.minimum(y, size),
        )

    @staticmethod
    def exponential(rate: float = 1.0, mass: float = 1.0) -> "LevyTail":
        """Exponential jump sizes with total mass ``mass``: w(x) = mass * exp(-rate x)."""
        return LevyTail(
            w=lambda x: mass * np.exp(-rate * np.asarray(x)),
            integral_0_1=mass * (1 - np.exp(-rate)) / rate,
            infinite_mass=False,
            inverse=lambda v: -np.log(np.asarray(v) / mass) / rate,
            name=f"exponential({rate})",
            primitive=lambda y: mass * -np.expm1(-rate * np.asarray(y)) / rate,
        )

    @staticmethod
    def zero() -> "LevyTail":
        return LevyTail(lambda x: np.zeros(np.shape(x)), 0.0, False,
                        lambda v: np.full(np.shape(v), np.inf), (), "zero", lambda y: np.zeros(np.shape(y)))

    def integral(self, y):
        """W(y) = int_0^y w(x) dx, vectorized over y >= 0."""
        y = np.asarray(y, dtype=float)
        if self.primitive is not None:
            return np.asarray(self.primitive(y), dtype=float)
        flat = y.ravel()
        out = np.empty(flat.size)
        for i, b in enumerate(flat):
            pts = [p for p in self.breakpoints if 0 < p < b] or None
            out[i] = integrate.quad(lambda x: float(self(x)), 0.0, b, points=pts, limit=200)[0] if b > 0 else 0.0
        return out.reshape(y.shape)

    def mass_above(self, delta: float) -> float:
        """nu([delta, inf)), taking the left limit of w at delta."""
        return float(self(delta * (1.0 - 1e-12)))

    def small_jump_mean(self, delta: float) -> float:
        """int_0^delta y nu(dy) = int_0^delta (w(y) - w(delta)) dy."""
        wd = float(self(delta))
        pts = [p for p in self.breakpoints if 0 < p < delta] or None
        val, _ = integrate.quad(lambda y: float(self(y)) - wd, 0.0, delta, points=pts, limit=200)
        return max(val, 0.0)

    def integral_exp(self, lam: float) -> float:
        """int_0^inf exp(-lam r) w(r) dr."""
        f = lambda r: np.exp(-lam * r) * float(self(r))
        pts = [p for p in self.breakpoints if 0 < p < 1] or None
        a, _ = integrate.quad(f, 0.0, 1.0, points=pts, limit=200)
        tail_pts = [p for p in self.breakpoints if p > 1]
        if tail_pts:
            hi = max(tail_pts) + 1.0
            b, _ = integrate.quad(f, 1.0, hi, points=tail_pts, limit=200)
            b2, _ = integrate.quad(f, hi, np.inf, limit=200)
            b += b2
        else:
            b, _ = integrate.quad(f, 1.0, np.inf, limit=200)
        return a + b

    def sample_sizes(self, n: int, delta: float, rng: np.random.Generator) -> np.ndarray:
        """Jump sizes from nu restricted to [delta, inf), by tail inversion."""
        top = self.mass_above(delta)
        v = top * (1.0 - rng.random(n))  # in (0, top]
        if self.inverse is not None:
            return np.maximum(self.inverse(v), delta)
        return self._bisect_inverse(v, delta)

    def _bisect_inverse(self, v: np.ndarray, delta: float) -> np.ndarray:
        lo = np.full(v.shape, np.log(delta))
        hi = lo + 1.0
        for _ in range(200):
            bad = self(np.exp(hi)) >= v
            if not bad.any():
                break
            hi = np.where(bad, hi + (hi - lo) * 2.0 + 1.0, hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = self(np.exp(mid)) >= v
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return np.exp(hi)


def default_truncation(tail: LevyTail, tol: float = 1e-4) -> float:
    """Largest delta = 2**-k with int_0^delta y nu(dy) < tol."""
    delta = 1.0
    for _ in range(400):
        if tail.small_jump_mean(delta) < tol:
            return delta
        delta *= 0.5
    raise ValueError("could not find a truncation level for this tail")


# ---------------------------------------------------------------------------
# Laplace exponents


def _check_beta(beta):
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")


@dataclass(frozen=True)
class LaplaceExponent:
    kind: str
    c: float = 0.0
    beta: float = 0.0
    kappa: float = 0.0
    tail: LevyTail | None = None
    delta: float | None = None

    @staticmethod
    def stable(c: float, beta: float) -> "LaplaceExponent":
        _check_beta(beta)
        if not c > 0:
            raise ValueError("stable scale c must be positive")
        return LaplaceExponent("stable", c=float(c), beta=float(beta))

    @staticmethod
    def drift(kappa: float) -> "LaplaceExponent":
        if kappa < 0:
            raise ValueError("drift must be nonnegative")
        return LaplaceExponent("drift", kappa=float(kappa))

    @staticmethod
    def drift_plus_jumps(kappa: float, tail: LevyTail, delta: float | None = None,
                         strict: bool = True) -> "LaplaceExponent":
        if kappa < 0:
            raise ValueError("drift must be nonnegative")
        if strict and kappa == 0 and not tail.infinite_mass:
            raise ValueError("kappa = 0 needs a tail with infinite total mass")
        if delta is not None and delta <= 0:
            raise ValueError("truncation delta must be positive")
        return LaplaceExponent("driftPlusJumps", kappa=float(kappa), tail=tail, delta=delta)

    def __call__(self, lam):
        return phi_eval(self, lam)

    @cached_property
    def truncation(self) -> float:
        if self.kind != "driftPlusJumps":
            return np.inf
        return self.delta if self.delta is not None else default_truncation(self.tail)

    @cached_property
    def kappa_effective(self) -> float:
        """Drift used in simulation: kappa plus the compensated small jumps."""
        if self.kind == "stable":
            return 0.0
        if self.kind == "drift":
            return self.kappa
        return self.kappa + self.tail.small_jump_mean(self.truncation)

    @property
    def strictly_increasing(self) -> bool:
        if self.kind == "stable":
            return True
        if self.kind == "drift":
            return self.kappa > 0
        return self.kappa > 0 or self.tail.infinite_mass

    def levy_tail(self) -> LevyTail:
        if self.kind == "stable":
            return LevyTail.stable(self.c, self.beta)
        if self.kind == "drift":
            return LevyTail.zero()
        return self.tail


def phi_eval(exponent: LaplaceExponent, lam):
    """phi(lambda); accepts scalars or arrays."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0) or np.any(np.isnan(lam_arr)):
        raise ValueError("lambda must be nonnegative")
    if exponent.kind == "stable":
        out = exponent.c * np.power(lam_arr, exponent.beta)
    elif exponent.kind == "drift":
        out = exponent.kappa * lam_arr
    else:
        tail = exponent.tail
        flat = lam_arr.ravel()
        vals = np.array([0.0 if l == 0 else exponent.kappa * l + l * tail.integral_exp(l) for l in flat])
        out = vals.reshape(lam_arr.shape)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Stable variates


def kanter_transform(beta: float, u, e):
    """Positive stable variate with E exp(-lam X) = exp(-lam**beta).

    u is uniform on (0, 1) (mapped to an angle in (0, pi)), e is Exp(1).
    """
    theta = np.pi * np.asarray(u)
    a = (np.sin((1.0 - beta) * theta) * np.sin(beta * theta) ** (beta / (1.0 - beta))
         / np.sin(theta) ** (1.0 / (1.0 - beta)))
    return (a / np.asarray(e)) ** ((1.0 - beta) / beta)


def positive_stable(beta: float, size, rng: np.random.Generator) -> np.ndarray:
    _check_beta(beta)
    u = rng.random(size)
    u = np.where(u == 0.0, 0.5, u)
    e = rng.standard_exponential(size)
    return kanter_transform(beta, u, e)


def subordinator_increments(exponent: LaplaceExponent, lengths, rng: np.random.Generator) -> np.ndarray:
    """Independent increments S(u + l) - S(u) for each inner length l."""
    lengths = np.asarray(lengths, dtype=float)
    if exponent.kind == "stable":
        x = positive_stable(exponent.beta, lengths.shape, rng)
        return np.power(exponent.c * lengths, 1.0 / exponent.beta) * x
    if exponent.kind == "drift":
        return exponent.kappa * lengths
    delta = exponent.truncation
    rate = exponent.tail.mass_above(delta)
    counts = rng.poisson(rate * lengths)
    out = exponent.kappa_effective * lengths
    total = int(counts.sum())
    if total:
        sizes = exponent.tail.sample_sizes(total, delta, rng)
        owner = np.repeat(np.arange(lengths.size), counts.ravel())
        out = out + np.bincount(owner, weights=sizes, minlength=lengths.size).reshape(lengths.shape)
    return out


# ---------------------------------------------------------------------------
# Paths


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or g[0] != 0.0 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing from 0")
    return g


@dataclass(frozen=True, eq=False)
class SubordinatorPath:
    grid_times: np.ndarray
    values: np.ndarray
    jumps: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    kappa_effective: float = 0.0

    def __post_init__(self):
        if self.values[0] != 0.0:
            raise ValueError("S(0) must be 0")
        inc = np.diff(self.values) - self.kappa_effective * np.diff(self.grid_times)
        if np.any(inc < -1e-9 * max(1.0, float(self.values[-1]))):
            raise ValueError("increments must dominate the drift")

    @property
    def horizon(self) -> float:
        return float(self.grid_times[-1])

    @property
    def max_value(self) -> float:
        return float(self.values[-1])

    @cached_property
    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """(times, sizes) of all atoms: recorded jumps plus midpoint residuals."""
        g = self.grid_times
        jt = np.asarray(self.jumps[:, 0]) if len(self.jumps) else np.zeros(0)
        js = np.asarray(self.jumps[:, 1]) if len(self.jumps) else np.zeros(0)
        # cell k is (g[k], g[k+1]]
        cell = np.clip(np.searchsorted(g, jt, side="left") - 1, 0, g.size - 2) if jt.size else jt.astype(int)
        explained = np.bincount(cell, weights=js, minlength=g.size - 1) if jt.size else np.zeros(g.size - 1)
        resid = np.diff(self.values) - self.kappa_effective * np.diff(g) - explained
        scale = max(1.0, float(self.values[-1]))
        keep = resid > 1e-12 * scale
        mid = 0.5 * (g[:-1] + g[1:])
        t = np.concatenate([jt, mid[keep]])
        s = np.concatenate([js, resid[keep]])
        order = np.argsort(t, kind="stable")
        return t[order], s[order]

    @cached_property
    def knots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, S(u-), S(u)) at every atom, preceded by the origin."""
        t, s = self.atoms
        u = np.concatenate([[0.0], t])
        sizes = np.concatenate([[0.0], s])
        before = np.concatenate([[0.0], np.cumsum(s)[:-1]]) if s.size else np.zeros(0)
        left = np.concatenate([[0.0], self.kappa_effective * t + before])
        return u, left, left + sizes

    def value_at(self, u):
        """Right-continuous S(u) for inner times within the grid."""
        u = np.asarray(u, dtype=float)
        t, s = self.atoms
        cum = np.concatenate([[0.0], np.cumsum(s)])
        return self.kappa_effective * u + cum[np.searchsorted(t, u, side="right")]

    def value_left(self, u):
        u = np.asarray(u, dtype=float)
        t, s = self.atoms
        cum = np.concatenate([[0.0], np.cumsum(s)])
        return self.kappa_effective * u + cum[np.searchsorted(t, u, side="left")]


def sample_stable_subordinator(c: float, beta: float, grid, rng: np.random.Generator) -> SubordinatorPath:
    _check_beta(beta)
    g = _check_grid(grid)
    inc = subordinator_increments(LaplaceExponent.stable(c, beta), np.diff(g), rng)
    return SubordinatorPath(g, np.concatenate([[0.0], np.cumsum(inc)]))


def sample_general_subordinator(kappa: float, tail: LevyTail, delta: float | None, grid,
                                rng: np.random.Generator, strict: bool = True) -> SubordinatorPath:
    if delta is not None and delta <= 0:
        raise ValueError("truncation delta must be positive")
    exponent = LaplaceExponent.drift_plus_jumps(kappa, tail, delta, strict=strict)
    g = _check_grid(grid)
    delta = exponent.truncation
    horizon = g[-1]
    n = rng.poisson(tail.mass_above(delta) * horizon)
    times = np.sort(rng.random(n) * horizon)
    sizes = tail.sample_sizes(n, delta, rng) if n else np.zeros(0)
    keff = exponent.kappa_effective
    cum = np.concatenate([[0.0], np.cumsum(sizes)])
    values = keff * g + cum[np.searchsorted(times, g, side="right")]
    values[0] = 0.0
    return SubordinatorPath(g, values, np.column_stack([times, sizes]), keff)


def sample_subordinator(exponent: LaplaceExponent, grid, rng: np.random.Generator) -> SubordinatorPath:
    g = _check_grid(grid)
    if exponent.kind == "stable":
        return sample_stable_subordinator(exponent.c, exponent.beta, g, rng)
    if exponent.kind == "drift":
        return SubordinatorPath(g, exponent.kappa * g, kappa_effective=exponent.kappa)
    return sample_general_subordinator(exponent.kappa, exponent.tail, exponent.truncation, g, rng,
                                       strict=False)


def invert_subordinator(path: SubordinatorPath, t):
    """E(t) = inf{u : S(u) > t} on the model path; vectorized over t."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("outer time must be nonnegative")
    if np.any(t_arr > path.max_value):
        raise HorizonError(f"t={t_arr.max()} exceeds simulated S={path.max_value}")
    u, left, right = path.knots
    i = np.searchsorted(left, t_arr, side="right") - 1
    k = path.kappa_effective
    inside = t_arr < right[i]
    if k > 0:
        e = np.where(inside, u[i], u[i] + (t_arr - right[i]) / k)
    else:
        e = np.where(inside, u[i], path.horizon)
    e = np.minimum(e, path.horizon)
    return float(e) if e.ndim == 0 else e

"""pi-measure integrals, joint Laplace transforms of the Parisian events, and
Gaver-Stehfest inversion.

pi(ds, dt) is the law of (S(t), t) integrated against n(dt) = dt / sqrt(2 pi t^3);
pi- and pi+ are its restrictions to {s <= D} and {s > D}.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath as mp
import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erfc, gamma as gamma_fn
from scipy.stats import qmc

from .levy import LaplaceExponent, phi_eval, kanter_transform, subordinator_increments

SQRT_2PI = np.sqrt(2.0 * np.pi)


def n_tail(a: float, t0: float) -> float:
    """int_{t0}^inf exp(-a t) t^{-3/2} dt / sqrt(2 pi)."""
    if a == 0:
        return np.sqrt(2.0 / (np.pi * t0))
    return (2.0 / SQRT_2PI) * (np.exp(-a * t0) / np.sqrt(t0) - np.sqrt(np.pi * a) * erfc(np.sqrt(a * t0)))


@dataclass
class PiCalculus:
    """Configuration for pi-integrals of one exponent and duration D.

    Stable and drift exponents use the exact crossing time T = inf{t: S(t) > D}
    along S(t) = (c t)^(1/beta) X with quasi-random X; other exponents use
    log-spaced t-nodes with Monte Carlo values of S(t), shared across (lambda, theta).
    """

    exponent: LaplaceExponent
    D: float
    stable_closed_forms: bool = True
    n_samples: int = 2**16
    n_nodes: int = 96
    seed: int = 12345
    t_range: tuple = (1e-12, None)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")

    # -- sample preparation ------------------------------------------------
    def _crossing_times(self) -> tuple[np.ndarray, float]:
        """Crossing times T_i and the exponent 1/beta of s along the ray."""
        if "T" not in self._cache:
            e = self.exponent
            if e.kind == "stable":
                sob = qmc.Sobol(2, scramble=True, seed=self.seed)
                pts = sob.random(self.n_samples)
                u = np.clip(pts[:, 0], 1e-16, 1 - 1e-16)
                w = -np.log1p(-np.clip(pts[:, 1], 0, 1 - 1e-16))
                x = kanter_transform(e.beta, u, w)
                self._cache["T"] = ((self.D / x) ** e.beta / e.c, 1.0 / e.beta)
            elif e.kind == "drift":
                self._cache["T"] = (np.array([self.D / e.kappa]), 1.0)
            else:
                raise ValueError("crossing-time quadrature needs a stable or drift exponent")
        return self._cache["T"]

    @staticmethod
    @lru_cache(maxsize=8)
    def _gl(k: int):
        x, w = np.polynomial.legendre.leggauss(k)
        return 0.5 * (x + 1.0), 0.5 * w

    def _ray_integrals(self, lam: float, theta: float) -> tuple[float, float, float]:
        T, p = self._crossing_times()
        v, wt = self._gl(self.n_nodes)
        D = self.D
        sT = np.sqrt(T)[:, None]
        # t = T v^2 on (0, T]: s = D v^(2p), n(dt) = 2 T^-1/2 v^-2 dv / sqrt(2 pi)
        s_lo = D * v ** (2 * p)
        f_lo = -np.expm1(-(lam * s_lo)[None, :] - theta * T[:, None] * v[None, :] ** 2) / v[None, :] ** 2
        i_minus = np.mean((2.0 / SQRT_2PI) * (f_lo @ wt) / sT[:, 0])
        # t = T / v^2 on [T, inf): s = D v^(-2p), n(dt) = 2 T^-1/2 dv / sqrt(2 pi)
        with np.errstate(over="ignore", under="ignore"):
            s_hi = D * v ** (-2 * p)
            f_hi = np.exp(-(lam * s_hi)[None, :] - theta * T[:, None] / v[None, :] ** 2)
        j_plus = np.mean((2.0 / SQRT_2PI) * (f_hi @ wt) / sT[:, 0])
        mass = np.mean((2.0 / SQRT_2PI) / sT[:, 0])
        return float(i_minus), float(j_plus), float(mass)

    def _node_samples(self):
        if "nodes" not in self._cache:
            lo, hi = self.t_range
            e = self.exponent
            if hi is None:
                # far enough that S(t) > D for essentially every sample
                hi = 1.0
                rng = np.random.default_rng(self.seed)
                while True:
                    s = subordinator_increments(e, np.full(4096, hi), rng)
                    if np.all(s > self.D) and hi > 10 * self.D:
                        break
                    hi *= 4.0
                hi *= 16.0
            y = np.linspace(np.log(lo), np.log(hi), self.n_nodes * 8)
            t = np.exp(y)
            rng = np.random.default_rng(self.seed)
            dt = np.diff(np.concatenate([[0.0], t]))
            s = np.cumsum(subordinator_increments(e, np.broadcast_to(dt, (self.n_samples, t.size)).copy(), rng), axis=1)
            self._cache["nodes"] = (y, t, s)
        return self._cache["nodes"]

    def _node_integrals(self, lam: float, theta: float) -> tuple[float, float, float]:
        y, t, s = self._node_samples()
        below = s <= self.D
        ex = np.exp(-lam * s - theta * t[None, :])
        gm = np.mean((1.0 - ex) * below, axis=0)
        gp = np.mean(ex * ~below, axis=0)
        gmass = np.mean(~below, axis=0)
        wy = np.exp(-y / 2.0) / SQRT_2PI
        a = phi_eval(self.exponent, lam) + theta
        lo, hi = t[0], t[-1]
        # below the first node S(t) <= D almost surely; above the last S(t) > D
        head_minus = np.sqrt(2.0 * a) - np.sqrt(2.0 / (np.pi * lo)) + n_tail(a, lo) if a > 0 else 0.0
        i_minus = trapezoid(gm * wy, y) + head_minus
        j_plus = trapezoid(gp * wy, y) + n_tail(a, hi)
        mass = trapezoid(gmass * wy, y) + n_tail(0.0, hi)
        return float(i_minus), float(j_plus), float(mass)

    def integrals(self, lam: float, theta: float) -> tuple[float, float, float]:
        """(Iminus, Jplus, pi+ mass from the same quadrature)."""
        if lam < 0 or theta < 0:
            raise ValueError("lambda and theta must be nonnegative")
        key = (float(lam), float(theta))
        if key not in self._cache:
            if self.exponent.kind in ("stable", "drift"):
                self._cache[key] = self._ray_integrals(lam, theta)
            else:
                self._cache[key] = self._node_integrals(lam, theta)
        return self._cache[key]


@dataclass(frozen=True)
class PiIntegrals:
    i_minus: float
    j_plus: float
    identity_residual: float
    warning: str | None = None


def pi_plus_mass_closed_form(exponent: LaplaceExponent, D: float) -> float:
    if exponent.kind == "stable":
        c, b = exponent.c, exponent.beta
        return float(np.sqrt(2.0 * c) * D ** (-b / 2.0) / gamma_fn(1.0 - b / 2.0))
    if exponent.kind == "drift":
        return float(np.sqrt(2.0 * exponent.kappa / (np.pi * D)))
    raise ValueError("no closed form for this exponent")


def pi_plus_mass(calc: PiCalculus) -> float:
    if calc.stable_closed_forms and calc.exponent.kind in ("stable", "drift"):
        return pi_plus_mass_closed_form(calc.exponent, calc.D)
    return calc.integrals(0.0, 0.0)[2]


def mu(calc: PiCalculus) -> float:
    """Rate of J: half the pi+ mass, from the same quadrature as Jplus."""
    return 0.5 * calc.integrals(0.0, 0.0)[2]


def pi_exp_integrals(calc: PiCalculus, lam: float, theta: float, rtol: float = 1e-3) -> PiIntegrals:
    i_minus, j_plus, mass = calc.integrals(lam, theta)
    target = np.sqrt(2.0 * (phi_eval(calc.exponent, lam) + theta))
    resid = i_minus + (mass - j_plus) - target
    rel = abs(resid) / target if target > 0 else abs(resid)
    msg = None
    if rel > rtol:
        msg = f"full-measure identity residual {rel:.2e} exceeds {rtol:.0e}"
        warnings.warn(msg, RuntimeWarning)
    return PiIntegrals(i_minus, j_plus, float(resid), msg)


def _denominator(calc: PiCalculus, lam: float, theta: float) -> tuple[float, float]:
    i_minus, j_plus, mass = calc.integrals(lam, theta)
    phi = phi_eval(calc.exponent, lam)
    return 0.5 * mass + np.sqrt(0.5 * (phi + theta)) + 0.5 * i_minus, j_plus


def m1_lt(calc: PiCalculus, lam: float, theta: float) -> float:
    """E exp(-lam g* - theta E(g*))."""
    den, _ = _denominator(calc, lam, theta)
    return float(mu(calc) / den)


def m2_lt(calc: PiCalculus, lam: float, theta: float) -> float:
    """E exp(-lam d* - theta E(d*))."""
    den, j_plus = _denominator(calc, lam, theta)
    return float(0.5 * j_plus / den)


def hitting_pair_lt(exponent: LaplaceExponent, x: float, lam: float, theta: float) -> float:
    """E exp(-lam S(tau_x) - theta tau_x) with tau_x the first passage of BM to -x."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    return float(np.exp(-x * np.sqrt(2.0 * (phi_eval(exponent, lam) + theta))))


# ---------------------------------------------------------------------------
# Gaver-Stehfest


@lru_cache(maxsize=32)
def stehfest_weights(order: int, dps: int = 50) -> tuple:
    if order % 2 or order < 2:
        raise ValueError("order must be an even integer")
    with mp.workdps(dps):
        m = order // 2
        out = []
        for k in range(1, order + 1):
            s = mp.mpf(0)
            for j in range((k + 1) // 2, min(k, m) + 1):
                s += (mp.mpf(j) ** m * mp.factorial(2 * j)
                      / (mp.factorial(m - j) * mp.factorial(j) * mp.factorial(j - 1)
                         * mp.factorial(k - j) * mp.factorial(2 * j - k)))
            out.append((-1) ** (k + m) * s)
    return tuple(out)


def _gs_sum(F, t: float, order: int, dps: int):
    with mp.workdps(dps):
        ln2 = mp.log(2) / mp.mpf(t)
        total = mp.mpf(0)
        for k, v in enumerate(stehfest_weights(order, dps), start=1):
            lam = k * ln2
            try:
                val = F(lam)
            except TypeError:
                val = F(float(lam))
            if not mp.isfinite(val):
                raise ArithmeticError("transform evaluation overflowed")
            total += v * mp.mpf(val)
        return total * ln2


def gaver_stehfest(F, t: float, order: int = 18, with_error: bool = False, dps: int = 50):
    """Invert a Laplace transform at t > 0.

    F is evaluated at mpmath numbers when it accepts them, which keeps the
    alternating sum free of cancellation; plain float callables also work.
    The error estimate compares with the result at half the order.
    """
    if order % 2 or not (8 <= order <= 18):
        raise ValueError("order must be even and between 8 and 18")
    if t <= 0:
        raise ValueError("t must be positive")
    val = _gs_sum(F, t, order, dps)
    if not mp.isfinite(val):
        raise ArithmeticError("Gaver-Stehfest sum overflowed")
    if not with_error:
        return float(val)
    half = order // 2 + (order // 2) % 2
    err = abs(val - _gs_sum(F, t, half, dps))
    return float(val), float(err)


def inverse_subordinator_lt_transform(exponent: LaplaceExponent, theta: float):
    """lambda -> int_0^inf e^{-lambda t} E[e^{-theta E(t)}] dt = phi/(lambda (phi + theta))."""
    if exponent.kind == "stable":
        c, b = exponent.c, exponent.beta

        def F(lam):
            p = c * lam**b
            return p / (lam * (p + theta))
        return F

    def F(lam):
        p = phi_eval(exponent, float(lam))
        return p / (float(lam) * (p + theta))
    return F

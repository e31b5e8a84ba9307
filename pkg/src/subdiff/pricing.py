"""Down-and-in Parisian options in the subdiffusive Black-Scholes model.

Under the simulation measure the price is
    E[1{H_{b,D}(B*) <= T} f(B(E(T)), E(T))],  f(z, s) = exp(sigma z / 2 - sigma^2 s / 8) Phi(x e^{sigma z}),
with b = log(L / x) / sigma.  Two estimators are provided: direct simulation of
(B, S) and, for L = x, the decomposition at the first long negative excursion.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numba
import numpy as np

from . import _numba as nbh
from .excursions import sample_parisian_events
from .fracpde import TimeFracProblem, solve_mc_grid
from .harness import RngStream, TestReport, concat_chunks, run_chunks, zscore_report
from .levy import LaplaceExponent
from .transforms import PiCalculus, m1_lt, m2_lt


class ContractError(ValueError):
    """Contract or market violates the hypotheses of an estimator."""


@dataclass(frozen=True)
class BumpPayoff:
    """Phi(y) = exp(1 - 1 / (1 - q^2)) for |q| < 1, q = (y - center) / radius; zero elsewhere."""

    center: float = 1.5
    radius: float = 0.2
    scale: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.radius, self.center + self.radius

    def __call__(self, y):
        q = (np.asarray(y, dtype=float) - self.center) / self.radius
        inside = np.abs(q) < 1.0
        out = np.zeros(q.shape)
        qi = q[inside]
        out[inside] = self.scale * np.exp(1.0 - 1.0 / (1.0 - qi * qi))
        return out if out.ndim else float(out)

    @property
    def sup(self) -> float:
        return abs(self.scale)


@dataclass(frozen=True)
class ZeroPayoff:
    support: tuple = (np.inf, np.inf)
    sup: float = 0.0

    def __call__(self, y):
        return np.zeros(np.shape(y)) if np.ndim(y) else 0.0


@dataclass(frozen=True)
class MarketSpec:
    x: float
    sigma: float
    exponent: LaplaceExponent

    def __post_init__(self):
        if not (self.x > 0 and self.sigma > 0):
            raise ValueError("x and sigma must be positive")


@dataclass(frozen=True)
class ParisianContract:
    L: float
    D: float
    T: float
    payoff: object

    def __post_init__(self):
        if not (self.L > 0 and self.D > 0 and self.T > 0):
            raise ValueError("L, D and T must be positive")


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    stderr: float
    n_paths: int
    method: str
    censored_fraction: float

    def to_row(self) -> dict:
        return {"value": float(self.value), "stderr": float(self.stderr), "n_paths": int(self.n_paths),
                "method": self.method, "censored_fraction": float(self.censored_fraction)}

    def ci(self, z: float = 1.959963984540054) -> tuple[float, float]:
        return self.value - z * self.stderr, self.value + z * self.stderr


def weight_f(market: MarketSpec, payoff, z, s):
    sig = market.sigma
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.exp(0.5 * sig * z - sig * sig * s / 8.0) * payoff(market.x * np.exp(sig * z))


# ---------------------------------------------------------------------------
# direct simulation


@numba.njit(cache=True)
def _direct_kernel(z, rows, sqh, h, b, D, T, c, beta, kappa, bypass, inner_cap,
                   bv, uv, sv, below, gv, rung, hv, tb, tb_lo, tb_hi, eT, bT, status):
    """Parisian clock of B* at level b up to outer time T, plus (E(T), B(E(T))).

    Each inner cell contributes a linear piece of outer length kappa h followed
    by one atom carrying the rest of the cell's S-increment, held at the cell's
    right endpoint.  Bypass mode uses S(u) = u without touching the subordinator.
    """
    m = z.shape[1]
    for r in range(rows.size):
        p = rows[r]
        v0, u, t0 = bv[p], uv[p], sv[p]
        for k in range(m):
            v1 = v0 + sqh * z[r, k]
            if bypass:
                lin = h
                atom = 0.0
            else:
                lin = kappa * h
                atom = 0.0
                if c > 0.0:
                    atom = (c * h) ** (1.0 / beta) * nbh.nb_positive_stable(beta)
            t1 = t0 + lin
            t2 = t1 + atom
            if not rung[p]:
                if below[p]:
                    if v1 < b:
                        if (b - v0) * (b - v1) < 20.0 * h and np.random.random() < np.exp(-2.0 * (b - v0) * (b - v1) / h):
                            gv[p] = 0.5 * (t0 + t1)
                        if t1 - gv[p] > D:
                            rung[p] = True
                            hv[p] = gv[p] + D
                    else:
                        tc = t0 + lin * (b - v0) / (v1 - v0)
                        if tc - gv[p] > D:
                            rung[p] = True
                            hv[p] = gv[p] + D
                        below[p] = False
                elif v1 < b:
                    tc = t0 + lin * (v0 - b) / (v0 - v1)
                    gv[p] = tc
                    below[p] = True
                    if np.isnan(tb[p]):
                        tb[p] = tc
                        tb_lo[p] = t0
                        tb_hi[p] = t2
                    if t1 - gv[p] > D:
                        rung[p] = True
                        hv[p] = gv[p] + D
                if not rung[p] and below[p] and t2 - gv[p] > D:
                    rung[p] = True
                    hv[p] = gv[p] + D
            if t2 > T:
                if bypass:
                    e = T
                    eT[p] = e
                    bT[p] = v0 + (v1 - v0) * (e - u) / h
                elif T < t1:
                    e = u + (T - t0) / kappa
                    eT[p] = e
                    bT[p] = v0 + (v1 - v0) * (e - u) / h
                else:
                    eT[p] = u + h
                    bT[p] = v1
                status[p] = 1
                v0 = v1
                u += h
                t0 = t2
                break
            v0 = v1
            u += h
            t0 = t2
            if u >= inner_cap:
                status[p] = 2
                break
        bv[p], uv[p], sv[p] = v0, u, t0


def _direct_chunk(n, rng, b, D, T, params, bypass, step, inner_cap, block):
    c, beta, kappa = params
    nbh.seed_from(rng)
    bv = np.zeros(n)
    uv = np.zeros(n)
    sv = np.zeros(n)
    below = np.full(n, 0.0 < b)
    gv = np.zeros(n)
    rung = np.zeros(n, np.bool_)
    hv = np.full(n, np.inf)
    tb = np.full(n, np.nan)
    tb_lo = np.full(n, np.nan)
    tb_hi = np.full(n, np.nan)
    eT = np.full(n, np.nan)
    bT = np.full(n, np.nan)
    status = np.zeros(n, np.int64)
    active = np.arange(n)
    while active.size:
        z = rng.standard_normal((active.size, block))
        _direct_kernel(z, active, np.sqrt(step), step, b, D, T, c, beta, kappa, bypass, inner_cap,
                       bv, uv, sv, below, gv, rung, hv, tb, tb_lo, tb_hi, eT, bT, status)
        active = active[status[active] == 0]
    return {"H": hv, "rung": rung, "E_T": eT, "B_T": bT, "status": status,
            "T_b": tb, "T_b_lo": tb_lo, "T_b_hi": tb_hi}


def simulate_direct(market: MarketSpec, contract: ParisianContract, n_paths: int, stream: RngStream,
                    inner_step: float = 1e-3, bypass: bool = False, inner_cap: float = 1e3,
                    workers: int = 1, block: int = 1024) -> dict:
    """Per-path clock and terminal values from the direct engine."""
    b = float(np.log(contract.L / market.x) / market.sigma)
    params = (0.0, 0.5, 1.0) if bypass else nbh.exponent_params(market.exponent)
    fn = partial(_direct_chunk, b=b, D=float(contract.D), T=float(contract.T), params=params,
                 bypass=bool(bypass), step=float(inner_step), inner_cap=float(inner_cap), block=block)
    out = concat_chunks(run_chunks(fn, n_paths, stream, workers))
    out["b"] = b
    return out


def price_direct_mc(market: MarketSpec, contract: ParisianContract, n_paths: int, stream: RngStream,
                    inner_step: float = 1e-3, bypass: bool = False, inner_cap: float = 1e3,
                    workers: int = 1) -> PriceEstimate:
    """Direct Monte Carlo; censored paths (inner cap before S passes T) pay 0."""
    method = "direct_bypass" if bypass else "direct"
    if contract.D > contract.T or getattr(contract.payoff, "sup", 1.0) == 0.0:
        return PriceEstimate(0.0, 0.0, n_paths, method, 0.0)
    out = simulate_direct(market, contract, n_paths, stream, inner_step, bypass, inner_cap, workers)
    ok = out["status"] == 1
    hit = ok & (out["H"] <= contract.T)
    vals = np.zeros(n_paths)
    vals[hit] = weight_f(market, contract.payoff, out["B_T"][hit], out["E_T"][hit])
    se = vals.std(ddof=1) / np.sqrt(n_paths) if n_paths > 1 else 0.0
    return PriceEstimate(float(vals.mean()), float(se), n_paths, method, float(np.mean(~ok)))


# ---------------------------------------------------------------------------
# decomposition at the first long negative excursion


def check_decomposition_hypotheses(market: MarketSpec, contract: ParisianContract) -> None:
    e = market.exponent
    if not np.isclose(contract.L, market.x, rtol=1e-12, atol=0.0):
        raise ContractError("the decomposition needs the barrier at the initial price (L = x)")
    if e.kind == "drift" or (e.kind == "driftPlusJumps" and not e.tail.infinite_mass):
        raise ContractError("the decomposition needs a Levy measure with infinite mass")
    lo, hi = contract.payoff.support
    if lo <= market.x <= hi:
        raise ContractError("the payoff must vanish in a neighbourhood of x")


def decomposition_tables(market: MarketSpec, contract: ParisianContract, n_paths: int, stream: RngStream,
                         t_grid, step: float = 1e-3, workers: int = 1):
    """u1 and u2 at (0, 0) on a t-grid, with standard errors (u1 is 0 when Phi vanishes below x)."""
    sig, x, payoff = market.sigma, market.x, contract.payoff
    f2 = lambda z, s: np.exp(0.5 * sig * z - sig * sig * s / 8.0) * payoff(x * np.exp(sig * z))
    p2 = TimeFracProblem("heat", f2, market.exponent)
    u2, se2 = solve_mc_grid(p2, 0.0, 0.0, t_grid, n_paths, stream.child("u2"), step, workers)
    lo, hi = payoff.support
    if hi < x:
        f1 = lambda z, s: np.exp(-0.5 * sig * z - sig * sig * s / 8.0) * payoff(x * np.exp(-sig * z))
        p1 = TimeFracProblem("bessel", f1, market.exponent, vanish_radius=np.log(x / hi) / sig)
        u1, se1 = solve_mc_grid(p1, 0.0, 0.0, t_grid, n_paths, stream.child("u1"), step, workers)
    else:
        u1 = np.zeros_like(u2)
        se1 = np.zeros_like(u2)
    return u1, se1, u2, se2


def price_decomposition(market: MarketSpec, contract: ParisianContract, n_paths: int, stream: RngStream,
                        event_step: float = 2.5e-4, table_step: float = 1e-3, table_paths: int | None = None,
                        n_table: int = 201, inner_cap: float = 10.0, workers: int = 1) -> PriceEstimate:
    """Case 1 (g* <= T-D < T < d*) plus Case 2 (d* <= T) with u1, u2 tabulated by Monte Carlo.

    The table error is perfectly correlated across events and is added
    linearly to the event standard error.
    """
    if getattr(contract.payoff, "sup", 1.0) == 0.0:
        return PriceEstimate(0.0, 0.0, n_paths, "decomposition", 0.0)
    check_decomposition_hypotheses(market, contract)
    T, D, sig = contract.T, contract.D, market.sigma
    if D >= T:
        return PriceEstimate(0.0, 0.0, n_paths, "decomposition", 0.0)
    ev = sample_parisian_events(market.exponent, D, n_paths, stream.child("events"), step=event_step,
                                inner_cap=inner_cap, outer_cap=T - D, workers=workers)
    tg = np.linspace(0.0, T, n_table)
    u1, se1, u2, se2 = decomposition_tables(market, contract, table_paths or n_paths, stream.child("tables"),
                                            tg, table_step, workers)
    g, eg, d, ed, st = ev["g"], ev["eg"], ev["d"], ev["ed"], ev["status"]
    case2 = (st == 1) & (d <= T)
    case1 = np.isfinite(g) & (g <= T - D) & ~case2
    vals = np.zeros(n_paths)
    tab_err = 0.0
    if case2.any():
        w2 = np.exp(-sig * sig * ed[case2] / 8.0)
        vals[case2] = w2 * np.interp(T - d[case2], tg, u2)
        tab_err += np.sum(w2 * np.interp(T - d[case2], tg, se2)) / n_paths
    if case1.any() and np.any(u1 != 0):
        w1 = np.exp(-sig * sig * eg[case1] / 8.0)
        vals[case1] = w1 * np.interp(T - g[case1], tg, u1)
        tab_err += np.sum(w1 * np.interp(T - g[case1], tg, se1)) / n_paths
    se = vals.std(ddof=1) / np.sqrt(n_paths)
    # status 2 without a located start: the event starts after the inner cap
    censored = float(np.mean((st == 2) & ~np.isfinite(g)))
    return PriceEstimate(float(vals.mean()), float(se + tab_err), n_paths, "decomposition", censored)


# ---------------------------------------------------------------------------
# validation of the event laws


def event_lt_samples(ev: dict, lam: float, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """exp(-lam g* - theta E(g*)) and exp(-lam d* - theta E(d*)); unresolved events give 0."""
    with np.errstate(invalid="ignore", over="ignore"):
        a = np.nan_to_num(np.exp(-lam * ev["g"] - theta * ev["eg"]), nan=0.0)
        b = np.nan_to_num(np.exp(-lam * ev["d"] - theta * ev["ed"]), nan=0.0)
    if lam == 0 and theta == 0:
        a = np.isfinite(ev["g"]).astype(float)
        b = np.isfinite(ev["d"]).astype(float)
    return a, b


def validate_event_laws(market: MarketSpec, contract: ParisianContract, n_paths: int, stream: RngStream,
                        lt_grid=((0.5, 0.5), (0.5, 1.0), (0.5, 2.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0),
                                 (2.0, 0.5), (2.0, 1.0), (2.0, 2.0)),
                        step: float = 2.5e-4, inner_cap: float = 20.0, workers: int = 1,
                        calc: PiCalculus | None = None) -> list[TestReport]:
    """z-scores of the empirical joint transforms of (g*, E(g*)) and (d*, E(d*)).

    Rows that hit the inner cap before the event resolves contribute 0; with
    E(g*) of order the cap, their true contribution is below exp(-theta cap).
    """
    if not np.isclose(contract.L, market.x):
        raise ContractError("event laws are stated for L = x")
    calc = calc or PiCalculus(market.exponent, contract.D)
    ev = sample_parisian_events(market.exponent, contract.D, n_paths, stream, step=step,
                                inner_cap=inner_cap, workers=workers)
    ok = ev["status"] == 1
    reports = []
    gap_ok = bool(np.all(ev["g"][ok] <= ev["d"][ok]) and np.all(ev["d"][ok] - ev["g"][ok] > contract.D))
    reports.append(TestReport("event_ordering", float(not gap_ok), 0.5, not gap_ok, (int(ok.sum()),)))
    for lam, theta in lt_grid:
        a, b = event_lt_samples(ev, lam, theta)
        for name, xs, target in (("m1", a, m1_lt(calc, lam, theta)), ("m2", b, m2_lt(calc, lam, theta))):
            se = xs.std(ddof=1) / np.sqrt(xs.size)
            reports.append(zscore_report(f"{name}_lt", float(xs.mean()), float(se), float(target), 3.0,
                                         xs.size, lam=float(lam), theta=float(theta)))
    return reports

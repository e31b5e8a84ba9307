"""Experiment configuration and the verification runs shared by the CLI and the acceptance suite.

Every run is a pure function of (config, seed) and returns report rows.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .excursions import (count_long_excursions, estimate_excursion_tail, excursion_tail_closed_form,
                         expected_long_count, ranked_relative_lengths, sample_pd)
from .fracpde import TimeFracProblem, inverse_stable_exact, solve_caputo_l1, solve_mc
from .harness import RngStream, TestReport, ks_two_sample, resolve_seed, run_chunks, zscore_report
from .levy import LaplaceExponent, LevyTail, phi_eval, subordinator_increments
from .occupation import ProcessSpec, verify_time_change_identity
from .pathlab import simulate_time_changed_bm
from .pricing import (BumpPayoff, MarketSpec, ParisianContract, PriceEstimate, price_decomposition,
                      price_direct_mc, validate_event_laws)
from .rayknight import (RiccatiProblem, StepFunction, cbi_two_piece_lt, lt_occupation_functional,
                        mc_occupation_functional, solve_u)
from .transforms import (PiCalculus, gaver_stehfest, inverse_subordinator_lt_transform, m1_lt, m2_lt,
                         pi_exp_integrals)

SCHEMA_VERSION = 1

VERIFY_TARGETS = ("subordinator", "pd", "tail", "mlt", "occupation", "rayknight", "fracpde", "laplace")
PRICE_METHODS = ("direct", "decomposition")
EXPONENT_KINDS = ("stable", "drift", "driftPlusJumps")
TAIL_KINDS = ("stable", "truncated_stable", "exponential", "unit_mass")


class UsageError(ValueError):
    """Invalid configuration or command line."""


@dataclass
class ExperimentConfig:
    experiment: str = "price.direct"
    # model
    exponent: str = "stable"
    c: float = 1.0
    beta: float = 0.7
    kappa: float = 0.0
    tail: str = "truncated_stable"
    tail_cutoff: float = 10.0
    sigma: float = 0.2
    x: float = 1.0
    L: float = 1.0
    D: float = 0.1
    T: float = 1.0
    alpha: float = 0.5
    g_lo: float = 0.0
    g_hi: float = 1.0
    g_level: float = 1.0
    start: float = 0.5
    payoff_center: float = 1.5
    payoff_radius: float = 0.2
    # numerics (None means the experiment default)
    paths: int | None = None
    inner_step: float | None = None
    outer_step: float | None = None
    nodes: int | None = None
    order: int = 18
    bypass: bool = False
    # run control
    seed: int | None = None
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str | None = None
    format: str = "csv"

    def validate(self) -> "ExperimentConfig":
        bad = []
        if self.exponent not in EXPONENT_KINDS:
            bad.append(f"exponent must be one of {EXPONENT_KINDS}")
        if self.tail not in TAIL_KINDS:
            bad.append(f"tail must be one of {TAIL_KINDS}")
        if self.exponent in ("stable",) and not (0 < self.beta < 1 and self.c > 0):
            bad.append("stable exponents need c > 0 and 0 < beta < 1")
        if self.kappa < 0:
            bad.append("kappa must be nonnegative")
        for name in ("sigma", "x", "L", "D", "T", "payoff_radius"):
            if not getattr(self, name) > 0:
                bad.append(f"{name} must be positive")
        if self.alpha < 0:
            bad.append("alpha must be nonnegative")
        if self.paths is not None and self.paths < 2:
            bad.append("paths must be at least 2")
        for name in ("inner_step", "outer_step"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                bad.append(f"{name} must be positive")
        if self.order % 2 or not (8 <= self.order <= 18):
            bad.append("order must be even and between 8 and 18")
        if self.workers < 1:
            bad.append("workers must be at least 1")
        if self.format not in ("csv", "json"):
            bad.append("format must be csv or json")
        if bad:
            raise UsageError("; ".join(bad))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str) -> dict:
        """Flatten a JSON document whose top-level sections mirror module names."""
        with open(path) as fh:
            doc = json.load(fh)
        flat = {}
        for k, v in doc.items():
            if isinstance(v, dict):
                flat.update(v)
            else:
                flat[k] = v
        return flat

    def make_exponent(self) -> LaplaceExponent:
        if self.exponent == "stable":
            return LaplaceExponent.stable(self.c, self.beta)
        if self.exponent == "drift":
            return LaplaceExponent.drift(self.kappa)
        tails = {"stable": lambda: LevyTail.stable(self.c, self.beta),
                 "truncated_stable": lambda: LevyTail.truncated_stable(self.c, self.beta, self.tail_cutoff),
                 "exponential": lambda: LevyTail.exponential(),
                 "unit_mass": lambda: LevyTail.unit_mass()}
        return LaplaceExponent.drift_plus_jumps(self.kappa, tails[self.tail]())

    def stream(self, *tags) -> RngStream:
        return RngStream(resolve_seed(self.seed)).child(*tags)

    def n(self, default: int) -> int:
        return int(self.paths) if self.paths is not None else int(default)

    def step(self, default: float) -> float:
        return float(self.inner_step) if self.inner_step is not None else float(default)


# ---------------------------------------------------------------------------
# criteria


def _subordinator_chunk(m, rng, exponent, t):
    return subordinator_increments(exponent, np.full(m, t), rng)


def verify_subordinator(cfg: ExperimentConfig) -> list[TestReport]:
    """Empirical E exp(-lam S(t)) against exp(-t phi(lam)) for two stable exponents."""
    from functools import partial
    n = cfg.n(100_000)
    rows = []
    for beta in (0.5, 0.8):
        e = LaplaceExponent.stable(1.0, beta)
        for t in (0.5, 1.0):
            fn = partial(_subordinator_chunk, exponent=e, t=t)
            s = np.concatenate(run_chunks(fn, n, cfg.stream("subordinator", int(beta * 10), int(t * 10)),
                                          cfg.workers))
            for lam in (0.5, 1.0, 2.0):
                v = np.exp(-lam * s)
                rows.append(zscore_report("subordinator_lt", v.mean(), v.std(ddof=1) / np.sqrt(n),
                                          np.exp(-t * phi_eval(e, lam)), 3.0, n, beta=beta, t=t, lam=lam))
    return rows


def _pd_chunk(m, rng, beta, step, eps):
    v1 = np.empty(m)
    counts = np.empty((m, len(eps)))
    e = LaplaceExponent.stable(1.0, beta)
    for i, g in enumerate(rng.spawn(m)):
        tc = simulate_time_changed_bm(e, 1.0, step, g, reflect=True)
        v1[i] = ranked_relative_lengths(tc, 1.0).lengths[0]
        counts[i] = [count_long_excursions(tc, 1.0, ep) for ep in eps]
    return v1, counts


def verify_pd(cfg: ExperimentConfig) -> list[TestReport]:
    """V1 of ranked excursion lengths against PD(beta/2, 0), and E[J_eps(1)] against its closed form."""
    from functools import partial
    beta = 0.8
    n = cfg.n(2000)
    eps = (0.1, 0.25)
    fn = partial(_pd_chunk, beta=beta, step=cfg.step(1e-4), eps=eps)
    parts = run_chunks(fn, n, cfg.stream("pd", "paths"), cfg.workers, chunk=250)
    v1 = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    g = cfg.stream("pd", "oracle").generator()
    oracle = np.array([sample_pd(beta / 2.0, rng=r).lengths[0] for r in g.spawn(n)])
    rows = [ks_two_sample(v1, oracle, 0.01, "pd_v1_ks")]
    for j, ep in enumerate(eps):
        target = expected_long_count(beta, 1.0, ep)
        est = float(counts[:, j].mean())
        rel = abs(est - target) / target
        rows.append(TestReport("long_excursion_count", rel, 0.05, bool(rel > 0.05), (n,),
                               {"epsilon": ep, "estimate": est, "target": target,
                                "se": float(counts[:, j].std(ddof=1) / np.sqrt(n))}))
    return rows


def verify_tail(cfg: ExperimentConfig) -> list[TestReport]:
    """n*(zeta > eps) estimated per unit of local time against its closed form."""
    e = LaplaceExponent.stable(1.0, 0.7)
    eps = (0.05, 0.1)
    out = estimate_excursion_tail(e, eps, cfg.n(4000), cfg.stream("tail"), step=cfg.step(1e-4),
                                  workers=cfg.workers)
    rows = []
    for j, ep in enumerate(eps):
        target = float(excursion_tail_closed_form(1.0, 0.7, ep))
        est = float(out["estimate"][j])
        rel = abs(est - target) / target
        rows.append(TestReport("excursion_tail", rel, 0.10, bool(rel > 0.10), (cfg.n(4000),),
                               {"epsilon": ep, "estimate": est, "target": target, "se": float(out["se"][j]),
                                "censored_fraction": out["censored_fraction"]}))
    return rows


def verify_mlt(cfg: ExperimentConfig) -> list[TestReport]:
    """Joint transforms of the first long negative excursion against m1 and m2."""
    e = LaplaceExponent.stable(1.0, 0.7)
    D = 0.1
    calc = PiCalculus(e, D)
    market = MarketSpec(1.0, 0.2, e)
    contract = ParisianContract(1.0, D, 1.0, BumpPayoff())
    rows = []
    for name, val in (("m1_mass", m1_lt(calc, 0.0, 0.0)), ("m2_mass", m2_lt(calc, 0.0, 0.0))):
        err = abs(val - 1.0)
        rows.append(TestReport(name, err, 0.0, bool(err > 0.0), (), {"value": val}))
    worst = 0.0
    for lam in (0.0, 0.5, 1.0, 2.0):
        for theta in (0.0, 0.5, 1.0, 2.0):
            if lam == theta == 0.0:
                continue
            pi = pi_exp_integrals(calc, lam, theta)
            target = np.sqrt(2.0 * (phi_eval(e, lam) + theta))
            worst = max(worst, abs(pi.identity_residual) / target)
    rows.append(TestReport("full_measure_identity", worst, 1e-3, bool(worst >= 1e-3), ()))
    rows += validate_event_laws(market, contract, cfg.n(100_000), cfg.stream("mlt"),
                                step=cfg.step(2.5e-4), workers=cfg.workers, calc=calc)
    return rows


def verify_occupation(cfg: ExperimentConfig) -> list[TestReport]:
    """A* = kappa A pathwise for a drift, and A*(v) = S(A(v)) in law for a stable subordinator."""
    levels = (-0.5, -0.2, 0.0, 0.2, 0.5)
    proc = ProcessSpec()
    g = cfg.stream("occupation").generator()
    r1, r2 = g.spawn(2)
    drift = verify_time_change_identity(proc, LaplaceExponent.drift(2.0), 1.0, levels, 200, r1,
                                        step=cfg.step(1e-3))
    stable = verify_time_change_identity(proc, LaplaceExponent.stable(1.0, 0.7), 1.0, levels, cfg.n(5000), r2,
                                         step=cfg.step(1e-3), level=0.01)
    return [drift, stable]


def verify_rayknight(cfg: ExperimentConfig) -> list[TestReport]:
    """Riccati solver against closed forms and the time-changed Monte Carlo functional."""
    rows = []
    lam = 2.0
    p = RiccatiProblem(1.0, 0.0, LaplaceExponent.drift(1.0), lambda r: np.full(np.shape(r), lam))
    sol = solve_u(p)
    exact = np.sqrt(lam / 2.0) * np.tanh(np.sqrt(2.0 * lam) * (1.0 - sol.r))
    err = float(np.max(np.abs(sol.u - exact)))
    rows.append(TestReport("riccati_tanh", err, 1e-8, bool(err >= 1e-8), (), {"u0": float(sol.u[0])}))
    e = LaplaceExponent.stable(1.0, 0.7)
    big = RiccatiProblem(20.0, 0.0, e, lambda r: np.full(np.shape(r), 1.0))
    val = lt_occupation_functional(big, 1.0)
    err = abs(val - np.exp(-np.sqrt(2.0 * phi_eval(e, 1.0))))
    rows.append(TestReport("riccati_large_a", err, 1e-6, bool(err >= 1e-6), (), {"value": val}))
    alpha = cfg.alpha if cfg.alpha is not None else 0.5
    gfun = StepFunction.indicator(cfg.g_lo, cfg.g_hi, cfg.g_level)
    prob = RiccatiProblem(cfg.g_hi, alpha, e, gfun)
    closed = lt_occupation_functional(prob, cfg.start)
    two = cbi_two_piece_lt(alpha, e, gfun, cfg.start, cfg.g_hi)
    rows.append(TestReport("cbi_concatenation", abs(two - closed), 1e-10, bool(abs(two - closed) >= 1e-10), (),
                           {"closed": closed, "two_piece": two}))
    mc = mc_occupation_functional(e, alpha, gfun, cfg.start, cfg.n(100_000), cfg.stream("rayknight"),
                                  step=cfg.step(1e-3), workers=cfg.workers)
    rows.append(zscore_report("occupation_functional_mc", mc["value"], mc["stderr"], closed, 3.0,
                              mc["n_paths"], alpha=alpha, beta=0.7, censored_fraction=mc["censored_fraction"]))
    return rows


def _bump_initial(z, s):
    q = (np.asarray(z) - 0.5) / 1.0
    inside = np.abs(q) < 1.0
    out = np.zeros(np.shape(q))
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside] ** 2))
    return out * np.exp(-0.25 * np.asarray(s))


def verify_fracpde(cfg: ExperimentConfig) -> list[TestReport]:
    """u2 by Monte Carlo against the L1 scheme, and a three-way check of E exp(-theta E(t))."""
    rows = []
    e = LaplaceExponent.stable(1.0, 0.6)
    prob = TimeFracProblem("heat", _bump_initial, e, support_radius=1.5)
    n = cfg.n(100_000)
    mc = solve_mc(prob, 0.0, 0.0, 1.0, n, cfg.stream("fracpde", "u2"), step=cfg.step(1e-3), workers=cfg.workers)
    fd = solve_caputo_l1(prob, 0.0, 0.0, 1.0)
    tol = max(0.02 * abs(fd.value), 3.0 * mc.stderr)
    diff = abs(mc.value - fd.value)
    rows.append(TestReport("u2_mc_vs_l1", diff, tol, bool(diff > tol), (n,),
                           {"mc": mc.value, "mc_se": mc.stderr, "l1": fd.value, "l1_error": fd.stderr}))
    theta, t = 1.0, 1.0
    lt_prob = TimeFracProblem("heat", lambda z, s: np.exp(-theta * np.asarray(s)) + 0.0 * np.asarray(z), e)
    a = solve_mc(lt_prob, 0.0, 0.0, t, n, cfg.stream("fracpde", "lt"), step=cfg.step(1e-3), workers=cfg.workers)
    b = gaver_stehfest(inverse_subordinator_lt_transform(e, theta), t, cfg.order)
    ex = np.exp(-theta * inverse_stable_exact(1.0, 0.6, t, n, cfg.stream("fracpde", "exact").generator()))
    c_val, c_se = float(ex.mean()), float(ex.std(ddof=1) / np.sqrt(n))
    pairs = (("mc_vs_inversion", a.value, a.stderr, b), ("exact_vs_inversion", c_val, c_se, b),
             ("mc_vs_exact", a.value, np.hypot(a.stderr, c_se), c_val))
    for name, est, se, target in pairs:
        d = abs(est - target)
        thr = 3.0 * se + 1e-4
        rows.append(TestReport(f"inverse_lt_{name}", d, thr, bool(d > thr), (n,),
                               {"estimate": est, "target": target, "se": se}))
    return rows


def verify_laplace(cfg: ExperimentConfig) -> list[TestReport]:
    """Gaver-Stehfest on exp(-t), 1 and t at t in {0.5, 1, 2}."""
    pairs = (("exp", lambda s: 1 / (s + 1), lambda t: np.exp(-t)),
             ("one", lambda s: 1 / s, lambda t: 1.0),
             ("ramp", lambda s: 1 / s**2, lambda t: t))
    worst = 0.0
    detail = {}
    for name, F, f in pairs:
        for t in (0.5, 1.0, 2.0):
            err = abs(gaver_stehfest(F, t, cfg.order) - f(t))
            detail[f"{name}@{t:g}"] = err
            worst = max(worst, err)
    return [TestReport("gaver_stehfest", worst, 1e-6, bool(worst >= 1e-6), (), {"order": cfg.order, **detail})]


VERIFY = {"subordinator": verify_subordinator, "pd": verify_pd, "tail": verify_tail, "mlt": verify_mlt,
          "occupation": verify_occupation, "rayknight": verify_rayknight, "fracpde": verify_fracpde,
          "laplace": verify_laplace}


# ---------------------------------------------------------------------------
# pricing


def market_contract(cfg: ExperimentConfig) -> tuple[MarketSpec, ParisianContract]:
    market = MarketSpec(cfg.x, cfg.sigma, cfg.make_exponent())
    contract = ParisianContract(cfg.L, cfg.D, cfg.T, BumpPayoff(cfg.payoff_center, cfg.payoff_radius))
    return market, contract


def run_price(cfg: ExperimentConfig, method: str) -> PriceEstimate:
    market, contract = market_contract(cfg)
    n = cfg.n(100_000)
    if method == "direct":
        return price_direct_mc(market, contract, n, cfg.stream("price", "direct"), inner_step=cfg.step(1e-3),
                               bypass=cfg.bypass, workers=cfg.workers)
    if method == "decomposition":
        return price_decomposition(market, contract, n, cfg.stream("price", "decomposition"),
                                   event_step=cfg.step(2.5e-4),
                                   table_step=cfg.outer_step if cfg.outer_step is not None else 1e-3,
                                   workers=cfg.workers)
    raise UsageError(f"unknown pricing method {method!r}")


PRICE_SETS = ((0.7, 0.2, 0.1), (0.6, 0.25, 0.1), (0.7, 0.2, 0.2))


def verify_pricing(cfg: ExperimentConfig) -> list[TestReport]:
    """Direct and decomposition prices overlap at 95% on three parameter sets; drift regression."""
    rows = []
    for beta, sigma, D in PRICE_SETS:
        c = dataclasses.replace(cfg, exponent="stable", beta=beta, sigma=sigma, D=D, x=1.0, L=1.0, T=1.0,
                                payoff_center=1.5, payoff_radius=0.2, bypass=False)
        a = run_price(c, "direct")
        b = run_price(c, "decomposition")
        (a_lo, a_hi), (b_lo, b_hi) = a.ci(), b.ci()
        gap = max(a_lo - b_hi, b_lo - a_hi, 0.0)
        rows.append(TestReport("price_ci_overlap", gap, 0.0, bool(gap > 0.0), (a.n_paths, b.n_paths),
                               {"beta": beta, "sigma": sigma, "D": D, "direct": a.value, "direct_se": a.stderr,
                                "decomposition": b.value, "decomposition_se": b.stderr}))
    c = dataclasses.replace(cfg, exponent="drift", kappa=1.0, L=0.95, payoff_center=1.1, payoff_radius=0.2,
                            paths=min(cfg.n(100_000), 20_000))
    a = run_price(dataclasses.replace(c, bypass=False), "direct")
    b = run_price(dataclasses.replace(c, bypass=True), "direct")
    d = abs(a.value - b.value)
    rows.append(TestReport("drift_regression", d, 1e-12, bool(d > 1e-12), (a.n_paths,),
                           {"time_changed": a.value, "bypass": b.value}))
    return rows

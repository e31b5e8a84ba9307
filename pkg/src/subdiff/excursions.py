"""Excursion extraction, Parisian clocks, ranked lengths and excursion statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import gamma as gamma_fn

from . import _numba as nbh
from .harness import RngStream, concat_chunks, run_chunks
from .levy import LaplaceExponent, LevyTail, SubordinatorPath, sample_general_subordinator
from .pathlab import SamplePath, TimeChangedPath, time_change


@dataclass(frozen=True)
class ExcursionInterval:
    start: float
    end: float
    sign: int
    finished: bool
    sup_abs: float
    inner_start: float = np.nan
    inner_end: float = np.nan

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ParisianEvent:
    H: float
    g_star: float
    d_star: float
    e_g_star: float
    e_d_star: float
    censored: bool


@dataclass(frozen=True)
class RankedLengths:
    lengths: np.ndarray
    horizon: float

    @property
    def v1(self) -> float:
        return float(self.lengths[0]) if self.lengths.size else 0.0


# ---------------------------------------------------------------------------
# extraction


def _truncate(times, values, inner, horizon):
    if horizon is None or horizon >= times[-1]:
        return times, values, inner
    idx = int(np.searchsorted(times, horizon, side="right"))
    t, v, u = times[:idx], values[:idx], inner[:idx]
    if t[-1] < horizon:
        t0, t1 = times[idx - 1], times[idx]
        f = (horizon - t0) / (t1 - t0)
        t = np.append(t, horizon)
        v = np.append(v, values[idx - 1] + f * (values[idx] - values[idx - 1]))
        u = np.append(u, inner[idx - 1] + f * (inner[idx] - inner[idx - 1]))
    return t, v, u


def excursion_arrays(times, values, level: float = 0.0, horizon: float | None = None,
                     inner=None) -> dict:
    """Excursions of a piecewise-linear path about ``level`` as arrays.

    Zero samples and interpolated sign changes are level hits.  Segments of zero
    outer length are allowed; crossing inner times use the value fraction.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    inner = times if inner is None else np.asarray(inner, dtype=float)
    times, values, inner = _truncate(times, values, inner, horizon)
    n = times.size
    d = values - level
    zi = np.flatnonzero(d == 0.0)
    ci = np.flatnonzero(d[:-1] * d[1:] < 0.0)
    frac = d[ci] / (d[ci] - d[ci + 1])
    keys = np.concatenate([2 * zi, 2 * ci + 1])
    et = np.concatenate([times[zi], times[ci] + frac * (times[ci + 1] - times[ci])])
    eu = np.concatenate([inner[zi], inner[ci] + frac * (inner[ci + 1] - inner[ci])])
    order = np.argsort(keys, kind="stable")
    keys, et, eu = keys[order], et[order], eu[order]
    bk = np.concatenate([[-1], keys, [2 * n - 1]])
    bt = np.concatenate([[times[0]], et, [times[-1]]])
    bu = np.concatenate([[inner[0]], eu, [inner[-1]]])
    ka, kb = bk[:-1], bk[1:]
    j0 = ka // 2 + 1
    j1 = (kb + 1) // 2 - 1
    ok = j0 <= j1
    j0, j1 = j0[ok], j1[ok]
    start, end = bt[:-1][ok], bt[1:][ok]
    istart, iend = bu[:-1][ok], bu[1:][ok]
    finished = kb[ok] != 2 * n - 1
    sign = np.sign(d[j0]).astype(int) if j0.size else np.zeros(0, int)
    absd = np.append(np.abs(d), 0.0)
    if j0.size:
        sup = np.maximum.reduceat(absd, np.ravel(np.column_stack([j0, j1 + 1])))[::2]
    else:
        sup = np.zeros(0)
    return {"start": start, "end": end, "sign": sign, "finished": finished, "sup_abs": sup,
            "inner_start": istart, "inner_end": iend}


def _path_arrays(path):
    inner = getattr(path, "inner_times", None)
    return path.times, path.values, inner


def extract_excursions(path, level: float = 0.0, horizon: float | None = None) -> list[ExcursionInterval]:
    t, v, u = _path_arrays(path)
    a = excursion_arrays(t, v, level, horizon, u)
    return [ExcursionInterval(float(a["start"][i]), float(a["end"][i]), int(a["sign"][i]),
                              bool(a["finished"][i]), float(a["sup_abs"][i]),
                              float(a["inner_start"][i]), float(a["inner_end"][i]))
            for i in range(a["start"].size)]


def parisian_clock(path, L: float, D: float, horizon: float | None = None) -> float:
    """H = inf{t : 1[path(t) < L] (t - g_L(t)) > D}; +inf if it does not ring."""
    if D < 0:
        raise ValueError("D must be nonnegative")
    t, v, u = _path_arrays(path)
    a = excursion_arrays(t, v, L, horizon, u)
    hit = (a["sign"] < 0) & (a["end"] - a["start"] > D)
    if not hit.any():
        return np.inf
    return float(a["start"][np.argmax(hit)] + D)


def first_long_negative_excursion(tc: TimeChangedPath, D: float, level: float = 0.0) -> ParisianEvent:
    a = excursion_arrays(tc.outer_times, tc.values, level, None, tc.inner_times)
    hit = (a["sign"] < 0) & (a["end"] - a["start"] > D)
    if not hit.any():
        return ParisianEvent(np.inf, np.inf, np.inf, np.nan, np.nan, True)
    i = int(np.argmax(hit))
    g, eg = float(a["start"][i]), float(a["inner_start"][i])
    if a["finished"][i]:
        return ParisianEvent(g + D, g, float(a["end"][i]), eg, float(a["inner_end"][i]), False)
    return ParisianEvent(g + D, g, np.inf, eg, np.nan, True)


# ---------------------------------------------------------------------------
# zero-set statistics of a reflected time-changed path


def _components(tc: TimeChangedPath, t: float | None, min_inner_steps: float = 0.0):
    """Outer components of {R* > 0} on [0, t] from the inner zero set.

    Zeros of R* are the images S(u) of inner zeros u, so each gap between
    consecutive inner zeros maps to one component of length S(z') - S(z).
    Returns (finished lengths, unfinished length, inner lengths).
    """
    src, sub = tc.source, tc.subordinator
    if src is None or sub is None:
        raise ValueError("ranked statistics need the inner path and subordinator")
    t = tc.horizon if t is None else float(t)
    if t > sub.max_value:
        raise ValueError("outer time beyond the simulated subordinator")
    zu = src.times[src.values <= 0.0]
    zu = zu[zu <= sub.horizon]
    s_at = sub.value_at(zu)
    inside = s_at <= t
    zu, s_at = zu[inside], s_at[inside]
    lengths = np.diff(s_at)
    inner_len = np.diff(zu)
    h = float(np.min(np.diff(src.times))) if src.times.size > 1 else 0.0
    if min_inner_steps > 0:
        keep = inner_len >= min_inner_steps * h - 1e-15
        lengths, inner_len = lengths[keep], inner_len[keep]
    keep = lengths > 0
    unfinished = t - s_at[-1] if s_at.size else t
    return lengths[keep], max(unfinished, 0.0), inner_len[keep]


def ranked_relative_lengths(tc: TimeChangedPath, t: float | None = None,
                            min_inner_steps: float = 0.0) -> RankedLengths:
    t = tc.horizon if t is None else float(t)
    fin, unf, _ = _components(tc, t, min_inner_steps)
    allv = np.concatenate([fin, [unf]]) if unf > 0 else fin
    return RankedLengths(np.sort(allv)[::-1] / t, t)


def count_long_excursions(tc: TimeChangedPath, t: float, epsilon: float) -> int:
    if epsilon > t:
        return 0
    fin, unf, _ = _components(tc, t)
    return int(np.sum(fin >= epsilon) + (unf > epsilon))


def expected_long_count(beta: float, t: float, epsilon: float) -> float:
    """E[J_eps(t)] for a beta-stable time change of reflected BM."""
    if epsilon >= t:
        return 0.0
    b2 = beta / 2.0
    return (2.0 / beta) * (t / epsilon - 1.0) ** b2 / (gamma_fn(b2) * gamma_fn(1.0 - b2))


def excursion_tail_closed_form(c: float, beta: float, epsilon) -> float:
    """n*(zeta > eps) for a beta-stable time change with scale c."""
    return np.sqrt(2.0 * c) * np.power(epsilon, -beta / 2.0) / gamma_fn(1.0 - beta / 2.0)


# ---------------------------------------------------------------------------
# Poisson-Dirichlet


def sample_pd(alpha: float, n_sticks: int | None = None, rng: np.random.Generator | None = None,
              tol: float = 1e-6, block: int = 4096) -> RankedLengths:
    """Ranked GEM(alpha) sticks; the leftover mass below tol is appended as one entry."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if rng is None:
        raise ValueError("an rng is required")
    cap = n_sticks if n_sticks is not None else 10**7
    sticks = []
    log_rest = 0.0
    i0 = 1
    while True:
        m = min(block, cap - i0 + 1)
        if m <= 0:
            break
        idx = np.arange(i0, i0 + m)
        w = rng.beta(1.0 - alpha, idx * alpha)
        with np.errstate(divide="ignore"):
            # a stick equal to 1 leaves log-mass -inf, i.e. nothing left
            logs = np.log1p(-w)
        lr = log_rest + np.concatenate([[0.0], np.cumsum(logs)[:-1]])
        v = np.exp(lr) * w
        log_rest += float(np.sum(logs))
        sticks.append(v)
        i0 += m
        if np.exp(log_rest) < tol:
            break
    rest = np.exp(log_rest)
    if rest >= tol and n_sticks is not None:
        raise ValueError(f"residual mass {rest:.3g} after {n_sticks} sticks exceeds {tol}")
    v = np.concatenate(sticks + [[rest]])
    return RankedLengths(np.sort(v)[::-1], 1.0)


def ranked_stable_jumps(alpha: float, rng: np.random.Generator, delta: float = 1e-10) -> RankedLengths:
    """Ranked jumps of an alpha-stable subordinator on [0, 1], normalized by S(1)."""
    sub = sample_general_subordinator(0.0, LevyTail.stable(1.0, alpha), delta, np.array([0.0, 1.0]), rng)
    sizes = np.sort(sub.jumps[:, 1])[::-1] if len(sub.jumps) else np.zeros(0)
    return RankedLengths(sizes / sub.max_value, 1.0)


# ---------------------------------------------------------------------------
# excursion coupling


def xi_time_change_excursion(w: SamplePath, sub: SubordinatorPath, kappa: float | None = None) -> SamplePath:
    """w*(t) = w(inf{u : kappa u + sum of jumps up to u > t}).

    Without ``kappa`` the drift of ``sub`` is used as is.
    """
    if kappa is not None:
        at, sz = sub.atoms
        cum = np.concatenate([[0.0], np.cumsum(sz)])
        g = sub.grid_times
        values = kappa * g + cum[np.searchsorted(at, g, side="right")]
        sub = SubordinatorPath(g, values, np.column_stack([at, sz]), float(kappa))
    if sub.horizon < w.horizon:
        raise ValueError("subordinator shorter than the excursion")
    tc = time_change(w, sub)
    return SamplePath(tc.outer_times, tc.values, float(w.values[0]), w.alpha, w.sigma)


# ---------------------------------------------------------------------------
# batch engines on the inner grid


@numba.njit(cache=True)
def _fln_kernel(z, rows, sqh, h, D, c, beta, kappa, inner_cap, outer_cap,
                b, u, sgn, u0, sacc, status, g, eg, d, ed):
    """First negative excursion of B* with outer length > D.

    Each grid excursion of B gets an exact S-increment over its inner length.
    status: 0 running, 1 found, 2 inner cap reached, 3 start passed outer_cap.
    """
    m = z.shape[1]
    for r in range(rows.size):
        p = rows[r]
        bb, uu, ss, a0, sa = b[p], u[p], sgn[p], u0[p], sacc[p]
        for k in range(m):
            bn = bb + sqh * z[r, k]
            if ss == 0:
                if bn > 0:
                    ss = 1
                elif bn < 0:
                    ss = -1
            elif bn * ss <= 0.0 or (bb * bn < 20.0 * h and np.random.random() < np.exp(-2.0 * bb * bn / h)):
                # a sign change, or a Brownian bridge that touched 0 inside the step
                uc = uu + h * bb / (bb - bn) if bn * ss <= 0.0 else uu + 0.5 * h
                sl = nbh.nb_sub_length(uc - a0, c, beta, kappa)
                if ss < 0 and sl > D:
                    g[p], eg[p], d[p], ed[p] = sa, a0, sa + sl, uc
                    status[p] = 1
                    break
                sa += sl
                a0 = uc
                ss = 1 if bn > 0 else (-1 if bn < 0 else 0)
                if sa > outer_cap:
                    status[p] = 3
                    break
            bb = bn
            uu += h
            if uu >= inner_cap:
                sl = nbh.nb_sub_length(uu - a0, c, beta, kappa)
                if ss < 0 and sl > D:
                    g[p], eg[p] = sa, a0
                    status[p] = 2
                elif ss > 0 and sa + sl > outer_cap:
                    # the running positive excursion already ends past outer_cap
                    status[p] = 3
                else:
                    status[p] = 2
                break
        b[p], u[p], sgn[p], u0[p], sacc[p] = bb, uu, ss, a0, sa


def _fln_chunk(n, rng, exponent_params, D, step, inner_cap, outer_cap, block):
    c, beta, kappa = exponent_params
    nbh.seed_from(rng)
    b = np.zeros(n)
    u = np.zeros(n)
    sgn = np.zeros(n, np.int64)
    u0 = np.zeros(n)
    sacc = np.zeros(n)
    status = np.zeros(n, np.int64)
    g = np.full(n, np.inf)
    d = np.full(n, np.inf)
    eg = np.full(n, np.nan)
    ed = np.full(n, np.nan)
    active = np.arange(n)
    while active.size:
        z = rng.standard_normal((active.size, block))
        _fln_kernel(z, active, np.sqrt(step), step, D, c, beta, kappa, inner_cap, outer_cap,
                    b, u, sgn, u0, sacc, status, g, eg, d, ed)
        active = active[status[active] == 0]
    return {"g": g, "eg": eg, "d": d, "ed": ed, "status": status}


def sample_parisian_events(exponent: LaplaceExponent, D: float, n_paths: int, stream: RngStream,
                           step: float = 2.5e-4, inner_cap: float = 20.0, outer_cap: float = np.inf,
                           workers: int = 1, block: int = 1024) -> dict:
    """Batch sampler of (g*, E(g*), d*, E(d*)) for B* at level 0.

    Rows with status 2 hit the inner cap (censored; g* filled in when already
    determined); status 3 means the event would start after outer_cap.
    """
    from functools import partial
    fn = partial(_fln_chunk, exponent_params=nbh.exponent_params(exponent), D=float(D),
                 step=float(step), inner_cap=float(inner_cap), outer_cap=float(outer_cap), block=block)
    return concat_chunks(run_chunks(fn, n_paths, stream, workers))


@numba.njit(cache=True)
def _tail_kernel(z, rows, sqh, h, eps, c, beta, kappa, lt_target, inner_cap,
                 b, mn, u, rec, status, counts):
    """Count excursions of R* longer than each eps until -I reaches lt_target."""
    m = z.shape[1]
    ne = eps.size
    for r in range(rows.size):
        p = rows[r]
        bb, mm, uu, rr = b[p], mn[p], u[p], rec[p]
        for k in range(m):
            bb += sqh * z[r, k]
            uu += h
            if bb < mm:
                sl = nbh.nb_sub_length(uu - rr, c, beta, kappa)
                for j in range(ne):
                    if sl > eps[j]:
                        counts[p, j] += 1
                mm = bb
                rr = uu
                if -mm >= lt_target:
                    status[p] = 1
                    break
            if uu >= inner_cap:
                sl = nbh.nb_sub_length(uu - rr, c, beta, kappa)
                for j in range(ne):
                    if sl > eps[j]:
                        counts[p, j] += 1
                status[p] = 2
                break
        b[p], mn[p], u[p], rec[p] = bb, mm, uu, rr


def _tail_chunk(n, rng, exponent_params, eps, lt_target, step, inner_cap, block):
    c, beta, kappa = exponent_params
    nbh.seed_from(rng)
    b = np.zeros(n)
    mn = np.zeros(n)
    u = np.zeros(n)
    rec = np.zeros(n)
    status = np.zeros(n, np.int64)
    counts = np.zeros((n, eps.size), np.int64)
    active = np.arange(n)
    while active.size:
        z = rng.standard_normal((active.size, block))
        _tail_kernel(z, active, np.sqrt(step), step, eps, c, beta, kappa, lt_target, inner_cap,
                     b, mn, u, rec, status, counts)
        active = active[status[active] == 0]
    return {"counts": counts, "local_time": -mn, "status": status}


# E[max_{s<=t} W_s - max over a grid of step h] -> -zeta(1/2)/sqrt(2 pi) sqrt(h)
GRID_MIN_OVERSHOOT = 0.5825971579390106


def estimate_excursion_tail(exponent: LaplaceExponent, epsilons, n_paths: int, stream: RngStream,
                            local_time: float = 0.5, step: float = 1e-4, inner_cap: float = 50.0,
                            workers: int = 1, block: int = 2048) -> dict:
    """Monte Carlo estimate of n*(zeta > eps): long excursions of R* per unit of -I.

    The grid running minimum lags the continuous one by about
    GRID_MIN_OVERSHOOT*sqrt(step); that lag is added to the local time.
    """
    from functools import partial
    eps = np.asarray(epsilons, dtype=float)
    fn = partial(_tail_chunk, exponent_params=nbh.exponent_params(exponent), eps=eps,
                 lt_target=float(local_time), step=float(step), inner_cap=float(inner_cap), block=block)
    out = concat_chunks(run_chunks(fn, n_paths, stream, workers))
    lt = out["local_time"] + GRID_MIN_OVERSHOOT * np.sqrt(step)
    counts = out["counts"]
    total_lt = lt.sum()
    est = counts.sum(axis=0) / total_lt
    # ratio estimator standard error
    resid = counts - np.outer(lt, est)
    se = np.sqrt(np.sum(resid**2, axis=0)) / total_lt
    return {"epsilon": eps, "estimate": est, "se": se,
            "censored_fraction": float(np.mean(out["status"] == 2))}

import numpy as np
import pytest
from scipy import integrate, stats

from subdiff.harness import RngStream
from subdiff.levy import LaplaceExponent, LevyTail
from subdiff.pricing import (BumpPayoff, ContractError, MarketSpec, ParisianContract, PriceEstimate, ZeroPayoff,
                             check_decomposition_hypotheses, price_decomposition, price_direct_mc,
                             simulate_direct, weight_f)

STABLE = LaplaceExponent.stable(1.0, 0.7)
DRIFT = LaplaceExponent.drift(1.0)
BUMP = BumpPayoff(1.5, 0.2)


def test_bump_payoff():
    assert BUMP(1.5) == pytest.approx(1.0)
    assert BUMP(1.3) == 0.0 and BUMP(1.71) == 0.0
    assert np.all(BUMP(np.linspace(1.31, 1.69, 50)) > 0)
    assert BUMP.support == pytest.approx((1.3, 1.7))
    with pytest.raises(ValueError):
        BumpPayoff(1.0, 0.0)


def test_weight_f_formula():
    m = MarketSpec(1.0, 0.2, STABLE)
    z, s = np.log(1.5) / 0.2, 0.3
    assert weight_f(m, BUMP, z, s) == pytest.approx(np.exp(0.1 * z - 0.04 * s / 8))


def test_spec_validation():
    with pytest.raises(ValueError):
        MarketSpec(0.0, 0.2, STABLE)
    with pytest.raises(ValueError):
        ParisianContract(1.0, 0.0, 1.0, BUMP)


def test_zero_payoff_prices_zero(stream):
    m = MarketSpec(1.0, 0.2, STABLE)
    c = ParisianContract(1.0, 0.1, 1.0, ZeroPayoff())
    assert price_direct_mc(m, c, 100, stream).value == 0.0
    assert price_decomposition(m, c, 100, stream).value == 0.0


def test_window_longer_than_maturity_prices_zero(stream):
    m = MarketSpec(1.0, 0.2, STABLE)
    c = ParisianContract(1.0, 1.5, 1.0, BUMP)
    assert price_direct_mc(m, c, 100, stream).value == 0.0
    assert price_decomposition(m, c, 100, stream).value == 0.0


def test_decomposition_hypotheses():
    c = ParisianContract(1.0, 0.1, 1.0, BUMP)
    with pytest.raises(ContractError):
        check_decomposition_hypotheses(MarketSpec(1.0, 0.2, STABLE), ParisianContract(0.95, 0.1, 1.0, BUMP))
    with pytest.raises(ContractError):
        check_decomposition_hypotheses(MarketSpec(1.0, 0.2, DRIFT), c)
    finite = LaplaceExponent.drift_plus_jumps(1.0, LevyTail.exponential(1.0))
    with pytest.raises(ContractError):
        check_decomposition_hypotheses(MarketSpec(1.0, 0.2, finite), c)
    with pytest.raises(ContractError):
        check_decomposition_hypotheses(MarketSpec(1.0, 0.2, STABLE), ParisianContract(1.0, 0.1, 1.0,
                                                                                        BumpPayoff(1.1, 0.2)))
    check_decomposition_hypotheses(MarketSpec(1.0, 0.2, STABLE), c)


def test_bypass_equals_unit_drift_exactly():
    m = MarketSpec(1.0, 0.2, DRIFT)
    c = ParisianContract(0.95, 0.1, 1.0, BumpPayoff(1.1, 0.2))
    a = price_direct_mc(m, c, 3000, RngStream(7, ("regression",)))
    b = price_direct_mc(m, c, 3000, RngStream(7, ("regression",)), bypass=True)
    assert abs(a.value - b.value) <= 1e-12
    assert b.method == "direct_bypass" and a.value > 0


def _barrier_price(sigma, L, x, T, payoff):
    """Down-and-in barrier price (D = 0) by reflection, payoff above the barrier."""
    b = np.log(L / x) / sigma
    lo, hi = (np.log(v / x) / sigma for v in payoff.support)
    f = lambda z: (np.exp(0.5 * sigma * z - sigma**2 * T / 8) * payoff(x * np.exp(sigma * z))
                   * stats.norm.pdf(2 * b - z, scale=np.sqrt(T)))
    return integrate.quad(f, lo, hi)[0]


def test_small_window_tends_to_barrier_price():
    m = MarketSpec(1.0, 0.2, DRIFT)
    pay = BumpPayoff(1.1, 0.2)
    barrier = _barrier_price(0.2, 0.95, 1.0, 1.0, pay)
    p = [price_direct_mc(m, ParisianContract(0.95, D, 1.0, pay), 20000, RngStream(3, ("barrier",)))
         for D in (0.002, 0.01)]
    assert p[0].value < barrier
    # the window correction is of order sqrt(D)
    r0, r1 = np.sqrt(0.002), np.sqrt(0.01)
    extrap = p[0].value + (p[0].value - p[1].value) * r0 / (r1 - r0)
    assert extrap == pytest.approx(barrier, abs=0.015)


def test_monotone_in_window():
    m = MarketSpec(1.0, 0.2, STABLE)
    vals = [price_direct_mc(m, ParisianContract(1.0, D, 1.0, BUMP), 4000, RngStream(5, ("mono",))).value
            for D in (0.05, 0.1, 0.2)]
    assert vals[0] >= vals[1] >= vals[2]


def test_clock_bracket(stream):
    out = simulate_direct(MarketSpec(1.0, 0.2, STABLE), ParisianContract(0.9, 0.1, 1.0, BUMP), 500, stream)
    hit = np.isfinite(out["T_b"])
    assert hit.any()
    assert np.all(out["T_b_lo"][hit] <= out["T_b"][hit]) and np.all(out["T_b"][hit] <= out["T_b_hi"][hit])
    fin = np.isfinite(out["H"])
    assert fin.any()
    assert np.all(out["H"][fin] >= out["T_b"][fin] + 0.1 - 1e-12)


def test_direct_matches_decomposition_small():
    m = MarketSpec(1.0, 0.25, LaplaceExponent.stable(1.0, 0.6))
    c = ParisianContract(1.0, 0.1, 1.0, BUMP)
    a = price_direct_mc(m, c, 20000, RngStream(11, ("agree", "direct")))
    b = price_decomposition(m, c, 8000, RngStream(11, ("agree", "decomposition")), event_step=1e-3)
    assert abs(a.value - b.value) < 3 * np.hypot(a.stderr, b.stderr)
    assert 0 <= b.censored_fraction < 0.05


def test_price_estimate_row():
    p = PriceEstimate(0.1, 0.01, 10, "direct", 0.0)
    assert list(p.to_row()) == ["value", "stderr", "n_paths", "method", "censored_fraction"]
    lo, hi = p.ci()
    assert lo == pytest.approx(0.1 - 1.959963984540054 * 0.01)
    assert hi == pytest.approx(0.1 + 1.959963984540054 * 0.01)

import mpmath as mp
import numpy as np
import pytest

from conftest import mc_mean, within_se
from subdiff.excursions import sample_parisian_events
from subdiff.levy import LaplaceExponent, LevyTail, phi_eval, subordinator_increments
from subdiff.transforms import (PiCalculus, gaver_stehfest, hitting_pair_lt, inverse_subordinator_lt_transform,
                                m1_lt, m2_lt, mu, pi_exp_integrals, pi_plus_mass, pi_plus_mass_closed_form,
                                stehfest_weights)

STABLE = LaplaceExponent.stable(1.0, 0.7)


def test_pi_plus_mass_half_stable():
    ref = float(mp.sqrt(2) / mp.gamma(mp.mpf(3) / 4))
    calc = PiCalculus(LaplaceExponent.stable(1.0, 0.5), 1.0)
    assert pi_plus_mass(calc) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(1.15407, abs=1e-5)
    assert mu(calc) == pytest.approx(ref / 2, rel=1e-3)


def test_pi_plus_mass_decreases_in_D():
    m = [pi_plus_mass_closed_form(STABLE, D) for D in (1.0, 10.0, 100.0)]
    assert m[0] > m[1] > m[2] > 0


def test_pi_plus_mass_scaling():
    e = LaplaceExponent.stable(1.0, 0.5)
    assert pi_plus_mass_closed_form(e, 4.0) / pi_plus_mass_closed_form(e, 1.0) == pytest.approx(4 ** -0.25)


@pytest.mark.parametrize("e", [STABLE, LaplaceExponent.drift(1.0)])
def test_quadrature_mass_matches_closed_form(e):
    calc = PiCalculus(e, 0.1)
    assert calc.integrals(0.0, 0.0)[2] == pytest.approx(pi_plus_mass_closed_form(e, 0.1), rel=1e-3)


def test_integrals_at_origin():
    calc = PiCalculus(STABLE, 0.1)
    pi = pi_exp_integrals(calc, 0.0, 0.0)
    assert pi.i_minus == 0.0
    assert pi.j_plus == pytest.approx(calc.integrals(0.0, 0.0)[2])


@pytest.mark.parametrize("e", [STABLE, LaplaceExponent.drift(1.0)])
def test_full_measure_identity(e):
    calc = PiCalculus(e, 0.1)
    for lam, theta in ((0.5, 0.0), (1.0, 1.0), (2.0, 0.5)):
        pi = pi_exp_integrals(calc, lam, theta)
        assert abs(pi.identity_residual) / np.sqrt(2 * (phi_eval(e, lam) + theta)) < 1e-3


def test_full_measure_identity_general_kind():
    e = LaplaceExponent.drift_plus_jumps(0.5, LevyTail.exponential(1.0))
    calc = PiCalculus(e, 0.1, n_samples=4096, n_nodes=64)
    for lam, theta in ((1.0, 0.5), (2.0, 1.0)):
        pi = pi_exp_integrals(calc, lam, theta, rtol=0.05)
        assert abs(pi.identity_residual) / np.sqrt(2 * (phi_eval(e, lam) + theta)) < 0.05


def test_j_plus_vanishes_as_theta_grows():
    calc = PiCalculus(STABLE, 0.1)
    j = [pi_exp_integrals(calc, 1.0, th).j_plus for th in (1.0, 10.0, 100.0)]
    assert j[0] > j[1] > j[2] >= 0


def test_m_transforms_are_proper_and_monotone():
    calc = PiCalculus(STABLE, 0.1)
    assert m1_lt(calc, 0.0, 0.0) == 1.0
    assert m2_lt(calc, 0.0, 0.0) == 1.0
    grid = (0.0, 0.5, 1.0, 2.0)
    for f in (m1_lt, m2_lt):
        vals = np.array([[f(calc, l, t) for t in grid] for l in grid])
        assert np.all((vals > 0) & (vals <= 1.0))
        assert np.all(np.diff(vals, axis=0) <= 1e-12) and np.all(np.diff(vals, axis=1) <= 1e-12)


@pytest.mark.slow
def test_m1_matches_simulated_events(stream):
    calc = PiCalculus(STABLE, 0.1)
    ev = sample_parisian_events(STABLE, 0.1, 20_000, stream)
    with np.errstate(invalid="ignore", over="ignore"):
        x = np.nan_to_num(np.exp(-ev["g"] - ev["eg"]), nan=0.0)
    m, se = mc_mean(x)
    assert within_se(m, se, m1_lt(calc, 1.0, 1.0))


def test_hitting_pair_examples():
    assert hitting_pair_lt(STABLE, 0.0, 1.0, 1.0) == 1.0
    assert hitting_pair_lt(LaplaceExponent.drift(1.0), 1.0, 2.0, 0.0) == pytest.approx(np.exp(-2.0))
    with pytest.raises(ValueError):
        hitting_pair_lt(STABLE, -1.0, 1.0, 1.0)


def test_hitting_pair_simulation(rng):
    # first passage of BM to -x is x^2 / Z^2; S at that time is independent given it
    x, lam, theta = 0.7, 1.0, 0.5
    z = rng.standard_normal(100_000)
    tau = x * x / (z * z)
    s = subordinator_increments(STABLE, tau, rng)
    m, se = mc_mean(np.exp(-lam * s - theta * tau))
    assert within_se(m, se, hitting_pair_lt(STABLE, x, lam, theta))


def test_stehfest_weights_sum_to_zero():
    with mp.workdps(50):
        assert abs(mp.fsum(stehfest_weights(18))) < mp.mpf(10) ** -30


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 7.0])
def test_gs_constant(t):
    assert gaver_stehfest(lambda s: 1 / s, t) == pytest.approx(1.0, abs=1e-8)


def test_gs_classical_pairs():
    assert gaver_stehfest(lambda s: 1 / (s + 1), 1.0) == pytest.approx(0.367879, abs=1e-6)
    assert gaver_stehfest(lambda s: 1 / s**2, 2.0) == pytest.approx(2.0, abs=1e-6)


def test_gs_error_estimate_and_validation():
    val, err = gaver_stehfest(lambda s: 1 / (s + 1), 1.0, with_error=True)
    assert abs(val - np.exp(-1)) <= err + 1e-9
    for bad in (7, 20, 6):
        with pytest.raises(ValueError):
            gaver_stehfest(lambda s: 1 / s, 1.0, bad)
    with pytest.raises(ValueError):
        gaver_stehfest(lambda s: 1 / s, 0.0)


def test_gs_order_twelve_is_too_coarse_for_1e6():
    err = abs(gaver_stehfest(lambda s: 1 / (s + 1), 2.0, 12) - np.exp(-2.0))
    assert 1e-6 < err < 1e-4


def test_inverse_subordinator_transform_drift_limit():
    # E(t) = t for the identity drift, so the inverse is exp(-theta t)
    F = inverse_subordinator_lt_transform(LaplaceExponent.drift(1.0), 1.0)
    assert gaver_stehfest(F, 1.0) == pytest.approx(np.exp(-1.0), abs=1e-6)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import mc_mean, within_se
from subdiff.levy import (HorizonError, LaplaceExponent, LevyTail, SubordinatorPath, invert_subordinator,
                          kanter_transform, phi_eval, positive_stable, sample_general_subordinator,
                          sample_stable_subordinator, sample_subordinator, subordinator_increments)

EXPONENTS = [LaplaceExponent.stable(1.0, 0.5), LaplaceExponent.stable(2.0, 0.7), LaplaceExponent.drift(1.5),
             LaplaceExponent.drift_plus_jumps(0.5, LevyTail.exponential(2.0)),
             LaplaceExponent.drift_plus_jumps(0.0, LevyTail.truncated_stable(1.0, 0.6, 5.0))]


def test_phi_stable_values():
    assert phi_eval(LaplaceExponent.stable(1.0, 0.5), 1.0) == 1.0
    assert phi_eval(LaplaceExponent.stable(2.0, 0.5), 4.0) == pytest.approx(4.0, abs=1e-15)


@pytest.mark.parametrize("e", EXPONENTS)
def test_phi_at_zero_is_zero(e):
    assert phi_eval(e, 0.0) == 0.0


@pytest.mark.parametrize("e", EXPONENTS)
def test_phi_nondecreasing_and_concave(e):
    lam = np.linspace(0.0, 5.0, 41)
    p = phi_eval(e, lam)
    assert np.all(np.diff(p) >= -1e-12)
    assert np.all(np.diff(p, 2) <= 1e-9)


def test_phi_rejects_negative_lambda():
    with pytest.raises(ValueError):
        phi_eval(LaplaceExponent.stable(1.0, 0.5), -1.0)


def test_general_phi_matches_stable_closed_form():
    e = LaplaceExponent.drift_plus_jumps(0.0, LevyTail.stable(1.3, 0.6))
    for lam in (0.5, 1.0, 3.0):
        assert phi_eval(e, lam) == pytest.approx(1.3 * lam**0.6, rel=1e-7)


def test_exponential_tail_phi_closed_form():
    # w = exp(-r): phi(l) = kappa l + l / (l + 1)
    e = LaplaceExponent.drift_plus_jumps(0.5, LevyTail.exponential(1.0))
    assert phi_eval(e, 2.0) == pytest.approx(1.0 + 2.0 / 3.0, rel=1e-10)


def test_invalid_exponents():
    with pytest.raises(ValueError):
        LaplaceExponent.stable(1.0, 1.0)
    with pytest.raises(ValueError):
        LaplaceExponent.stable(0.0, 0.5)
    with pytest.raises(ValueError):
        LaplaceExponent.drift(-1.0)
    with pytest.raises(ValueError):
        LaplaceExponent.drift_plus_jumps(0.0, LevyTail.exponential())
    with pytest.raises(ValueError):
        LaplaceExponent.drift_plus_jumps(1.0, LevyTail.exponential(), delta=0.0)


def test_tail_integral_and_certificate():
    t = LevyTail.truncated_stable(1.0, 0.6, 5.0)
    assert t.integral(1.0) == pytest.approx(t.integral_0_1, rel=1e-8)
    s = LevyTail.stable(1.0, 0.6)
    ref = integrate.quad(lambda x: float(s(x)), 0, 2.0)[0]
    assert s.integral(2.0) == pytest.approx(ref, rel=1e-8)
    with pytest.raises(ValueError):
        LevyTail(lambda x: x, np.inf, True)


def test_kanter_transform_matches_laplace_transform():
    rng = np.random.default_rng(0)
    x = positive_stable(0.5, 200_000, rng)
    m, se = mc_mean(np.exp(-x))
    assert within_se(m, se, np.exp(-1.0))
    # beta = 1/2: X = 1 / (4 G) with G ~ Gamma(1/2), so the median is known
    assert kanter_transform(0.5, 0.5, 1.0) > 0


def test_stable_path_laplace_transform(rng):
    grid = np.array([0.0, 0.5, 1.0])
    s1 = np.array([sample_stable_subordinator(1.0, 0.5, grid, g).values[-1] for g in rng.spawn(20_000)])
    for lam, target in ((1.0, np.exp(-1.0)), (2.0, np.exp(-np.sqrt(2.0)))):
        m, se = mc_mean(np.exp(-lam * s1))
        assert within_se(m, se, target)


def test_stable_paths_nondecreasing(rng):
    p = sample_stable_subordinator(1.0, 0.7, np.linspace(0, 1, 1001), rng)
    assert p.values[0] == 0.0 and np.all(np.diff(p.values) >= 0)


def test_stable_rejects_bad_beta(rng):
    with pytest.raises(ValueError):
        sample_stable_subordinator(1.0, 1.2, [0.0, 1.0], rng)


def test_pure_drift_general_path(rng):
    p = sample_general_subordinator(2.0, LevyTail.zero(), 0.1, np.linspace(0, 1, 11), rng)
    assert np.allclose(p.values, 2.0 * p.grid_times, atol=0, rtol=1e-15)


def test_compound_poisson_jump_count(rng):
    t = 2.0
    counts = [len(sample_general_subordinator(0.0, LevyTail.unit_mass(), 0.5, [0.0, t], g, strict=False).jumps)
              for g in rng.spawn(20_000)]
    m, se = mc_mean(counts)
    assert within_se(m, se, t)


def test_truncated_stable_laplace_transform(rng):
    e = LaplaceExponent.drift_plus_jumps(0.0, LevyTail.truncated_stable(1.0, 0.6, 5.0), delta=1e-3)
    s = subordinator_increments(e, np.ones(50_000), rng)
    m, se = mc_mean(np.exp(-s))
    assert within_se(m, se, np.exp(-phi_eval(e, 1.0)))


def test_general_rejects_bad_delta(rng):
    with pytest.raises(ValueError):
        sample_general_subordinator(1.0, LevyTail.exponential(), 0.0, [0.0, 1.0], rng)


def test_truncation_refinement_bound(rng):
    tail = LevyTail.truncated_stable(1.0, 0.6, 5.0)
    means = []
    for delta in (1e-2, 5e-3):
        e = LaplaceExponent.drift_plus_jumps(0.0, tail, delta=delta)
        s = subordinator_increments(e, np.ones(200_000), rng)
        means.append((s.mean(), s.std(ddof=1) / np.sqrt(s.size)))
    bound = tail.small_jump_mean(1e-2)
    diff = abs(means[0][0] - means[1][0])
    assert diff < bound + 3 * np.hypot(means[0][1], means[1][1])


def test_kappa_effective_compensates_small_jumps():
    tail = LevyTail.stable(1.0, 0.5)
    e = LaplaceExponent.drift_plus_jumps(0.2, tail, delta=0.01)
    # int_0^d y nu(dy) for w = x^-1/2 / Gamma(1/2): d^(1/2) / Gamma(1/2)
    assert e.kappa_effective == pytest.approx(0.2 + 0.1 / np.sqrt(np.pi), rel=1e-8)


def test_invert_pure_drift(rng):
    p = sample_subordinator(LaplaceExponent.drift(2.0), np.linspace(0, 2, 21), rng)
    assert invert_subordinator(p, 3.0) == pytest.approx(1.5)


def test_invert_toy_path_with_jump():
    p = SubordinatorPath(np.array([0.0, 0.5, 1.0]), np.array([0.0, 4.0, 4.5]), np.array([[0.5, 3.5]]), 1.0)
    assert invert_subordinator(p, 2.0) == 0.5
    assert invert_subordinator(p, 0.25) == pytest.approx(0.25)
    assert invert_subordinator(p, 4.25) == pytest.approx(0.75)


def test_invert_beyond_horizon(rng):
    p = sample_stable_subordinator(1.0, 0.5, np.linspace(0, 1, 11), rng)
    with pytest.raises(HorizonError):
        invert_subordinator(p, p.max_value + 1.0)


def test_inverse_identity_at_grid_points(rng):
    p = sample_stable_subordinator(1.0, 0.7, np.linspace(0, 1, 201), rng)
    u = p.grid_times[1:-1]
    e = invert_subordinator(p, p.value_at(u))
    assert np.all(np.abs(e - u) <= 0.5 * 0.005 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), beta=st.floats(0.2, 0.9))
def test_inverse_brackets(seed, beta):
    rng = np.random.default_rng(seed)
    h = 0.01
    p = sample_stable_subordinator(1.0, beta, np.arange(0, 1 + h / 2, h), rng)
    t = rng.random(50) * p.max_value * 0.999
    e = invert_subordinator(p, t)
    assert np.all(p.value_at(e) >= t - 1e-12)
    assert np.all(p.value_at(np.maximum(e - h, 0.0)) <= t + 1e-12)
    assert np.all(np.diff(invert_subordinator(p, np.sort(t))) >= 0)

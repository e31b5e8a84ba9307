import numpy as np
import pytest

from conftest import mc_mean, within_se
from subdiff.levy import LaplaceExponent, SubordinatorPath, sample_subordinator
from subdiff.pathlab import (SamplePath, gbm_under_P, reflect_at_running_min, simulate_bm,
                             simulate_time_changed_bm, time_change)


def _batch_endpoints(n, alpha, rng):
    return np.array([simulate_bm(0.0, alpha, 1.0, [0.0, 0.5, 1.0], g).values[-1] for g in rng.spawn(n)])


def test_bm_variance(rng):
    x = _batch_endpoints(20_000, 0.0, rng)
    m, se = mc_mean(x**2)
    assert within_se(m, se, 1.0)


def test_bm_drift_is_subtracted(rng):
    x = _batch_endpoints(20_000, 1.0, rng)
    m, se = mc_mean(x)
    assert within_se(m, se, -1.0)


def test_single_point_grid(rng):
    p = simulate_bm(2.5, 0.0, 3.0, [0.0], rng)
    assert p.values.tolist() == [2.5]


def test_sigma_must_be_positive(rng):
    with pytest.raises(ValueError):
        simulate_bm(0.0, 0.0, 0.0, [0.0, 1.0], rng)


@pytest.mark.parametrize("values, r, lt", [([0, -1, -2], [0, 0, 0], [0, 1, 2]),
                                           ([0, 1, 0.5], [0, 1, 0.5], [0, 0, 0]),
                                           ([0, -1, 1], [0, 0, 2], [0, 1, 1])])
def test_reflection_examples(values, r, lt):
    p = SamplePath(np.arange(3.0), np.asarray(values, dtype=float))
    refl, local = reflect_at_running_min(p)
    assert refl.values.tolist() == r
    assert local.tolist() == lt


def test_reflection_properties(rng):
    p = simulate_bm(0.0, 0.0, 1.0, np.linspace(0, 1, 2001), rng)
    refl, lt = reflect_at_running_min(p)
    assert np.all(refl.values >= 0) and np.all(np.diff(lt) >= 0)
    grows = np.diff(lt) > 0
    assert np.all(refl.values[1:][grows] == 0.0)


def test_identity_time_change_resamples(rng):
    x = simulate_bm(0.0, 0.0, 1.0, np.linspace(0, 2, 201), rng)
    sub = sample_subordinator(LaplaceExponent.drift(1.0), x.times, rng)
    outer = np.linspace(0, 2, 37)
    tc = time_change(x, sub, outer)
    assert np.allclose(tc.values, x.at(outer), atol=1e-12)


def test_drift_two_halves_time(rng):
    x = simulate_bm(0.0, 0.0, 1.0, np.linspace(0, 2, 201), rng)
    sub = sample_subordinator(LaplaceExponent.drift(2.0), x.times, rng)
    outer = np.linspace(0, 4, 41)
    assert np.allclose(time_change(x, sub, outer).values, x.at(outer / 2), atol=1e-12)


def test_trap_interval_is_flat():
    x = SamplePath(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    sub = SubordinatorPath(np.linspace(0, 1, 11), np.linspace(0, 1, 11) + 3.0 * (np.linspace(0, 1, 11) >= 0.5),
                           np.array([[0.5, 3.0]]), 1.0)
    outer = np.linspace(0.5, 3.5, 13)
    tc = time_change(x, sub, outer)
    assert np.allclose(tc.values, 0.5)
    assert np.allclose(tc.inner_times, 0.5)


def test_vertex_representation_traps_are_constant(rng):
    tc = simulate_time_changed_bm(LaplaceExponent.stable(1.0, 0.7), 1.0, 1e-3, rng)
    assert np.all(np.diff(tc.outer_times) >= 0) and np.all(np.diff(tc.inner_times) >= 0)
    same_inner = np.diff(tc.inner_times) == 0
    assert np.all(np.diff(tc.values)[same_inner] == 0)
    assert np.allclose(tc.values, tc.source.at(tc.inner_times))


def test_gbm_pointwise():
    tc = time_change(SamplePath(np.array([0.0, 1.0]), np.array([0.0, 1.0])),
                     SubordinatorPath(np.array([0.0, 1.0]), np.array([0.0, 1.0]), kappa_effective=1.0),
                     np.array([0.0, 1.0]))
    s = gbm_under_P(1.0, 0.3, tc)
    assert s.values.tolist() == [1.0, pytest.approx(np.exp(0.3))]


def test_barrier_level_equivalence(rng):
    tc = simulate_time_changed_bm(LaplaceExponent.stable(1.0, 0.7), 1.0, 1e-3, rng)
    x, sigma, L = 1.0, 0.3, 0.9
    stock = gbm_under_P(x, sigma, tc).values
    b = np.log(L / x) / sigma
    assert np.array_equal(stock < L, tc.values < b)


@pytest.mark.slow
def test_quadratic_variation_tracks_inner_time(rng):
    ratios = []
    for g in rng.spawn(200):
        tc = simulate_time_changed_bm(LaplaceExponent.stable(1.0, 0.7), 1.0, 1e-4, g)
        # midpoint-atom vertices sit on the linear interpolant and would halve the sum
        on_grid = np.isclose(tc.inner_times / 1e-4, np.round(tc.inner_times / 1e-4), rtol=0, atol=1e-6)
        keep = (tc.outer_times <= 1.0) & on_grid
        qv = np.sum(np.diff(tc.values[keep]) ** 2)
        ratios.append((qv, tc.inner_times[keep][-1]))
    qv, e = np.array(ratios).T
    assert abs(qv.mean() / e.mean() - 1.0) < 0.10

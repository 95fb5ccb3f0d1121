import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from floorline.density import (DensityEvolution, GridTooCoarseError, Grid, boxplus,
                               channel_density, clipped_gaussian_mean, evolve, gain_factor)
from floorline.dynamics import noise_variance


def sampled_recursion(d_v, d_c, sigma2, tau, iterations, pop=400_000, seed=0):
    """Population-dynamics oracle: resample messages, apply the exact rules, clip."""
    rng = np.random.default_rng(seed)
    m = 2.0 / sigma2
    draw_ch = lambda: np.clip(rng.normal(m, math.sqrt(2 * m), pop), -tau, tau)
    vc = draw_ch()
    means = []
    for _ in range(iterations):
        prod = np.ones(pop)
        for _ in range(d_c - 1):
            prod *= np.tanh(rng.permutation(vc) / 2)
        cv = np.clip(2 * np.arctanh(np.clip(prod, -1 + 1e-15, 1 - 1e-15)), -tau, tau)
        means.append(cv.mean())
        acc = draw_ch()
        for _ in range(d_v - 1):
            acc = acc + rng.permutation(cv)
        vc = np.clip(acc, -tau, tau)
    return np.array(means)


@given(st.floats(-40, 40), st.floats(-40, 40))
def test_boxplus_matches_tanh_form(a, b):
    ref = 2 * np.arctanh(np.tanh(a / 2) * np.tanh(b / 2)) if max(abs(a), abs(b)) < 15 else None
    out = float(boxplus(a, b))
    assert abs(out) <= min(abs(a), abs(b)) + 1e-12
    if ref is not None and np.isfinite(ref):
        assert out == pytest.approx(ref, abs=1e-9)


def test_boxplus_large_inputs_stay_finite():
    assert float(boxplus(800.0, 900.0)) == pytest.approx(800.0)
    assert float(boxplus(-800.0, 900.0)) == pytest.approx(-800.0)


def test_channel_density_mass_and_mean():
    grid = Grid(10.0, 2048)
    pmf = channel_density(6.0, grid)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert grid.mean(pmf) == pytest.approx(clipped_gaussian_mean(6.0, 10.0), rel=1e-4)


def test_clipped_mean_limits():
    assert clipped_gaussian_mean(4.0, 1e6) == pytest.approx(4.0)
    assert clipped_gaussian_mean(400.0, 10.0) == pytest.approx(10.0)


def test_coarse_grid_is_rejected():
    with pytest.raises(GridTooCoarseError):
        evolve(3, 5, 0.02, 1000.0, 2, half_bins=16)


def test_density_matches_sampled_recursion():
    s2 = noise_variance(2.5, 0.4)
    res = evolve(3, 5, s2, 10.0, 6)
    oracle = sampled_recursion(3, 5, s2, 10.0, 6)
    np.testing.assert_allclose(res.m_ext, oracle, rtol=0.01)


def test_grid_refinement_is_stable():
    s2 = noise_variance(3.0, 0.4)
    coarse = evolve(3, 5, s2, 10.0, 8, half_bins=1024).m_ext
    fine = evolve(3, 5, s2, 10.0, 8, half_bins=2048).m_ext
    np.testing.assert_allclose(coarse, fine, rtol=1e-3)


def test_threshold_of_three_six_ensemble():
    # BP threshold of the (3,6) ensemble sits near sigma = 0.88
    above = evolve(3, 6, 0.80 ** 2, 30.0, 60, half_bins=1024)
    below = evolve(3, 6, 0.95 ** 2, 30.0, 60, half_bins=1024)
    assert above.m_vc[-1] > 25
    assert below.m_vc[-1] < 10


def test_gains_are_bounded_and_start_at_one():
    res = evolve(3, 5, noise_variance(3.0, 0.4), 10.0, 10, half_bins=1024)
    for mode in ("density", "mean-field"):
        g = res.gains(mode)
        assert g[0] == 1.0 and len(g) == 11
        assert ((g > 0) & (g <= 1)).all()
    assert (res.gains("density") <= res.gains("mean-field") + 1e-12).all()
    with pytest.raises(ValueError):
        gain_factor(5, res.channel, res.grid, "bogus")


def test_degree_two_checks_have_unit_gain():
    grid = Grid(10.0, 64)
    assert gain_factor(2, channel_density(1.0, grid), grid) == 1.0


def test_invalid_arguments():
    with pytest.raises(ValueError):
        evolve(3, 5, 1.0, 0.0, 5)
    with pytest.raises(ValueError):
        evolve(3, 5, 1.0, 10.0, 0)
    with pytest.raises(ValueError):
        evolve(1, 5, 1.0, 10.0, 3)


def test_estimator_shape():
    est = DensityEvolution(iterations=4, half_bins=512)
    assert clone(est).get_params() == est.get_params()
    out = est.fit([3.0, 4.0]).transform()
    assert out.shape == (2, 4)
    assert (out[1] > out[0]).all()
    assert est.gains_.shape == (2, 5)

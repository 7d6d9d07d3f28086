"""Density, gradient, and moment checks for the benchmark targets."""

import math

import numpy as np
import pytest

from helpers import fd_gradient
from temperedhmc.targets import (
    DONUT25_COORD_VAR,
    DONUT25_RADIAL_MEAN,
    DONUT25_RADIAL_SECOND_MOMENT,
    DONUT25_RADIAL_VAR,
    GaussianMixture,
    ShellMixture,
    make_benchmark_bimodal,
    make_donut,
    make_standard_gaussian,
    make_swiss_roll,
    make_target,
    make_trajectory_bimodal,
)


def test_standard_gaussian_at_origin():
    for d in (1, 2, 7, 25):
        target = make_standard_gaussian(d)
        assert target.log_density(np.zeros(d)) == pytest.approx(
            -0.5 * d * math.log(2 * math.pi), rel=1e-14
        )


def test_bimodal_log_density_at_mode():
    # manual two-term computation, no library logsumexp involved
    target = make_benchmark_bimodal()
    expected = math.log(0.5) - math.log(2 * math.pi) + math.log1p(math.exp(-32.0))
    assert target.log_density(np.array([0.0, -4.0])) == pytest.approx(expected, rel=1e-14)
    assert target.log_density(np.array([0.0, 4.0])) == pytest.approx(expected, rel=1e-14)


def test_bimodal_saddle_depth():
    # the origin sits exactly between the modes, 8 - log 2 above them in
    # potential, up to the e^{-32} overlap correction
    target = make_benchmark_bimodal()
    at_saddle = target.log_density(np.zeros(2))
    at_mode = target.log_density(np.array([0.0, 4.0]))
    drop = at_mode - at_saddle
    expected = 8.0 - math.log(2.0) + math.log1p(math.exp(-32.0))
    # both components contribute e^{-8} equally at the origin
    manual_saddle = -math.log(2 * math.pi) - 8.0
    assert at_saddle == pytest.approx(manual_saddle, rel=1e-12)
    assert drop == pytest.approx(expected, rel=1e-12)


def test_log_density_far_tail_stays_finite():
    # naive exp() underflows to -inf here; the shifted form must not
    target = make_benchmark_bimodal()
    theta = np.array([0.0, 80.0])
    # closer mode dominates; manual shifted two-term sum
    q1 = (80.0 + 4.0) ** 2
    q2 = (80.0 - 4.0) ** 2
    manual = (
        math.log(0.5)
        - math.log(2 * math.pi)
        - 0.5 * q2
        + math.log1p(math.exp(-0.5 * (q1 - q2)))
    )
    assert target.log_density(theta) == pytest.approx(manual, rel=1e-12)


def test_mixture_gradient_matches_finite_differences(rng):
    targets = [make_benchmark_bimodal(), make_swiss_roll(), make_standard_gaussian(3)]
    for target in targets:
        for _ in range(12):
            theta = rng.normal(scale=2.5, size=target.dim)
            _, grad = target.log_density_and_grad(theta)
            fd = fd_gradient(target.log_density, theta, h=1e-5)
            assert np.allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_shell_gradient_matches_finite_differences(rng):
    target = make_donut(dim=4)
    for _ in range(12):
        theta = rng.normal(scale=0.8, size=4)
        _, grad = target.log_density_and_grad(theta)
        fd = fd_gradient(target.log_density, theta, h=1e-5)
        assert np.allclose(grad, fd, rtol=1e-5, atol=1e-6)


def test_shell_gradient_at_origin_is_zero():
    target = make_donut(dim=3)
    _, grad = target.log_density_and_grad(np.zeros(3))
    assert np.all(grad == 0.0)


def test_batch_density_matches_pointwise(rng):
    for target in (make_benchmark_bimodal(), make_donut(dim=5)):
        thetas = rng.normal(scale=2.0, size=(40, target.dim))
        batch = target.log_density_batch(thetas)
        single = np.array([target.log_density(th) for th in thetas])
        assert np.allclose(batch, single, rtol=1e-12, atol=1e-12)


def test_mixture_moments_closed_form():
    target = make_benchmark_bimodal()
    # mean 0; coord 0 variance 1; coord 1 variance E[x^2] = 1 + 16
    assert np.allclose(target.coordinate_means(), [0.0, 0.0])
    assert np.allclose(target.coordinate_variances(), [1.0, 17.0])
    rotated = make_trajectory_bimodal()
    assert np.allclose(rotated.coordinate_variances(), [17.0, 1.0])


def test_mixture_exact_sampler_moments(rng):
    target = make_benchmark_bimodal()
    draws = target.sample_exact(rng, 200_000)
    assert abs(draws[:, 1].mean()) < 0.05
    assert abs(draws[:, 1].var() - 17.0) < 0.4
    assert abs(draws[:, 0].var() - 1.0) < 0.03


def test_marginal_cdf_properties():
    target = make_benchmark_bimodal()
    xs = np.linspace(-12.0, 12.0, 101)
    cdf = target.marginal_cdf(1, xs)
    assert np.all(np.diff(cdf) > 0)
    assert cdf[0] < 1e-8 and cdf[-1] > 1 - 1e-8
    assert target.marginal_cdf(1, np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-14)


def test_donut_frozen_radial_moments():
    target = make_donut()
    mean, second = target.radial_moments
    assert mean == pytest.approx(DONUT25_RADIAL_MEAN, rel=1e-12)
    assert second == pytest.approx(DONUT25_RADIAL_SECOND_MOMENT, rel=1e-12)
    assert second - mean**2 == pytest.approx(DONUT25_RADIAL_VAR, rel=1e-9)
    assert np.allclose(target.coordinate_variances(), DONUT25_COORD_VAR)


def test_donut_radial_mode_location():
    # stationarity of the dominant-shell radial density:
    # d/dr [24 log r - (r - 1.5)^2 / 0.02] = 0 near r* ~ 1.653
    roots = np.roots([1.0 / 0.01, -1.5 / 0.01, -24.0])
    r_star = float(roots[roots > 0][0])
    target = make_donut()
    r_grid, pdf = target._radial_grid()
    assert abs(r_grid[np.argmax(pdf)] - r_star) < 2e-3
    # displaced outward from the shell center by the r^24 area factor
    assert DONUT25_RADIAL_MEAN > 1.5


def test_shell_exact_sampler_radial_moments(rng):
    target = make_donut()
    draws = target.sample_exact(rng, 100_000)
    r = np.linalg.norm(draws, axis=1)
    assert abs(r.mean() - DONUT25_RADIAL_MEAN) < 2e-3
    assert abs(r.var() - DONUT25_RADIAL_VAR) < 4e-4
    assert np.all(np.abs(draws.mean(axis=0)) < 0.01)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GaussianMixture([0.7, 0.7], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[0.0, 0.0]], covariances=[[[1.0, 2.0], [0.0, 1.0]]])
    with pytest.raises(ValueError):
        ShellMixture([1.0, -2.0], 0.1, 3)
    with pytest.raises(ValueError):
        make_standard_gaussian(2).log_density(np.zeros(3))


def test_make_target_registry():
    assert make_target("bimodal").dim == 2
    assert make_target("donut25", dim=6).dim == 6
    assert make_target("gaussian", dim=4).dim == 4
    with pytest.raises(ValueError):
        make_target("cauchy")
    with pytest.raises(ValueError):
        make_target("bimodal", dim=3)

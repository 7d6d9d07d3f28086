"""Benchmark target distributions.

Every target exposes an unnormalized log-density together with its analytic
gradient.  Mixture components use properly normalized Gaussian densities, so
values like the bimodal valley height ``U(0,0) - U(-4,0) = 8 - log 2`` come
out exactly; the overall scale at the modes stays O(1), which matters because
tempered metrics are powers of the density.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.special import logsumexp


class TargetDistribution:
    """Interface for a target density.

    Subclasses must set ``dim`` and implement :meth:`log_density_and_grad`.
    ``log_density`` and ``grad_log_density`` fall out of that single routine;
    keeping them joined avoids recomputing shared work inside integrator
    loops, where both are needed at every step.
    """

    dim: int

    def log_density_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def log_density(self, theta: np.ndarray) -> float:
        return self.log_density_and_grad(theta)[0]

    def grad_log_density(self, theta: np.ndarray) -> np.ndarray:
        return self.log_density_and_grad(theta)[1]

    def log_density_batch(self, thetas: np.ndarray) -> np.ndarray:
        """Log-density over rows of ``thetas``; subclasses may vectorize."""
        thetas = np.asarray(thetas, dtype=float)
        return np.array([self.log_density(t) for t in thetas])

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(
                f"expected theta of shape ({self.dim},), got {theta.shape}"
            )
        return theta


class GaussianMixture(TargetDistribution):
    """Finite mixture of multivariate Gaussians with closed-form gradient.

    Parameters
    ----------
    weights : array-like, shape (k,)
        Mixture weights.  Must be nonnegative and sum to one.
    means : array-like, shape (k, d)
        Component means.
    covariances : array-like, shape (k, d, d), optional
        Component covariances.  Identity for every component when omitted.
    """

    def __init__(self, weights, means, covariances=None):
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        k, d = self.means.shape
        self.dim = d
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (k,):
            raise ValueError("weights and means disagree on component count")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        if covariances is None:
            covariances = np.broadcast_to(np.eye(d), (k, d, d))
        self.covariances = np.array(covariances, dtype=float)
        if self.covariances.shape != (k, d, d):
            raise ValueError("covariances must have shape (k, d, d)")
        self._log_weights = np.log(self.weights)
        self._inv_covs = np.empty_like(self.covariances)
        self._chols = np.empty_like(self.covariances)
        self._log_norms = np.empty(k)
        for i, cov in enumerate(self.covariances):
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("covariances must be symmetric")
            chol = np.linalg.cholesky(cov)  # raises if not positive definite
            self._chols[i] = chol
            self._inv_covs[i] = np.linalg.inv(cov)
            self._log_norms[i] = -0.5 * d * math.log(2 * math.pi) - np.log(
                np.diag(chol)
            ).sum()
        # unit-covariance components skip the einsum contraction; this is the
        # hot path of every benchmark run
        self._unit_covs = bool(
            np.array_equal(self.covariances, np.broadcast_to(np.eye(d), (k, d, d)))
        )

    def _component_logs(self, theta: np.ndarray):
        diffs = theta - self.means  # (k, d)
        if self._unit_covs:
            y = diffs
            quad = (diffs * diffs).sum(axis=1)
        else:
            y = np.einsum("kij,kj->ki", self._inv_covs, diffs)
            quad = np.einsum("ki,ki->k", diffs, y)
        comp = self._log_weights + self._log_norms - 0.5 * quad
        return comp, y

    def log_density_and_grad(self, theta):
        theta = self._check_theta(theta)
        comp, y = self._component_logs(theta)
        shift = comp.max()
        if not math.isfinite(shift):  # quad overflow far out, or nan input
            return float(shift), np.zeros_like(theta)
        weights = np.exp(comp - shift)
        total_w = weights.sum()
        total = shift + math.log(total_w)
        grad = -(weights @ y) / total_w
        return float(total), grad

    def log_density(self, theta):
        theta = self._check_theta(theta)
        comp, _ = self._component_logs(theta)
        shift = comp.max()
        if not math.isfinite(shift):
            return float(shift)
        return float(shift + math.log(np.exp(comp - shift).sum()))

    def log_density_batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        diffs = thetas[:, None, :] - self.means[None, :, :]  # (n, k, d)
        y = np.einsum("kij,nkj->nki", self._inv_covs, diffs)
        quad = np.einsum("nki,nki->nk", diffs, y)
        comp = self._log_weights + self._log_norms - 0.5 * quad
        return logsumexp(comp, axis=1)

    def sample_exact(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw exact samples, used for exact-start stationarity checks."""
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        out = np.einsum("nij,nj->ni", self._chols[idx], z) + self.means[idx]
        return out

    @cached_property
    def _moments(self):
        mean = self.weights @ self.means
        second = np.einsum(
            "k,kj->j", self.weights, np.diagonal(self.covariances, axis1=1, axis2=2)
        ) + self.weights @ self.means**2
        return mean, second - mean**2

    def coordinate_means(self) -> np.ndarray:
        return self._moments[0].copy()

    def coordinate_variances(self) -> np.ndarray:
        return self._moments[1].copy()

    def marginal_cdf(self, coord: int, x):
        """Exact CDF of coordinate ``coord`` (a mixture of normal CDFs)."""
        from scipy.stats import norm

        x = np.asarray(x, dtype=float)
        sd = np.sqrt(self.covariances[:, coord, coord])
        mu = self.means[:, coord]
        return norm.cdf((x[..., None] - mu) / sd) @ self.weights


class ShellMixture(TargetDistribution):
    """Concentric spherical shells: density depends on theta only through its norm.

    log pi(theta) = logsumexp_i( -(||theta|| - mu_i)^2 / (2 sigma^2) ) - log sigma.

    The gradient is radial.  At the origin the radial direction is undefined;
    the gradient is reported as zero there (a measure-zero point).
    """

    def __init__(self, radii, width: float, dim: int):
        self.radii = np.asarray(radii, dtype=float)
        if np.any(self.radii <= 0) or width <= 0 or dim < 1:
            raise ValueError("radii and width must be positive, dim >= 1")
        self.width = float(width)
        self.dim = int(dim)

    def log_density_and_grad(self, theta):
        theta = self._check_theta(theta)
        r = float(np.linalg.norm(theta))
        dev = r - self.radii
        comp = -(dev**2) / (2 * self.width**2)
        shift = comp.max()
        weights = np.exp(comp - shift)
        total_w = weights.sum()
        total = float(shift + math.log(total_w)) - math.log(self.width)
        if r < 1e-12:
            return total, np.zeros(self.dim)
        dlog_dr = float(weights @ (-dev)) / (total_w * self.width**2)
        return total, (dlog_dr / r) * theta

    def log_density_batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        r = np.linalg.norm(thetas, axis=1)
        comp = -((r[:, None] - self.radii) ** 2) / (2 * self.width**2)
        return logsumexp(comp, axis=1) - math.log(self.width)

    def _radial_grid(self):
        r_max = float(self.radii.max() + 12 * self.width)
        r = np.linspace(1e-9, r_max, 20001)
        log_pdf = (self.dim - 1) * np.log(r) + logsumexp(
            -((r[:, None] - self.radii) ** 2) / (2 * self.width**2), axis=1
        )
        pdf = np.exp(log_pdf - log_pdf.max())
        return r, pdf

    @cached_property
    def radial_moments(self) -> tuple[float, float]:
        """(E[r], E[r^2]) of the radial marginal, by dense quadrature."""
        r, pdf = self._radial_grid()
        norm = np.trapezoid(pdf, r)
        mean = np.trapezoid(r * pdf, r) / norm
        second = np.trapezoid(r * r * pdf, r) / norm
        return float(mean), float(second)

    def coordinate_means(self) -> np.ndarray:
        return np.zeros(self.dim)

    def coordinate_variances(self) -> np.ndarray:
        # isotropy: E[theta_j^2] = E[r^2] / d, means are zero
        return np.full(self.dim, self.radial_moments[1] / self.dim)

    def sample_exact(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draws via inverse-CDF on a dense radial grid times a uniform direction.

        Radial accuracy is set by the grid (2e4 points over the support);
        adequate for chain starts and moment checks, not for tail studies.
        """
        r, pdf = self._radial_grid()
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * np.diff(r) / 2)])
        cdf /= cdf[-1]
        radii = np.interp(rng.uniform(size=n), cdf, r)
        z = rng.standard_normal((n, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return radii[:, None] * z


# Radial moments of the 25-dimensional three-shell target (radii i/2, width
# 0.1), from quadrature on the radial density r^(d-1) sum_i exp(-(r-mu_i)^2 /
# (2 sigma^2)) over [0, 4] to better than 1e-10.  The r^24 factor puts nearly
# all mass on the outer shell, displaced outward to E[r] ~ 1.646 (the
# stationary point of 24 log r - (r - 1.5)^2 / 0.02).  Per-coordinate
# variance is E[r^2]/d by isotropy.
DONUT25_RADIAL_MEAN = 1.646195806172617
DONUT25_RADIAL_SECOND_MOMENT = 2.7191779470674184
DONUT25_RADIAL_VAR = 0.009217314807106192
DONUT25_COORD_VAR = DONUT25_RADIAL_SECOND_MOMENT / 25.0


def make_standard_gaussian(dim: int = 1) -> GaussianMixture:
    """Standard normal in ``dim`` dimensions as a one-component mixture."""
    return GaussianMixture([1.0], np.zeros((1, dim)))


def make_benchmark_bimodal() -> GaussianMixture:
    """Equal mixture of unit Gaussians at (0, -4) and (0, 4).

    This is the ESS benchmark layout; the slow direction is coordinate 1.
    """
    return GaussianMixture([0.5, 0.5], [[0.0, -4.0], [0.0, 4.0]])


def make_trajectory_bimodal() -> GaussianMixture:
    """Equal mixture of unit Gaussians at (-4, 0) and (4, 0).

    Used for trajectory illustrations; same distribution as the benchmark
    layout up to a rotation, with the valley crossing along coordinate 0.
    """
    return GaussianMixture([0.5, 0.5], [[-4.0, 0.0], [4.0, 0.0]])


SWISS_ROLL_COMPONENTS = 32
SWISS_ROLL_SIGMA = 0.35
SWISS_ROLL_R0 = 0.5
SWISS_ROLL_SLOPE = 0.35
SWISS_ROLL_TURNS = 3 * math.pi


def make_swiss_roll() -> GaussianMixture:
    """Two-dimensional spiral of Gaussian bumps.

    32 equally weighted components with covariance ``sigma^2 I`` whose means
    trace the Archimedean spiral r = 0.5 + 0.35 phi for phi in [0, 3 pi].
    The construction is a documented stand-in; numbers derived from it are
    treated as ordering-only.
    """
    phi = np.linspace(0.0, SWISS_ROLL_TURNS, SWISS_ROLL_COMPONENTS)
    r = SWISS_ROLL_R0 + SWISS_ROLL_SLOPE * phi
    means = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    k = SWISS_ROLL_COMPONENTS
    covs = np.broadcast_to(SWISS_ROLL_SIGMA**2 * np.eye(2), (k, 2, 2))
    return GaussianMixture(np.full(k, 1.0 / k), means, covs)


def make_donut(dim: int = 25) -> ShellMixture:
    """Three concentric shells at radii 0.5, 1.0, 1.5 with width 0.1."""
    return ShellMixture([0.5, 1.0, 1.5], 0.1, dim)


def make_target(name: str, **overrides) -> TargetDistribution:
    """Build a benchmark target from its configuration key."""
    if name == "bimodal":
        target = make_benchmark_bimodal()
    elif name == "trajectory-bimodal":
        target = make_trajectory_bimodal()
    elif name == "swissroll":
        target = make_swiss_roll()
    elif name == "donut25":
        target = make_donut(int(overrides.pop("dim", 25)))
    elif name == "gaussian":
        target = make_standard_gaussian(int(overrides.pop("dim", 2)))
    else:
        raise ValueError(f"unknown target {name!r}")
    if overrides:
        raise ValueError(f"unknown target options {sorted(overrides)} for {name!r}")
    return target

"""Efficiency and landscape diagnostics.

ESS estimation follows the initial-monotone-sequence construction, with
one twist: autocovariances are computed around the supplied true mean of
the statistic rather than the empirical mean.  A chain stuck in one mode
of a multimodal target then shows a large persistent deviation and a
correspondingly tiny ESS, instead of looking healthy around its local
average.  Reports cover the mean and variance estimator of every
coordinate and take the minimum.

The energy-barrier oracle computes the minimax path value between two
points of a 2-d potential on a grid: nodes activate in order of increasing
potential and union with active neighbors; the potential at which the two
endpoints first connect is the lowest possible path maximum.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import stats

from .errors import ConfigError
from .samplers import ChainRecord
from .targets import TargetDistribution


def autocovariance_true_mean(series, mu: float, k: int) -> float:
    """Lag-k autocovariance around the known mean mu.

    a(k) = (1/M) sum_{m=1}^{M-k} (g_{m+k} - mu)(g_m - mu); the 1/M
    normalization (rather than 1/(M-k)) keeps the sequence positive
    semidefinite.
    """
    x = np.asarray(series, dtype=float) - mu
    m_len = x.shape[0]
    if not 0 <= k < m_len:
        raise ValueError(f"lag k={k} outside [0, {m_len})")
    if k == 0:
        return float(x @ x) / m_len
    return float(x[k:] @ x[:-k]) / m_len


def _autocovariances_fft(x: np.ndarray) -> np.ndarray:
    """All lags of the 1/M autocovariance of a centered series, via FFT."""
    m_len = x.shape[0]
    n_fft = 1 << (2 * m_len - 1).bit_length()
    f = np.fft.rfft(x, n_fft)
    acov = np.fft.irfft(f * np.conj(f), n_fft)[:m_len]
    return acov / m_len


def ess_geyer(series, mu: float) -> float:
    """Effective sample size by the initial monotone sequence rule.

    Pairs adjacent autocovariances, truncates at the first nonpositive
    pair, enforces a nonincreasing pair sequence, and returns
    M a(0) / (2 sum(pairs) - a(0)).  A series with zero variance around mu
    returns M by convention; a negative denominator (strong
    anticorrelation) returns inf and is capped at report level.
    """
    x = np.asarray(series, dtype=float) - mu
    m_len = x.shape[0]
    if m_len < 4:
        raise ValueError("series too short for ESS estimation")
    acov = _autocovariances_fft(x)
    a0 = acov[0]
    if a0 <= 0.0:
        return float(m_len)
    n_pairs = m_len // 2
    pairs = acov[0 : 2 * n_pairs : 2] + acov[1 : 2 * n_pairs : 2]
    total = 0.0
    running_min = math.inf
    for value in pairs:
        if value <= 0.0:
            break
        running_min = min(running_min, float(value))
        total += running_min
    denom = 2.0 * total - a0
    if denom <= 0.0:
        return math.inf
    return m_len * a0 / denom


@dataclasses.dataclass(frozen=True)
class EssReport:
    """Minimum-ESS summary of one chain against known true moments."""

    ess_mean: np.ndarray  # per coordinate, capped at chain length
    ess_var: np.ndarray
    min_ess: float
    ess_per_100_samples: float
    ess_per_gradient_budget: float
    gradient_budget: int
    n_samples: int
    raw_min_ess: float  # before capping; may exceed n_samples


def ess_report(
    chain, true_means, true_vars, gradient_budget: int
) -> EssReport:
    """ESS of every coordinate's mean and variance estimator, minimized.

    ``chain`` is a ChainRecord or a samples array of shape (M, d).  The
    variance-estimator series for coordinate j is (theta_j - mu_j)^2 with
    true mean Var_j.
    """
    if isinstance(chain, ChainRecord):
        samples = chain.samples_array()
    else:
        samples = np.asarray(chain, dtype=float)
    if samples.ndim != 2:
        raise ValueError("need samples of shape (M, d)")
    m_len, d = samples.shape
    true_means = np.asarray(true_means, dtype=float)
    true_vars = np.asarray(true_vars, dtype=float)
    if true_means.shape != (d,) or true_vars.shape != (d,):
        raise ValueError("true moments must match the sample dimension")
    if gradient_budget <= 0:
        raise ValueError("gradient_budget must be positive")
    ess_mean = np.empty(d)
    ess_var = np.empty(d)
    for j in range(d):
        ess_mean[j] = ess_geyer(samples[:, j], true_means[j])
        centered_sq = (samples[:, j] - true_means[j]) ** 2
        ess_var[j] = ess_geyer(centered_sq, true_vars[j])
    raw_min = float(min(ess_mean.min(), ess_var.min()))
    ess_mean = np.minimum(ess_mean, m_len)
    ess_var = np.minimum(ess_var, m_len)
    min_ess = float(min(ess_mean.min(), ess_var.min()))
    return EssReport(
        ess_mean=ess_mean,
        ess_var=ess_var,
        min_ess=min_ess,
        ess_per_100_samples=min_ess / m_len * 100.0,
        ess_per_gradient_budget=min_ess / gradient_budget,
        gradient_budget=int(gradient_budget),
        n_samples=m_len,
        raw_min_ess=raw_min,
    )


def radial_series(samples) -> np.ndarray:
    """Euclidean norms of the samples, as a (M, 1) statistic matrix."""
    samples = np.asarray(samples, dtype=float)
    return np.linalg.norm(samples, axis=1)[:, None]


# ---------------------------------------------------------------------------
# energy barrier oracle


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Rectangular evaluation grid for the 2-d barrier oracle."""

    x_min: float = -8.0
    x_max: float = 8.0
    y_min: float = -4.0
    y_max: float = 4.0
    spacing: float = 0.04


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[ri] = rj


def energy_barrier_grid(
    target: TargetDistribution,
    theta1,
    theta2,
    grid_spec: GridSpec | None = None,
    temperature: float = 1.0,
) -> float:
    """Minimax-path barrier of U = -log pi / temperature between two points.

    Activates grid nodes from low to high potential, merging with active
    8-neighbors; the activation level at which theta1 and theta2 join is
    the lowest achievable maximum along any grid path.  Returns that level
    minus U at theta1's node.  Dividing U by the temperature scales the
    result exactly linearly, because the activation order is unchanged.
    """
    if target.dim != 2:
        raise ValueError("barrier oracle handles 2-d targets only")
    spec = grid_spec or GridSpec()
    xs = np.arange(spec.x_min, spec.x_max + 0.5 * spec.spacing, spec.spacing)
    ys = np.arange(spec.y_min, spec.y_max + 0.5 * spec.spacing, spec.spacing)
    nx, ny = xs.shape[0], ys.shape[0]
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
    points = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    potential = -target.log_density_batch(points) / temperature

    def snap(theta):
        theta = np.asarray(theta, dtype=float)
        ix = int(np.clip(round((theta[0] - spec.x_min) / spec.spacing), 0, nx - 1))
        iy = int(np.clip(round((theta[1] - spec.y_min) / spec.spacing), 0, ny - 1))
        return ix * ny + iy

    node1, node2 = snap(theta1), snap(theta2)
    if node1 == node2:
        return 0.0
    order = np.argsort(potential, kind="stable")
    active = np.zeros(nx * ny, dtype=bool)
    uf = _UnionFind(nx * ny)
    neighbor_offsets = [
        (-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1),
    ]
    for node in order:
        active[node] = True
        ix, iy = divmod(int(node), ny)
        for dx, dy in neighbor_offsets:
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny:
                neighbor = jx * ny + jy
                if active[neighbor]:
                    uf.union(node, neighbor)
        if uf.find(node1) == uf.find(node2):
            return float(potential[node] - potential[node1])
    raise ConfigError("endpoints never connected; grid extent insufficient")


def ks_statistic(series, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and an analytic CDF."""
    return float(stats.kstest(np.asarray(series, dtype=float), cdf).statistic)

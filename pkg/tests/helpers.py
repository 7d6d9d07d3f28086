"""Shared oracles for the test suite.

Everything in here is deliberately slow and direct: finite differences,
dense linear algebra, explicit loops.  The package's fast paths are tested
against these, never against themselves.
"""

from __future__ import annotations

import numpy as np


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


def fd_jacobian(step_map, x, h=1e-6):
    """Central-difference Jacobian matrix of a vector map."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((step_map(x + e) - step_map(x - e)) / (2.0 * h))
    return np.column_stack(cols)


def dense_gamma_fd(metric, theta, h=1e-6):
    """Connection matrices assembled purely from finite differences.

    Uses only metric_matrix and the target density, none of the analytic
    derivative code, so it cross-checks dense_gamma itself.
    """
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    dG = np.empty((d, d, d))
    for m in range(d):
        e = np.zeros(d)
        e[m] = h
        dG[m] = (metric.metric_matrix(theta + e) - metric.metric_matrix(theta - e)) / (
            2.0 * h
        )
    G_inv = np.linalg.inv(metric.metric_matrix(theta))

    def log_eta(th):
        return metric.log_eta_from_log_pi(metric.target.log_density(th))

    dlogeta = fd_gradient(log_eta, theta, h)
    pre = 0.5 * np.einsum("km,mij->kij", G_inv, dG)
    pre -= np.einsum("km,imj->kij", G_inv, dG)
    for k in range(d):
        pre[k, :, k] += dlogeta
    return 0.5 * (pre + np.transpose(pre, (0, 2, 1)))


def dense_half_kick_matrix(metric, theta, v, h):
    """I - h v^T Gamma, contracting v into the symmetric slot."""
    gamma = metric.dense_gamma(np.asarray(theta, dtype=float))
    d = gamma.shape[0]
    return np.eye(d) - h * np.einsum("kij,i->kj", gamma, np.asarray(v, dtype=float))


def ar1_series(rho, n, rng, sigma=1.0):
    """Stationary AR(1) with autocorrelation rho^k and variance sigma^2."""
    innov_sd = sigma * np.sqrt(1.0 - rho**2)
    x = np.empty(n)
    x[0] = rng.normal(scale=sigma)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + rng.normal(scale=innov_sd)
    return x


def autocov_direct(series, mu, k):
    """Known-mean autocovariance with the 1/M normalization, plain loop."""
    x = np.asarray(series, dtype=float) - mu
    m = x.size
    total = 0.0
    for i in range(m - k):
        total += x[i + k] * x[i]
    return total / m


def ess_direct(series, mu):
    """Monotone initial-sequence ESS computed with explicit loops."""
    x = np.asarray(series, dtype=float)
    m = x.size
    a0 = autocov_direct(x, mu, 0)
    if a0 <= 0.0:
        return float(m)
    pair_sum = 0.0
    running_min = np.inf
    for j in range(m // 2):
        gamma_j = autocov_direct(x, mu, 2 * j)
        if 2 * j + 1 < m:
            gamma_j += autocov_direct(x, mu, 2 * j + 1)
        if gamma_j <= 0.0:
            break
        running_min = min(running_min, gamma_j)
        pair_sum += running_min
    denom = 2.0 * pair_sum - a0
    if denom <= 0.0:
        return float("inf")
    return m * a0 / denom

"""Reversible integration of constant-metric and tempered dynamics.

Two schemes live here.  ``leapfrog_step`` is the classic velocity Verlet
update for a separable Hamiltonian with identity mass; it is volume
preserving, so samplers built on it never track a Jacobian.

``adaptive_step`` integrates the time-rescaled tempered dynamics: the
velocity half-kicks are linearly implicit (a Kahan-style discretization of
the quadratic velocity term), which keeps the scheme explicit (each
half-kick is one structured linear solve) while remaining reversible.  The
scheme is not volume preserving; every step returns the log-Jacobian of the
update, the sum of the two half-kick determinant terms (the position drift
is a shear and contributes nothing).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import IntegrationStepError, TemperingSingularityError
from .metrics import MetricContext, PhaseState, TemperedMetric
from .targets import TargetDistribution

#: Exception types a sampler converts into a proposal rejection.
STEP_FAILURES = (IntegrationStepError, TemperingSingularityError)


@dataclasses.dataclass(frozen=True)
class IntegratorStepResult:
    """One integrator step: end state, its log-Jacobian, gradient cost."""

    state1: PhaseState
    log_jacobian: float
    grad_evals: int


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Recorded integration path.

    ``t`` holds cumulative physical time, reconstructed from the
    s-parametrization through dt = eta ds with a trapezoid rule per step.
    """

    theta: np.ndarray  # (n+1, d)
    v: np.ndarray  # (n+1, d)
    log_pi: np.ndarray  # (n+1,)
    t: np.ndarray  # (n+1,)

    def __len__(self) -> int:
        return self.theta.shape[0]


def _checked_grad(target: TargetDistribution, theta):
    log_pi, grad = target.log_density_and_grad(theta)
    if not (math.isfinite(log_pi) and np.all(np.isfinite(grad))):
        raise IntegrationStepError(f"non-finite target at theta={theta!r}")
    return log_pi, grad


def leapfrog_step(target: TargetDistribution, theta, p, eps: float):
    """One velocity Verlet step for H = -log pi + ||p||^2 / 2."""
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    _, grad = _checked_grad(target, theta)
    p_half = p + 0.5 * eps * grad
    theta1 = theta + eps * p_half
    _, grad1 = _checked_grad(target, theta1)
    p1 = p_half + 0.5 * eps * grad1
    return theta1, p1


def leapfrog_chain(target, theta, p, eps, n_steps, log_pi=None, grad=None):
    """``n_steps`` leapfrog steps with one gradient per step.

    Accepts the cached (log_pi, grad) at theta; returns the end state with
    its (log_pi, grad) and the number of fresh gradient evaluations.
    """
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    evals = 0
    if grad is None:
        log_pi, grad = _checked_grad(target, theta)
        evals += 1
    for _ in range(n_steps):
        p = p + 0.5 * eps * grad
        theta = theta + eps * p
        if not np.all(np.isfinite(theta)):
            raise IntegrationStepError("non-finite position")
        log_pi, grad = _checked_grad(target, theta)
        evals += 1
        p = p + 0.5 * eps * grad
    return theta, p, log_pi, grad, evals


def adaptive_step_from_context(
    m: TemperedMetric, ctx0: MetricContext, v0: np.ndarray, eps: float
):
    """One adaptive step given the prepared context at the start point.

    Returns (ctx1, v1, log_jacobian).  The context at the end point is
    handed back so a chained caller evaluates the target once per step.
    """
    h = 0.5 * eps
    v_half, log_det_0 = m.half_kick(ctx0, v0, h)
    theta1 = ctx0.theta + eps * v_half
    if not np.all(np.isfinite(theta1)):
        raise IntegrationStepError("non-finite position")
    ctx1 = m.context(theta1)
    v1, log_det_1 = m.half_kick(ctx1, v_half, h)
    if not np.all(np.isfinite(v1)):
        raise IntegrationStepError("non-finite velocity")
    return ctx1, v1, log_det_0 + log_det_1


def adaptive_step(m: TemperedMetric, theta0, v0, eps: float) -> IntegratorStepResult:
    """One reversible step of the time-rescaled tempered dynamics.

    The two half-kicks solve linearly implicit systems in v; their combined
    log-determinant is the log-Jacobian of the full step.  With the
    identity metric the quadratic velocity term vanishes and the update is
    exactly velocity Verlet with zero log-Jacobian.
    """
    ctx0 = m.context(np.asarray(theta0, dtype=float))
    ctx1, v1, log_jac = adaptive_step_from_context(
        m, ctx0, np.asarray(v0, dtype=float), eps
    )
    return IntegratorStepResult(
        state1=PhaseState(ctx1.theta, v1, "velocity"),
        log_jacobian=log_jac,
        grad_evals=2,
    )


def integrate_path(m: TemperedMetric, theta0, v0, eps: float, n_steps: int):
    """Iterate ``adaptive_step`` and record the whole path.

    Returns (trajectory, total_log_jacobian, grad_evals).  A failing step
    raises :class:`IntegrationStepError` carrying the 0-based index of the
    step that failed.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    theta0 = np.asarray(theta0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    d = theta0.shape[0]
    thetas = np.empty((n_steps + 1, d))
    vs = np.empty((n_steps + 1, d))
    log_pis = np.empty(n_steps + 1)
    times = np.empty(n_steps + 1)
    ctx = m.context(theta0)
    thetas[0], vs[0], log_pis[0], times[0] = theta0, v0, ctx.log_pi, 0.0
    v = v0
    total_log_jac = 0.0
    for i in range(n_steps):
        eta_prev = ctx.eta
        try:
            ctx, v, log_jac = adaptive_step_from_context(m, ctx, v, eps)
        except STEP_FAILURES as exc:
            raise IntegrationStepError(
                f"step {i} failed: {exc}", step_index=i
            ) from exc
        total_log_jac += log_jac
        thetas[i + 1] = ctx.theta
        vs[i + 1] = v
        log_pis[i + 1] = ctx.log_pi
        times[i + 1] = times[i] + 0.5 * eps * (eta_prev + ctx.eta)
    trajectory = Trajectory(theta=thetas, v=vs, log_pi=log_pis, t=times)
    return trajectory, total_log_jac, n_steps + 1


def reparametrization_check(linear_map, target, theta0, p0, eps, n) -> float:
    """Desk check that a constant metric is a linear change of coordinates.

    Integrates (a) leapfrog with mass matrix A^T A in the original
    coordinates and (b) identity-mass leapfrog in the mapped coordinates
    theta_tilde = A theta, then maps (b) back and returns the max pointwise
    deviation over the whole path (positions and momenta).  In exact
    arithmetic both paths coincide step by step.
    """
    A = np.asarray(linear_map, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    A_inv = np.linalg.inv(A)
    # mass M = A^T A, so the drift uses M^{-1} = A^{-1} A^{-T}
    M_inv = A_inv @ A_inv.T

    def grad(theta):
        _, g = _checked_grad(target, theta)
        return g

    # side (a): mass-matrix leapfrog in theta
    theta_a, p_a = theta0.copy(), p0.copy()
    # side (b): identity-mass leapfrog in theta_tilde; p maps by A^T
    theta_b, p_b = A @ theta0, np.linalg.solve(A.T, p0)
    max_dev = 0.0
    for _ in range(n):
        g = grad(theta_a)
        p_a = p_a + 0.5 * eps * g
        theta_a = theta_a + eps * (M_inv @ p_a)
        p_a = p_a + 0.5 * eps * grad(theta_a)

        g_b = A_inv.T @ grad(A_inv @ theta_b)
        p_b = p_b + 0.5 * eps * g_b
        theta_b = theta_b + eps * p_b
        p_b = p_b + 0.5 * eps * (A_inv.T @ grad(A_inv @ theta_b))

        dev_theta = np.max(np.abs(theta_a - A_inv @ theta_b))
        dev_p = np.max(np.abs(p_a - A.T @ p_b))
        max_dev = max(max_dev, dev_theta, dev_p)
    return max_dev

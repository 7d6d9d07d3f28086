"""MCMC transition kernels.

Five kernels share a common shape: ``<name>_iteration`` functions hold the
algorithm, thin frozen-dataclass kernels carry configuration and feed
:func:`run_chain`.

* ``hmc``: leapfrog HMC with identity mass.
* ``nuts``: multinomial no-U-turn sampler, identity mass.
* ``chmc``: fixed-length compressible HMC on a tempered metric; the
  acceptance ratio carries the integrator log-Jacobian plus the gauge term
  converting the velocity-space Jacobian into the momentum-space ratio.
* ``vlt-chmc``: compressible HMC with trajectory length fixed in physical
  time, so the number of integration steps varies with the local
  time-rescaling eta.  Transitions go between two index sets built around
  the current point and the landing point; see ``_vlt_construct``.
* ``mmala``: Langevin proposal preconditioned by the tempered metric.

Every kernel draws from the passed Generator in a fixed documented order
(direction, momentum, acceptance, landing), which makes chains bit
reproducible from a seed and makes the tempered kernels collapse onto HMC
draw-for-draw at T = 1.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import logsumexp

from .errors import IntegrationStepError
from .integrators import STEP_FAILURES, adaptive_step_from_context, leapfrog_chain
from .metrics import DirectionalMetric, MetricContext, TemperedMetric
from .targets import TargetDistribution

_DIVERGENCE_THRESHOLD = 1000.0
DEFAULT_N_MAX = 10_000


@dataclasses.dataclass(frozen=True)
class SamplerState:
    """Position with its cached target evaluation."""

    theta: np.ndarray
    log_pi: float
    grad_log_pi: np.ndarray


def initial_state(target: TargetDistribution, theta) -> SamplerState:
    theta = np.asarray(theta, dtype=float)
    log_pi, grad = target.log_density_and_grad(theta)
    if not math.isfinite(log_pi):
        raise ValueError(f"initial position has zero density: {theta!r}")
    return SamplerState(theta, log_pi, grad)


@dataclasses.dataclass(frozen=True)
class IterationInfo:
    """Per-iteration diagnostics every kernel reports."""

    accepted: bool
    energy: float
    grad_evals: int
    stat: float  # statistic driving step-size adaptation, in [0, 1]
    tree_depth: int = 0
    max_depth_hit: bool = False
    truncated: bool = False
    step_failed: bool = False
    sets: "VltSets | None" = None


# ---------------------------------------------------------------------------
# chain records


class ChainRecord:
    """Append-only record of one chain.

    ``grad_eval_total`` counts gradient evaluations of appended iterations
    only (burn-in excluded), which is the denominator of cost-normalized
    efficiency numbers.
    """

    def __init__(self, kernel_name: str, seed: int):
        self.kernel_name = kernel_name
        self.seed = int(seed)
        self.samples: list[np.ndarray] = []
        self.accept_flags: list[bool] = []
        self.energies: list[float] = []
        self.grad_eval_total: int = 0

    def append(self, theta, accepted: bool, energy: float, grad_evals: int):
        if grad_evals < 0:
            raise ValueError("grad_evals must be >= 0")
        self.samples.append(np.asarray(theta, dtype=float))
        self.accept_flags.append(bool(accepted))
        self.energies.append(float(energy))
        self.grad_eval_total += int(grad_evals)

    def __len__(self) -> int:
        return len(self.samples)

    def samples_array(self) -> np.ndarray:
        return np.asarray(self.samples)

    def accept_rate(self) -> float:
        if not self.accept_flags:
            return math.nan
        return float(np.mean(self.accept_flags))

    def to_csv(self, path):
        data = self.samples_array()
        with open(path, "w", encoding="utf-8") as fh:
            cols = ["iteration"]
            cols += [f"theta_{j}" for j in range(data.shape[1] if len(self) else 0)]
            cols += ["accepted", "energy"]
            fh.write(",".join(cols) + "\n")
            for i in range(len(self)):
                row = [str(i)]
                row += [format(x, ".12g") for x in data[i]]
                row += [str(int(self.accept_flags[i])), format(self.energies[i], ".12g")]
                fh.write(",".join(row) + "\n")


def spawn_chain_seeds(master_seed: int, n_chains: int) -> list[int]:
    """Derive independent per-chain seeds from one master seed.

    Uses ``SeedSequence.spawn`` and folds each child into a 64-bit integer
    so the seed can be stored on the ChainRecord.
    """
    children = np.random.SeedSequence(master_seed).spawn(n_chains)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


# ---------------------------------------------------------------------------
# HMC


def hmc_iteration(target, eps, n_steps, state: SamplerState, rng):
    """One HMC transition: refresh p ~ N(0, I), leapfrog, MH correction."""
    d = state.theta.shape[0]
    p0 = rng.standard_normal(d)
    h0 = -state.log_pi + 0.5 * float(p0 @ p0)
    try:
        theta1, p1, lp1, grad1, evals = leapfrog_chain(
            target, state.theta, p0, eps, n_steps, state.log_pi, state.grad_log_pi
        )
    except STEP_FAILURES:
        info = IterationInfo(False, h0, n_steps, 0.0, step_failed=True)
        return state, info
    h1 = -lp1 + 0.5 * float(p1 @ p1)
    log_r = h0 - h1
    accepted = math.log(rng.uniform()) < log_r
    stat = min(1.0, math.exp(min(log_r, 0.0)))
    if accepted:
        state = SamplerState(theta1, lp1, grad1)
    info = IterationInfo(accepted, h1 if accepted else h0, evals, stat)
    return state, info


# ---------------------------------------------------------------------------
# NUTS


@dataclasses.dataclass(frozen=True)
class _Leaf:
    theta: np.ndarray
    p: np.ndarray
    log_pi: float
    grad: np.ndarray
    h: float


@dataclasses.dataclass
class _SubTree:
    minus: _Leaf  # backward-most leaf in global trajectory orientation
    plus: _Leaf  # forward-most leaf
    prop: _Leaf
    log_w: float
    sum_alpha: float
    n_alpha: int
    n_evals: int
    turned: bool
    diverged: bool


def _uturn(minus: _Leaf, plus: _Leaf) -> bool:
    dtheta = plus.theta - minus.theta
    return float(dtheta @ minus.p) < 0.0 or float(dtheta @ plus.p) < 0.0


def _nuts_leaf(target, z: _Leaf, direction: int, eps: float, h0: float):
    step = direction * eps
    p_half = z.p + 0.5 * step * z.grad
    theta1 = z.theta + step * p_half
    if not np.all(np.isfinite(theta1)):
        raise IntegrationStepError("non-finite position")
    lp1, grad1 = target.log_density_and_grad(theta1)
    if not (math.isfinite(lp1) and np.all(np.isfinite(grad1))):
        raise IntegrationStepError("non-finite target")
    p1 = p_half + 0.5 * step * grad1
    h = -lp1 + 0.5 * float(p1 @ p1)
    leaf = _Leaf(theta1, p1, lp1, grad1, h)
    diverged = (h - h0) > _DIVERGENCE_THRESHOLD
    log_w = -math.inf if diverged else h0 - h
    alpha = min(1.0, math.exp(min(h0 - h, 0.0)))
    return _SubTree(leaf, leaf, leaf, log_w, alpha, 1, 1, False, diverged)


def _nuts_build(target, z: _Leaf, direction, depth, eps, h0, rng) -> _SubTree:
    if depth == 0:
        return _nuts_leaf(target, z, direction, eps, h0)
    first = _nuts_build(target, z, direction, depth - 1, eps, h0, rng)
    if first.turned or first.diverged:
        return first
    edge = first.plus if direction == 1 else first.minus
    second = _nuts_build(target, edge, direction, depth - 1, eps, h0, rng)
    log_w = np.logaddexp(first.log_w, second.log_w)
    # unbiased multinomial choice inside a subtree
    if math.log(rng.uniform()) < second.log_w - log_w:
        prop = second.prop
    else:
        prop = first.prop
    minus = first.minus if direction == 1 else second.minus
    plus = second.plus if direction == 1 else first.plus
    turned = first.turned or second.turned or _uturn(minus, plus)
    return _SubTree(
        minus,
        plus,
        prop,
        log_w,
        first.sum_alpha + second.sum_alpha,
        first.n_alpha + second.n_alpha,
        first.n_evals + second.n_evals,
        turned,
        first.diverged or second.diverged,
    )


def nuts_iteration(target, eps, state: SamplerState, rng, max_depth: int = 10):
    """One multinomial no-U-turn transition with identity mass.

    The trajectory doubles in a random direction until the classic U-turn
    criterion fires across the outermost leaves, a subtree diverges, or
    ``max_depth`` doublings complete.  Leaves are weighted by exp(-(H -
    H0)); the freshly built half replaces the current proposal with
    probability min(1, w_new / w_old).
    """
    d = state.theta.shape[0]
    p0 = rng.standard_normal(d)
    h0 = -state.log_pi + 0.5 * float(p0 @ p0)
    z0 = _Leaf(state.theta, p0, state.log_pi, state.grad_log_pi, h0)
    minus = plus = prop = z0
    log_w = 0.0
    sum_alpha = 0.0
    n_alpha = 0
    n_evals = 0
    depth = 0
    max_depth_hit = True
    for depth in range(max_depth):
        direction = 1 if rng.uniform() < 0.5 else -1
        edge = plus if direction == 1 else minus
        try:
            sub = _nuts_build(target, edge, direction, depth, eps, h0, rng)
        except STEP_FAILURES:
            max_depth_hit = False
            break
        n_evals += sub.n_evals
        sum_alpha += sub.sum_alpha
        n_alpha += sub.n_alpha
        if sub.turned or sub.diverged:
            max_depth_hit = False
            break
        # biased progressive selection favors the new half
        if math.log(rng.uniform()) < sub.log_w - log_w:
            prop = sub.prop
        log_w = np.logaddexp(log_w, sub.log_w)
        if direction == 1:
            plus = sub.plus
        else:
            minus = sub.minus
        if _uturn(minus, plus):
            max_depth_hit = False
            depth += 1
            break
    else:
        depth = max_depth
    accepted = prop is not z0
    if accepted:
        state = SamplerState(prop.theta, prop.log_pi, prop.grad)
    stat = sum_alpha / n_alpha if n_alpha else 0.0
    info = IterationInfo(
        accepted,
        prop.h,
        n_evals,
        stat,
        tree_depth=depth,
        max_depth_hit=max_depth_hit,
    )
    return state, info


# ---------------------------------------------------------------------------
# fixed-length compressible HMC


def _metric_context_from_state(m: TemperedMetric, state: SamplerState):
    return m.context(state.theta, state.log_pi, state.grad_log_pi)


def chmc_iteration(m: TemperedMetric, eps, n_steps, state: SamplerState, rng):
    """Compressible HMC with a fixed number of adaptive steps.

    The proposal map is flip-after-integrate in (theta, v); the acceptance
    ratio is exp(H0 - H1) times the integrator Jacobian times the gauge
    factor exp(psi_1 - psi_0) that converts the velocity-space volume to
    momentum space, where psi = log|G| - d log eta.
    """
    ctx0 = _metric_context_from_state(m, state)
    d = state.theta.shape[0]
    z = rng.standard_normal(d)
    v = m.velocity_from_standard_normal(ctx0, z)
    # p = G^{1/2} z makes the kinetic energy z.z/2 exactly
    h0 = m.potential(ctx0.log_pi) + 0.5 * float(z @ z)
    ctx = ctx0
    log_jac = 0.0
    try:
        for _ in range(n_steps):
            ctx, v, step_jac = adaptive_step_from_context(m, ctx, v, eps)
            log_jac += step_jac
    except STEP_FAILURES:
        info = IterationInfo(False, h0, n_steps, 0.0, step_failed=True)
        return state, info
    h1 = m.potential(ctx.log_pi) + m.kinetic_v(ctx, v)
    log_r = (h0 - h1) + log_jac + (m.psi(ctx.log_pi) - m.psi(ctx0.log_pi))
    accepted = math.log(rng.uniform()) < log_r
    stat = min(1.0, math.exp(min(log_r, 0.0))) if math.isfinite(log_r) else 0.0
    if accepted:
        state = SamplerState(ctx.theta, ctx.log_pi, ctx.grad_log_pi)
    info = IterationInfo(accepted, h1 if accepted else h0, n_steps, stat)
    return state, info


# ---------------------------------------------------------------------------
# variable-length compressible HMC


@dataclasses.dataclass(frozen=True)
class VltSets:
    """Bookkeeping of one variable-length trajectory construction.

    Indices are relative to the current point (index 0).  The current set
    covers [a, b]; the landing set covers [n_forward, m2 - 1], where
    ``n_forward`` is the physical-time step count from index 0 and ``m2``
    the step count from index b + 1.  ``truncated`` marks constructions
    that hit the step budget or a failing step and were rejected outright.
    """

    forward_step_count: int
    backward_step_count: int
    a: int = 0
    b: int = 0
    m2: int = 0
    total_steps: int = 0
    truncated: bool = False
    log_weights_current: np.ndarray | None = None
    log_weights_landing: np.ndarray | None = None


@dataclasses.dataclass
class _VltConstruction:
    """Trajectory states around index 0 with times and cumulative Jacobians.

    Forward lists are indexed by global index i >= 0; backward lists hold
    global index -(r + 1) at position r.
    """

    sets: VltSets
    fwd_ctx: list[MetricContext]
    fwd_v: list[np.ndarray]
    fwd_t: list[float]
    fwd_J: list[float]
    bwd_ctx: list[MetricContext]
    bwd_v: list[np.ndarray]  # velocities of the flipped trajectory
    bwd_t: list[float]
    bwd_J: list[float]

    def state_at(self, i: int):
        """(ctx, v) of global index i, in forward orientation."""
        if i >= 0:
            return self.fwd_ctx[i], self.fwd_v[i]
        r = -i - 1
        return self.bwd_ctx[r], -self.bwd_v[r]

    def time_at(self, i: int) -> float:
        return self.fwd_t[i] if i >= 0 else self.bwd_t[-i - 1]

    def log_jac_at(self, i: int) -> float:
        return self.fwd_J[i] if i >= 0 else self.bwd_J[-i - 1]


def _log_rho_v(m: TemperedMetric, ctx: MetricContext, v) -> float:
    """Log phase-space density in (theta, v) coordinates, up to a constant."""
    return -(m.potential(ctx.log_pi) + m.kinetic_v(ctx, v)) + m.psi(ctx.log_pi)


def _truncated_sets(n_forward, n_backward, total) -> VltSets:
    return VltSets(
        forward_step_count=n_forward,
        backward_step_count=n_backward,
        total_steps=total,
        truncated=True,
    )


def _vlt_construct(
    m: TemperedMetric, ctx0: MetricContext, v0, eps: float, tau: float, n_max: int
) -> _VltConstruction:
    """Build the two index sets of a variable-length transition.

    Let t(i) be cumulative physical time (trapezoid in eta per step) and
    n(i) the first index j with t(j) - t(i) > tau.  The construction finds

    * the landing count M = n(0),
    * the current set I = [a, b], the maximal block around 0 on which n is
      constant (equal to M),
    * the landing set K = [M, m2 - 1] with m2 = n(b + 1), exactly the
      indices whose backward count lands in I.

    Forward integration runs to m2 and backward integration to a - 1, one
    index past each set, because the defining inequalities are strict and
    membership of the boundary is only known once the neighbor is seen.
    """
    fwd_ctx = [ctx0]
    fwd_v = [np.asarray(v0, dtype=float)]
    fwd_t = [0.0]
    fwd_J = [0.0]

    def forward_step():
        ctx, v, step_jac = adaptive_step_from_context(m, fwd_ctx[-1], fwd_v[-1], eps)
        fwd_t.append(fwd_t[-1] + 0.5 * eps * (fwd_ctx[-1].eta + ctx.eta))
        fwd_J.append(fwd_J[-1] + step_jac)
        fwd_ctx.append(ctx)
        fwd_v.append(v)

    # phase 1: integrate forward until the trajectory time exceeds tau
    try:
        while fwd_t[-1] - fwd_t[0] <= tau:
            if len(fwd_ctx) > n_max:
                con_sets = _truncated_sets(0, 0, len(fwd_ctx) - 1)
                return _VltConstruction(con_sets, fwd_ctx, fwd_v, fwd_t, fwd_J, [], [], [], [])
            forward_step()
    except STEP_FAILURES:
        con_sets = _truncated_sets(0, 0, len(fwd_ctx) - 1)
        return _VltConstruction(con_sets, fwd_ctx, fwd_v, fwd_t, fwd_J, [], [], [], [])
    n_forward = len(fwd_ctx) - 1  # M = n(0)

    # b: the largest index whose forward count is still M
    b = 0
    while fwd_t[n_forward] - fwd_t[b + 1] > tau:
        b += 1

    # phase 2: extend forward until the count from b + 1 is exhausted
    try:
        while fwd_t[-1] - fwd_t[b + 1] <= tau:
            if len(fwd_ctx) > n_max:
                con_sets = _truncated_sets(n_forward, 0, len(fwd_ctx) - 1)
                return _VltConstruction(con_sets, fwd_ctx, fwd_v, fwd_t, fwd_J, [], [], [], [])
            forward_step()
    except STEP_FAILURES:
        con_sets = _truncated_sets(n_forward, 0, len(fwd_ctx) - 1)
        return _VltConstruction(con_sets, fwd_ctx, fwd_v, fwd_t, fwd_J, [], [], [], [])
    m2 = len(fwd_ctx) - 1  # n(b + 1)

    # phase 3: integrate backward (flipped velocity) until index a - 1,
    # where a is the smallest index with t(M - 1) - t(a) <= tau
    bwd_ctx: list[MetricContext] = []
    bwd_v: list[np.ndarray] = []
    bwd_t: list[float] = []
    bwd_J: list[float] = []
    t_cut = fwd_t[n_forward - 1]
    cur_ctx, cur_v = ctx0, -fwd_v[0]
    cur_t, cur_J = 0.0, 0.0
    a = 1  # becomes <= 0 after the first backward step
    try:
        while True:
            total = m2 + len(bwd_ctx)
            if total >= n_max:
                con_sets = _truncated_sets(n_forward, len(bwd_ctx), total)
                return _VltConstruction(
                    con_sets, fwd_ctx, fwd_v, fwd_t, fwd_J, bwd_ctx, bwd_v, bwd_t, bwd_J
                )
            ctx, v, step_jac = adaptive_step_from_context(m, cur_ctx, cur_v, eps)
            cur_t = cur_t - 0.5 * eps * (cur_ctx.eta + ctx.eta)
            # flipped-step Jacobians accumulate with a plus sign: each one
            # is the reciprocal of the matching forward-step Jacobian
            cur_J = cur_J + step_jac
            cur_ctx, cur_v = ctx, v
            bwd_ctx.append(ctx)
            bwd_v.append(v)
            bwd_t.append(cur_t)
            bwd_J.append(cur_J)
            if t_cut - cur_t > tau:
                a = -len(bwd_ctx) + 1
                break
    except STEP_FAILURES:
        con_sets = _truncated_sets(n_forward, len(bwd_ctx), m2 + len(bwd_ctx))
        return _VltConstruction(
            con_sets, fwd_ctx, fwd_v, fwd_t, fwd_J, bwd_ctx, bwd_v, bwd_t, bwd_J
        )

    con = _VltConstruction(
        VltSets(n_forward, len(bwd_ctx)),
        fwd_ctx,
        fwd_v,
        fwd_t,
        fwd_J,
        bwd_ctx,
        bwd_v,
        bwd_t,
        bwd_J,
    )
    log_w_current = np.array(
        [
            _log_rho_v(m, *con.state_at(i)) + con.log_jac_at(i)
            for i in range(a, b + 1)
        ]
    )
    log_w_landing = np.array(
        [
            _log_rho_v(m, *con.state_at(k)) + con.log_jac_at(k)
            for k in range(n_forward, m2)
        ]
    )
    con.sets = VltSets(
        forward_step_count=n_forward,
        backward_step_count=len(bwd_ctx),
        a=a,
        b=b,
        m2=m2,
        total_steps=m2 + len(bwd_ctx),
        truncated=False,
        log_weights_current=log_w_current,
        log_weights_landing=log_w_landing,
    )
    return con


def vlt_step_count(
    m: TemperedMetric, theta0, v0, eps: float, tau: float, n_max: int = DEFAULT_N_MAX
) -> int:
    """Number of adaptive steps until cumulative physical time exceeds tau.

    Physical time advances by eps * (eta_prev + eta_next) / 2 per step
    (trapezoid rule), so the count adapts to the local time rescaling.
    Exceeding ``n_max`` raises :class:`IntegrationStepError`.
    """
    if tau <= 0 or eps <= 0:
        raise ValueError("tau and eps must be positive")
    ctx = m.context(np.asarray(theta0, dtype=float))
    v = np.asarray(v0, dtype=float)
    t = 0.0
    n = 0
    while t <= tau:
        if n >= n_max:
            raise IntegrationStepError(f"step budget exceeded (n_max={n_max})")
        eta_prev = ctx.eta
        ctx, v, _ = adaptive_step_from_context(m, ctx, v, eps)
        t += 0.5 * eps * (eta_prev + ctx.eta)
        n += 1
    return n


def vlt_chmc_iteration(
    m: TemperedMetric,
    eps: float,
    tau: float,
    state: SamplerState,
    rng,
    n_max: int = DEFAULT_N_MAX,
    debug: bool = False,
):
    """One variable-length compressible transition.

    Builds the current set I and landing set K, accepts the set move with
    probability min(1, V_K / V_I) of the compressible weights, then picks
    the landing index within K proportionally to its weight; the new state
    is the flipped landing state.  A step failure or budget overrun
    rejects without consuming further randomness.
    """
    ctx0 = _metric_context_from_state(m, state)
    d = state.theta.shape[0]
    z = rng.standard_normal(d)
    v0 = m.velocity_from_standard_normal(ctx0, z)
    h0 = m.potential(ctx0.log_pi) + 0.5 * float(z @ z)
    try:
        con = _vlt_construct(m, ctx0, v0, eps, tau, n_max)
    except STEP_FAILURES:
        info = IterationInfo(False, h0, 0, 0.0, step_failed=True)
        return state, info
    sets = con.sets
    if sets.truncated:
        info = IterationInfo(
            False, h0, sets.total_steps, 0.0, truncated=True, sets=sets
        )
        return state, info
    log_v_i = logsumexp(sets.log_weights_current)
    log_v_k = logsumexp(sets.log_weights_landing)
    log_r = log_v_k - log_v_i
    accepted = math.log(rng.uniform()) < log_r
    stat = math.exp(-abs(log_r)) if math.isfinite(log_r) else 0.0
    landing = sets.forward_step_count
    if accepted:
        weights = sets.log_weights_landing
        if weights.shape[0] > 1:
            probs = np.exp(weights - log_v_k)
            u = rng.uniform()
            landing = sets.forward_step_count + int(
                np.searchsorted(np.cumsum(probs), u)
            )
            landing = min(landing, sets.m2 - 1)
        if debug:
            verify_vlt_transition(m, eps, tau, con, n_max=n_max)
        ctx_k, v_k = con.state_at(landing)
        state = SamplerState(ctx_k.theta, ctx_k.log_pi, ctx_k.grad_log_pi)
        energy = m.potential(ctx_k.log_pi) + m.kinetic_v(ctx_k, -v_k)
    else:
        energy = h0
    info = IterationInfo(
        accepted, energy, sets.total_steps, stat, sets=sets
    )
    return state, info


def verify_vlt_transition(
    m: TemperedMetric,
    eps: float,
    tau: float,
    con: _VltConstruction,
    n_max: int = DEFAULT_N_MAX,
    atol: float = 1e-6,
):
    """Re-derive the sets from every member and check the set relations.

    For each i in I the flipped-endpoint map must land inside K at the
    same global index M, and for each k in K the reverse construction must
    land at b inside I; the first states past each boundary must land
    outside.  Raises AssertionError with the failing relation.
    """
    sets = con.sets
    a, b = sets.a, sets.b
    big_m, m2 = sets.forward_step_count, sets.m2

    def rebuild(i: int, flipped: bool):
        ctx, v = con.state_at(i)
        if flipped:
            v = -v
        return _vlt_construct(m, ctx, v, eps, tau, n_max)

    for i in range(a, b + 1):
        sub = rebuild(i, flipped=False)
        if sub.sets.truncated:
            raise AssertionError(f"re-integration from {i} truncated")
        end = i + sub.sets.forward_step_count
        if end != big_m:
            raise AssertionError(
                f"member {i} of I maps to {end}, expected {big_m}"
            )
        if (i + sub.sets.a, i + sub.sets.b) != (a, b):
            raise AssertionError(f"I rebuilt from {i} differs")
        if i + sub.sets.m2 != m2:
            raise AssertionError(f"K rebuilt from {i} differs")
        ref_ctx, _ = con.state_at(big_m)
        got_ctx, _ = sub.state_at(sub.sets.forward_step_count)
        if not np.allclose(got_ctx.theta, ref_ctx.theta, atol=atol):
            raise AssertionError(f"endpoint state from {i} drifted")
    for k in range(big_m, m2):
        sub = rebuild(k, flipped=True)
        if sub.sets.truncated:
            raise AssertionError(f"re-integration from R z_{k} truncated")
        end = k - sub.sets.forward_step_count
        if end != b:
            raise AssertionError(
                f"member {k} of K maps back to {end}, expected {b}"
            )
        # its current set is the flipped K, its landing set the flipped I
        if (k - sub.sets.b, k - sub.sets.a) != (big_m, m2 - 1):
            raise AssertionError(f"K rebuilt from {k} differs")
        if (k - (sub.sets.m2 - 1)) != a:
            raise AssertionError(f"I rebuilt from {k} differs")
        ref_ctx, _ = con.state_at(b)
        got_ctx, _ = sub.state_at(sub.sets.forward_step_count)
        if not np.allclose(got_ctx.theta, ref_ctx.theta, atol=atol):
            raise AssertionError(f"endpoint state from R z_{k} drifted")
    # boundary exclusions
    sub = rebuild(a - 1, flipped=False)
    if not sub.sets.truncated:
        end = (a - 1) + sub.sets.forward_step_count
        if big_m <= end < m2:
            raise AssertionError(f"state {a - 1} outside I still lands in K")
    sub = rebuild(m2, flipped=True)
    if not sub.sets.truncated:
        end = m2 - sub.sets.forward_step_count
        if a <= end <= b:
            raise AssertionError(f"state R z_{m2} outside R(K) still lands in I")
    return True


# ---------------------------------------------------------------------------
# MMALA


def mmala_iteration(m: TemperedMetric, eps_l: float, state: SamplerState, rng):
    """Metric-preconditioned Langevin proposal with MH correction.

    Proposal: theta' ~ N(theta + eps_l b(theta), eps_l G^{-1}(theta)), with
    b the reversible-diffusion drift (gradient plus divergence term,
    closed-form per metric kind).  Acceptance uses the Gaussian proposal
    densities in both directions; the eps_l-only normalization cancels,
    the log|G| halves do not.
    """
    ctx0 = _metric_context_from_state(m, state)
    d = state.theta.shape[0]
    z = rng.standard_normal(d)
    mu0 = state.theta + eps_l * m.langevin_drift(ctx0)
    prop = mu0 + math.sqrt(eps_l) * m.sqrt_inv_metric_times(ctx0, z)
    try:
        ctx1 = m.context(prop)
    except STEP_FAILURES:
        info = IterationInfo(False, -state.log_pi, 1, 0.0, step_failed=True)
        return state, info
    mu1 = prop + eps_l * m.langevin_drift(ctx1)
    diff_fwd = prop - mu0
    diff_rev = state.theta - mu1
    log_q_fwd = -0.5 / eps_l * m.quad_form_metric(ctx0, diff_fwd) + 0.5 * (
        m.log_det_metric(ctx0.log_pi)
    )
    log_q_rev = -0.5 / eps_l * m.quad_form_metric(ctx1, diff_rev) + 0.5 * (
        m.log_det_metric(ctx1.log_pi)
    )
    log_r = (ctx1.log_pi - ctx0.log_pi) + (log_q_rev - log_q_fwd)
    if math.isnan(log_r):
        log_r = -math.inf
    accepted = bool(math.log(rng.uniform()) < log_r)
    stat = min(1.0, math.exp(min(log_r, 0.0)))
    if accepted:
        state = SamplerState(ctx1.theta, ctx1.log_pi, ctx1.grad_log_pi)
    info = IterationInfo(accepted, -state.log_pi, 1, stat)
    return state, info


# ---------------------------------------------------------------------------
# kernels


class _KernelBase:
    kernel_name = "base"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _resolve_metric(metric: TemperedMetric, rng) -> TemperedMetric:
    if isinstance(metric, DirectionalMetric) and metric.random_direction:
        return metric.resolve_direction(rng)
    return metric


@dataclasses.dataclass(frozen=True)
class HmcKernel(_KernelBase):
    target: TargetDistribution
    epsilon: float
    n_steps: int
    kernel_name = "hmc"

    def init_state(self, theta) -> SamplerState:
        return initial_state(self.target, theta)

    def step(self, state, rng):
        return hmc_iteration(self.target, self.epsilon, self.n_steps, state, rng)


@dataclasses.dataclass(frozen=True)
class NutsKernel(_KernelBase):
    target: TargetDistribution
    epsilon: float
    max_depth: int = 10
    kernel_name = "nuts"

    def init_state(self, theta) -> SamplerState:
        return initial_state(self.target, theta)

    def step(self, state, rng):
        return nuts_iteration(
            self.target, self.epsilon, state, rng, max_depth=self.max_depth
        )


@dataclasses.dataclass(frozen=True)
class ChmcKernel(_KernelBase):
    metric: TemperedMetric
    epsilon: float
    n_steps: int
    kernel_name = "chmc"

    @property
    def target(self):
        return self.metric.target

    def init_state(self, theta) -> SamplerState:
        return initial_state(self.target, theta)

    def step(self, state, rng):
        m = _resolve_metric(self.metric, rng)
        return chmc_iteration(m, self.epsilon, self.n_steps, state, rng)


@dataclasses.dataclass(frozen=True)
class VltChmcKernel(_KernelBase):
    metric: TemperedMetric
    epsilon: float
    tau: float
    n_max: int = DEFAULT_N_MAX
    debug: bool = False
    kernel_name = "vlt-chmc"

    @property
    def target(self):
        return self.metric.target

    def init_state(self, theta) -> SamplerState:
        return initial_state(self.target, theta)

    def step(self, state, rng):
        m = _resolve_metric(self.metric, rng)
        return vlt_chmc_iteration(
            m, self.epsilon, self.tau, state, rng, n_max=self.n_max, debug=self.debug
        )


@dataclasses.dataclass(frozen=True)
class MmalaKernel(_KernelBase):
    metric: TemperedMetric
    epsilon: float
    kernel_name = "mmala"

    @property
    def target(self):
        return self.metric.target

    def init_state(self, theta) -> SamplerState:
        return initial_state(self.target, theta)

    def step(self, state, rng):
        m = _resolve_metric(self.metric, rng)
        return mmala_iteration(m, self.epsilon, state, rng)


def run_chain(kernel, theta0, n_samples: int, burn_in: int = 0, seed: int = 0):
    """Run one chain and record the post-burn-in samples.

    The Generator is seeded with ``seed`` alone; identical kernel, seed and
    starting point reproduce the record bit for bit.
    """
    rng = np.random.default_rng(seed)
    state = kernel.init_state(np.asarray(theta0, dtype=float))
    for _ in range(burn_in):
        state, _ = kernel.step(state, rng)
    record = ChainRecord(kernel.kernel_name, seed)
    for _ in range(n_samples):
        state, info = kernel.step(state, rng)
        record.append(state.theta, info.accepted, info.energy, info.grad_evals)
    return record


def velocity_with_kinetic_energy(m: TemperedMetric, ctx, k0: float, direction):
    """Velocity along ``direction`` carrying kinetic energy exactly k0."""
    w = np.asarray(direction, dtype=float)
    base = m.kinetic_v(ctx, w)
    if base <= 0:
        raise ValueError("direction must be nonzero")
    return math.sqrt(k0 / base) * w

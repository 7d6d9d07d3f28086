"""Step-size and path-length tuning.

Step size follows the dual-averaging scheme of Nesterov-style primal
averaging as used throughout the HMC literature: the controlled statistic
is acceptance probability for HMC/NUTS/MMALA and an accuracy proxy
exp(-|log acceptance ratio|) for the tempered kernels, whose acceptance
ratio mixes energy error with the integrator Jacobian.

Path length tau (or, for fixed-step kernels, n_steps = round(tau /
epsilon)) is picked from a grid by normalized expected squared jumping
distance: mean squared displacement per recorded iteration divided by mean
gradient evaluations per iteration, so longer trajectories pay their cost.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConfigError
from .samplers import spawn_chain_seeds


@dataclasses.dataclass(frozen=True)
class DualAveragingState:
    """State of the step-size controller.

    ``log_eps`` is the value used on the next iteration; ``log_eps_bar``
    the averaged value to freeze after adaptation; ``h_bar`` the running
    average of (delta - observed_stat); ``mu`` the anchor point, the log of
    the initial step size.
    """

    log_eps: float
    log_eps_bar: float
    h_bar: float
    m: int
    delta: float
    mu: float
    gamma_da: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def start(cls, eps0: float, delta: float, **hyper) -> "DualAveragingState":
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if eps0 <= 0:
            raise ValueError("eps0 must be positive")
        log_eps0 = math.log(eps0)
        return cls(
            log_eps=log_eps0,
            log_eps_bar=log_eps0,
            h_bar=0.0,
            m=0,
            delta=delta,
            mu=log_eps0,
            **hyper,
        )

    @property
    def epsilon(self) -> float:
        return math.exp(self.log_eps)

    @property
    def epsilon_bar(self) -> float:
        return math.exp(self.log_eps_bar)


def dual_averaging_update(
    state: DualAveragingState, observed_stat: float
) -> DualAveragingState:
    """One controller update from the statistic of the latest transition."""
    if not 0.0 <= observed_stat <= 1.0:
        raise ValueError(f"observed_stat must lie in [0, 1], got {observed_stat}")
    m = state.m + 1
    frac = 1.0 / (m + state.t0)
    h_bar = (1.0 - frac) * state.h_bar + frac * (state.delta - observed_stat)
    log_eps = state.mu - math.sqrt(m) / state.gamma_da * h_bar
    w = m ** (-state.kappa)
    log_eps_bar = w * log_eps + (1.0 - w) * state.log_eps_bar
    return dataclasses.replace(
        state, log_eps=log_eps, log_eps_bar=log_eps_bar, h_bar=h_bar, m=m
    )


def tune_step_size(kernel, theta0, adapt_iters: int, delta: float, seed: int = 0):
    """Dual-average the kernel's step size along a warm adaptation chain.

    Returns (tuned_kernel, controller_state, last_sampler_state); the tuned
    kernel carries exp(log_eps_bar).
    """
    if adapt_iters < 1:
        raise ValueError("adapt_iters must be >= 1")
    rng = np.random.default_rng(seed)
    state = kernel.init_state(np.asarray(theta0, dtype=float))
    da = DualAveragingState.start(kernel.epsilon, delta)
    for _ in range(adapt_iters):
        current = kernel.replace(epsilon=da.epsilon)
        state, info = current.step(state, rng)
        da = dual_averaging_update(da, info.stat)
    return kernel.replace(epsilon=da.epsilon_bar), da, state


def esjd_score(samples: np.ndarray, grad_eval_total: int) -> float:
    """Mean squared jump per iteration, normalized by mean gradient cost."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n < 2:
        return 0.0
    if grad_eval_total <= 0:
        raise ValueError("grad_eval_total must be positive")
    jumps = np.diff(samples, axis=0)
    mean_jump_sq = float(np.mean(np.sum(jumps * jumps, axis=1)))
    mean_grads = grad_eval_total / n
    return mean_jump_sq / mean_grads


def _kernel_with_path_length(kernel, tau: float):
    """The kernel with trajectory length tau, in whichever parameter it has."""
    if hasattr(kernel, "tau"):
        return kernel.replace(tau=tau)
    if hasattr(kernel, "n_steps"):
        n_steps = max(1, round(tau / kernel.epsilon))
        return kernel.replace(n_steps=n_steps)
    raise ConfigError(
        f"kernel {kernel.kernel_name!r} has no path-length parameter to tune"
    )


def esjd_pathlength_search(
    kernel,
    tau_grid,
    pilot_iters: int,
    theta0,
    seed: int = 0,
    return_scores: bool = False,
):
    """Pick the trajectory length maximizing normalized squared jumps.

    Runs one pilot chain per grid value from the same start and seed, so
    grid entries compete on identical randomness.  Ties resolve to the
    smaller tau (first maximum of the ascending grid).
    """
    tau_grid = [float(t) for t in tau_grid]
    if not tau_grid:
        raise ValueError("tau_grid must be nonempty")
    if sorted(tau_grid) != tau_grid:
        raise ValueError("tau_grid must be ascending")
    theta0 = np.asarray(theta0, dtype=float)
    scores = []
    for tau in tau_grid:
        trial = _kernel_with_path_length(kernel, tau)
        rng = np.random.default_rng(seed)
        state = trial.init_state(theta0)
        thetas = np.empty((pilot_iters + 1, theta0.shape[0]))
        thetas[0] = state.theta
        grads = 0
        for i in range(pilot_iters):
            state, info = trial.step(state, rng)
            thetas[i + 1] = state.theta
            grads += info.grad_evals
        scores.append(esjd_score(thetas, grads) if grads > 0 else 0.0)
    best = int(np.argmax(scores))  # argmax takes the first of equal scores
    if return_scores:
        return tau_grid[best], scores
    return tau_grid[best]


def default_tau_grid(tau_lo: float, tau_hi: float, n: int = 8):
    """Log-spaced trajectory-length grid."""
    if not (0 < tau_lo < tau_hi):
        raise ValueError("need 0 < tau_lo < tau_hi")
    return list(np.geomspace(tau_lo, tau_hi, n))


def alternate_tune(
    kernel,
    theta0,
    adapt_iters: int,
    delta: float,
    tau_grid=None,
    pilot_iters: int = 200,
    rounds: int = 3,
    seed: int = 0,
):
    """Alternate step-size and path-length passes a few times.

    Each round dual-averages epsilon with the path length held fixed, then
    re-selects the path length with epsilon held fixed.  Kernels without a
    path-length parameter only get the epsilon passes.  Returns
    (eps_star, tau_star, tuned_kernel); tau_star is None for kernels with
    no path length.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    theta0 = np.asarray(theta0, dtype=float)
    has_path = hasattr(kernel, "tau") or hasattr(kernel, "n_steps")
    phase_seeds = spawn_chain_seeds(seed, 2 * rounds)
    tau_star = None
    start = theta0
    for r in range(rounds):
        kernel, _, state = tune_step_size(
            kernel, start, adapt_iters, delta, seed=phase_seeds[2 * r]
        )
        start = state.theta
        if has_path and tau_grid is not None:
            tau_star = esjd_pathlength_search(
                kernel, tau_grid, pilot_iters, start, seed=phase_seeds[2 * r + 1]
            )
            kernel = _kernel_with_path_length(kernel, tau_star)
    return kernel.epsilon, tau_star, kernel

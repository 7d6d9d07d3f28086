"""Tempered position-dependent metrics.

A tempered metric ties the mass matrix G(theta) to the target density through
the volume constraint |G(theta)|^(1/2) = pi(theta)^(1 - 1/T) (proportionality
constant fixed to 1, so T = 1 gives exactly the identity).  Two families are
implemented besides the identity:

* isometric: G = g(theta) I with g = pi^((2/d)(1 - 1/T));
* directional: G = g_par u u^T + g_perp (I - u u^T) with
  g_par = pi^(2 gamma (1 - 1/T)) and g_perp = pi^(2 (1-gamma)/(d-1) (1 - 1/T)).

All scalar fields are held in log space; exponents like 2 gamma (1 - 1/T)
log pi reach hundreds in the tails and would over- or underflow otherwise.

Each metric also provides the pieces the adaptive integrator needs: the
time-rescaling factor eta, the drift eta^2 G^{-1} grad(phi), and the
linearly implicit half-kick system (I - h v^T Gamma) as a rank-structured
perturbation of the identity, solved and log-determinant-ed in O(d) via the
Woodbury identity and the matrix determinant lemma.
"""

from __future__ import annotations

import abc
import dataclasses
import math

import numpy as np

from .errors import IntegrationStepError, TemperingSingularityError
from .targets import TargetDistribution

# Threshold on Woodbury denominators below which the half-kick system is
# treated as singular and the step fails (sampler rejects).
SINGULAR_TOL = 1e-12

# Largest exponent fed to exp() before the metric scale is declared
# unrepresentable; just under the float64 overflow threshold.
_EXP_MAX = 700.0


def _exp_checked(x: float) -> float:
    """exp(x), with the overflow regime mapped to a tempering failure.

    Underflow to 0.0 is harmless; overflow means the tempered metric has no
    double-precision representation at this point, which every sampler
    treats as a rejected step.
    """
    if x > _EXP_MAX:
        raise TemperingSingularityError(
            f"tempered metric scale exp({x:.3g}) overflows"
        )
    return math.exp(x)


@dataclasses.dataclass(frozen=True)
class MetricScalars:
    """Log-space scalar fields defining G at one position."""

    log_pi: float
    log_g: float | None = None
    log_g_par: float | None = None
    log_g_perp: float | None = None


@dataclasses.dataclass(frozen=True)
class PhaseState:
    """Position plus conjugate variable, tagged with its representation.

    The conjugate is either the momentum p or the velocity v = eta G^{-1} p.
    """

    theta: np.ndarray
    conjugate: np.ndarray
    representation: str  # "momentum" | "velocity"

    def to_velocity(self, metric: "TemperedMetric") -> "PhaseState":
        if self.representation == "velocity":
            return self
        v = metric.momentum_to_velocity(self.theta, self.conjugate)
        return PhaseState(self.theta, v, "velocity")

    def to_momentum(self, metric: "TemperedMetric") -> "PhaseState":
        if self.representation == "momentum":
            return self
        p = metric.velocity_to_momentum(self.theta, self.conjugate)
        return PhaseState(self.theta, p, "momentum")


@dataclasses.dataclass(frozen=True)
class MetricContext:
    """Everything position-dependent that one integrator step consumes.

    Built once per position so the target is evaluated a single time.
    ``drift`` is eta^2 G^{-1} grad(phi) with phi = -(1/T) log pi; the
    half-kick right-hand side is v - h * drift.
    """

    theta: np.ndarray
    log_pi: float
    grad_log_pi: np.ndarray
    log_eta: float
    eta: float
    drift: np.ndarray


@dataclasses.dataclass(frozen=True)
class IsoContext(MetricContext):
    s: np.ndarray = None  # grad log g


@dataclasses.dataclass(frozen=True)
class DirContext(MetricContext):
    s: np.ndarray = None  # grad log g_par
    u: np.ndarray = None
    u_dot_s: float = 0.0
    # g_perp / g_par and its reciprocal; may overflow to inf in extreme
    # tails, which downstream finiteness checks convert into step failures
    r_perp_par: float = 1.0
    r_par_perp: float = 1.0


def _finite_log_pi(log_pi: float, theta) -> float:
    if not math.isfinite(log_pi):
        raise TemperingSingularityError(
            f"log density not finite at theta={np.asarray(theta)!r}"
        )
    return log_pi


class TemperedMetric(abc.ABC):
    """Common interface of the metric family.

    Instances are immutable and safe to share; every operation is a pure
    function of (theta, v, eps).
    """

    kind: str
    target: TargetDistribution
    temperature: float

    @property
    def dim(self) -> int:
        return self.target.dim

    # -- scalar fields -----------------------------------------------------

    @abc.abstractmethod
    def metric_scalars(self, theta) -> MetricScalars:
        """Log-space scalars of G at ``theta`` plus log pi(theta)."""

    @abc.abstractmethod
    def log_eta_from_log_pi(self, log_pi: float) -> float:
        ...

    def eta(self, theta) -> float:
        """Time-rescaling factor eta(theta)."""
        log_pi = _finite_log_pi(self.target.log_density(theta), theta)
        return math.exp(self.log_eta_from_log_pi(log_pi))

    def log_det_metric(self, log_pi: float) -> float:
        """log |G| from the volume constraint, valid for every kind."""
        return 2.0 * (1.0 - 1.0 / self.temperature) * log_pi

    def psi(self, log_pi: float) -> float:
        """Gauge term log |G| - d log eta.

        This converts phase-space densities between the momentum and the
        velocity representation; it enters the compressible acceptance
        ratio as psi(theta_1) - psi(theta_0).
        """
        return self.log_det_metric(log_pi) - self.dim * self.log_eta_from_log_pi(
            log_pi
        )

    def potential(self, log_pi: float) -> float:
        """Effective potential -(1/T) log pi under the volume constraint."""
        return -log_pi / self.temperature

    # -- context construction ---------------------------------------------

    def context(self, theta, log_pi=None, grad_log_pi=None) -> MetricContext:
        """Evaluate the target once and package all per-position quantities."""
        theta = np.asarray(theta, dtype=float)
        if log_pi is None:
            log_pi, grad_log_pi = self.target.log_density_and_grad(theta)
        _finite_log_pi(log_pi, theta)
        return self._make_context(theta, log_pi, grad_log_pi)

    @abc.abstractmethod
    def _make_context(self, theta, log_pi, grad_log_pi) -> MetricContext:
        ...

    # -- momentum and velocity --------------------------------------------

    @abc.abstractmethod
    def sample_momentum(self, theta, rng: np.random.Generator) -> np.ndarray:
        """Draw p ~ N(0, G(theta))."""

    @abc.abstractmethod
    def kinetic_energy(self, theta, p) -> float:
        """K = p^T G^{-1}(theta) p / 2."""

    @abc.abstractmethod
    def kinetic_v(self, ctx: MetricContext, v) -> float:
        """Kinetic energy evaluated in the velocity representation."""

    @abc.abstractmethod
    def velocity_from_standard_normal(self, ctx: MetricContext, z) -> np.ndarray:
        """Map a standard normal draw z to v = eta G^{-1} G^{1/2} z.

        Composing the momentum refresh with the change to velocity in one
        step avoids forming the (possibly extreme) momentum vector.
        """

    @abc.abstractmethod
    def momentum_to_velocity(self, theta, p) -> np.ndarray:
        ...

    @abc.abstractmethod
    def velocity_to_momentum(self, theta, v) -> np.ndarray:
        ...

    # -- half-kick linear algebra -----------------------------------------

    @abc.abstractmethod
    def _kahan_columns(self, ctx: MetricContext, v, h: float):
        """Decompose I - h v^T Gamma(theta) as alpha I + U V^T.

        Returns (alpha, U, V) with U, V of shape (d, k), k <= 3.
        """

    def _solve_half(self, ctx, v, h, rhs) -> np.ndarray:
        alpha, U, V = self._kahan_columns(ctx, v, h)
        return _woodbury_solve(alpha, U, V, rhs)

    def _logdet_half(self, ctx, v, h) -> float:
        alpha, U, V = self._kahan_columns(ctx, v, h)
        return _woodbury_logdet(alpha, U, V, self.dim)

    def half_kick(self, ctx, v, h) -> tuple[np.ndarray, float]:
        """One linearly implicit half-kick of size h at ``ctx``.

        Solves (I - h v^T Gamma) v_out = v - h drift and returns v_out with
        the log-Jacobian log|det dv_out/dv| of the update.
        """
        rhs = v - h * ctx.drift
        cols_in = self._kahan_columns(ctx, v, h)
        v_out, logdet_in = _woodbury_solve_logdet(*cols_in, rhs, self.dim)
        cols_out = self._kahan_columns(ctx, v_out, -h)
        log_det = _woodbury_logdet(*cols_out, self.dim) - logdet_in
        return v_out, log_det

    def solve_kahan_system(self, theta, v, eps, rhs) -> np.ndarray:
        """Solve (I - (eps/2) v^T Gamma(theta)) x = rhs."""
        ctx = self.context(theta)
        return self._solve_half(ctx, np.asarray(v, dtype=float), eps / 2.0, rhs)

    def kahan_system_log_det(self, theta, v, v_star, eps) -> float:
        """log |det dv*/dv| of the half-kick with incoming v, outgoing v*.

        Equal to log|det(I + (eps/2) v*^T Gamma)| - log|det(I - (eps/2) v^T
        Gamma)| by the implicit function theorem.
        """
        ctx = self.context(theta)
        h = eps / 2.0
        return self._logdet_half(ctx, np.asarray(v_star, dtype=float), -h) - (
            self._logdet_half(ctx, np.asarray(v, dtype=float), h)
        )

    # -- dense test oracles ------------------------------------------------

    @abc.abstractmethod
    def metric_matrix(self, theta) -> np.ndarray:
        """Densely assembled G(theta); test oracle, O(d^2)."""

    @abc.abstractmethod
    def _metric_matrix_derivative(self, ctx) -> np.ndarray:
        """dG/dtheta as an array of shape (d, d, d); dG[m] = dG/dtheta_m."""

    @abc.abstractmethod
    def _dlog_eta(self, ctx) -> np.ndarray:
        ...

    def dense_gamma(self, theta) -> np.ndarray:
        """Symmetrized Christoffel-like matrices, shape (d, d, d).

        Assembled from the analytic dG/dtheta and d(log eta)/dtheta; the
        quadratic form v^T Gamma^k v drives the velocity dynamics.  Small-d
        test oracle for the rank-structured fast paths.
        """
        ctx = self.context(theta)
        d = self.dim
        G = self.metric_matrix(theta)
        G_inv = np.linalg.inv(G)
        dG = self._metric_matrix_derivative(ctx)
        dlogeta = self._dlog_eta(ctx)
        pre = 0.5 * np.einsum("km,mij->kij", G_inv, dG)
        pre -= np.einsum("km,imj->kij", G_inv, dG)
        for k in range(d):
            pre[k, :, k] += dlogeta
        return 0.5 * (pre + np.transpose(pre, (0, 2, 1)))

    # -- auxiliary Langevin pieces ----------------------------------------

    @abc.abstractmethod
    def langevin_drift(self, ctx) -> np.ndarray:
        """Drift of the reversible diffusion with covariance G^{-1}.

        b = G^{-1} grad log pi / 2 + div(G^{-1}) / 2, which keeps pi
        invariant; the divergence term is closed-form for each kind.
        """

    @abc.abstractmethod
    def sqrt_inv_metric_times(self, ctx, z) -> np.ndarray:
        """G^{-1/2}(theta) z."""

    @abc.abstractmethod
    def quad_form_metric(self, ctx, x) -> float:
        """x^T G(theta) x."""


def _core_and_det(alpha, U, V):
    """Core matrix alpha I_k + V^T U and its determinant, k <= 3.

    Closed-form determinants: LAPACK dispatch dominates the cost of these
    tiny systems inside the integrator loop.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        small = V.T @ U
    k = small.shape[0]
    small.flat[:: k + 1] += alpha
    # cofactor arithmetic on Python floats: overflow turns into inf without
    # numpy warnings and fails the finiteness check below
    if k == 1:
        det = float(small[0, 0])
    elif k == 2:
        a, b, c, d = small.ravel().tolist()
        det = a * d - b * c
    elif k == 3:
        a, b, c, d, e, f, g, h, i = small.ravel().tolist()
        det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    else:
        det = float(np.linalg.det(small))
    if not math.isfinite(det) or abs(det) < SINGULAR_TOL:
        raise IntegrationStepError("singular half-kick system (core determinant)")
    return small, det


def _solve_small(m, b, det):
    """Solve the k x k core system by Cramer's rule, k <= 3."""
    k = m.shape[0]
    if k == 1:
        return b / det
    if k == 2:
        return np.array(
            [
                (m[1, 1] * b[0] - m[0, 1] * b[1]) / det,
                (m[0, 0] * b[1] - m[1, 0] * b[0]) / det,
            ]
        )
    if k == 3:
        x0 = (
            b[0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (b[1] * m[2, 2] - m[1, 2] * b[2])
            + m[0, 2] * (b[1] * m[2, 1] - m[1, 1] * b[2])
        )
        x1 = (
            m[0, 0] * (b[1] * m[2, 2] - m[1, 2] * b[2])
            - b[0] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * b[2] - b[1] * m[2, 0])
        )
        x2 = (
            m[0, 0] * (m[1, 1] * b[2] - b[1] * m[2, 1])
            - m[0, 1] * (m[1, 0] * b[2] - b[1] * m[2, 0])
            + b[0] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )
        return np.array([x0 / det, x1 / det, x2 / det])
    return np.linalg.solve(m, b)


def _check_alpha(alpha):
    if not math.isfinite(alpha) or abs(alpha) < SINGULAR_TOL:
        raise IntegrationStepError("singular half-kick system (alpha)")


def _woodbury_solve(alpha, U, V, rhs):
    """Solve (alpha I + U V^T) x = rhs with U, V of shape (d, k)."""
    _check_alpha(alpha)
    if U.shape[1] == 0:
        return rhs / alpha
    small, det = _core_and_det(alpha, U, V)
    z = _solve_small(small, V.T @ rhs, det)
    return (rhs - U @ z) / alpha


def _woodbury_logdet(alpha, U, V, d):
    """log |det(alpha I + U V^T)| via the matrix determinant lemma."""
    _check_alpha(alpha)
    k = U.shape[1]
    if k == 0:
        return d * math.log(abs(alpha))
    _, det = _core_and_det(alpha, U, V)
    return (d - k) * math.log(abs(alpha)) + math.log(abs(det))


def _woodbury_solve_logdet(alpha, U, V, rhs, d):
    """Solve and logdet of the same system, sharing one core factorization."""
    _check_alpha(alpha)
    k = U.shape[1]
    if k == 0:
        return rhs / alpha, d * math.log(abs(alpha))
    small, det = _core_and_det(alpha, U, V)
    z = _solve_small(small, V.T @ rhs, det)
    x = (rhs - U @ z) / alpha
    return x, (d - k) * math.log(abs(alpha)) + math.log(abs(det))


class IdentityMetric(TemperedMetric):
    """G = I.  Recovers plain HMC; the integrator reduces to leapfrog."""

    kind = "identity"

    def __init__(self, target: TargetDistribution):
        self.target = target
        self.temperature = 1.0

    def metric_scalars(self, theta) -> MetricScalars:
        log_pi = _finite_log_pi(self.target.log_density(theta), theta)
        return MetricScalars(log_pi=log_pi)

    def log_eta_from_log_pi(self, log_pi):
        return 0.0

    def _make_context(self, theta, log_pi, grad_log_pi):
        return MetricContext(
            theta=theta,
            log_pi=log_pi,
            grad_log_pi=grad_log_pi,
            log_eta=0.0,
            eta=1.0,
            drift=-grad_log_pi,
        )

    def sample_momentum(self, theta, rng):
        return rng.standard_normal(self.dim)

    def kinetic_energy(self, theta, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * float(p @ p)

    def kinetic_v(self, ctx, v):
        return 0.5 * float(v @ v)

    def velocity_from_standard_normal(self, ctx, z):
        return z

    def momentum_to_velocity(self, theta, p):
        return np.asarray(p, dtype=float).copy()

    def velocity_to_momentum(self, theta, v):
        return np.asarray(v, dtype=float).copy()

    def _kahan_columns(self, ctx, v, h):
        return 1.0, np.empty((self.dim, 0)), np.empty((self.dim, 0))

    def _solve_half(self, ctx, v, h, rhs):
        return np.asarray(rhs, dtype=float)

    def _logdet_half(self, ctx, v, h):
        return 0.0

    def half_kick(self, ctx, v, h):
        return v - h * ctx.drift, 0.0

    def metric_matrix(self, theta):
        return np.eye(self.dim)

    def _metric_matrix_derivative(self, ctx):
        d = self.dim
        return np.zeros((d, d, d))

    def _dlog_eta(self, ctx):
        return np.zeros(self.dim)

    def langevin_drift(self, ctx):
        return 0.5 * ctx.grad_log_pi

    def sqrt_inv_metric_times(self, ctx, z):
        return z

    def quad_form_metric(self, ctx, x):
        x = np.asarray(x, dtype=float)
        return float(x @ x)


class IsometricMetric(TemperedMetric):
    """Conformal tempering G = g(theta) I, g = pi^((2/d)(1 - 1/T))."""

    kind = "isometric"

    def __init__(self, target: TargetDistribution, temperature: float):
        if temperature < 1.0:
            raise ValueError("temperature must be >= 1")
        self.target = target
        self.temperature = float(temperature)
        # exponent of log g in log pi
        self._a = (2.0 / target.dim) * (1.0 - 1.0 / self.temperature)

    def metric_scalars(self, theta) -> MetricScalars:
        log_pi = _finite_log_pi(self.target.log_density(theta), theta)
        return MetricScalars(log_pi=log_pi, log_g=self._a * log_pi)

    def log_eta_from_log_pi(self, log_pi):
        return 0.5 * self._a * log_pi

    def _make_context(self, theta, log_pi, grad_log_pi):
        log_eta = 0.5 * self._a * log_pi
        # eta^2 G^{-1} grad(phi) = -(1/T) grad log pi: the conformal factor
        # cancels exactly against the time rescaling
        drift = (-1.0 / self.temperature) * grad_log_pi
        return IsoContext(
            theta=theta,
            log_pi=log_pi,
            grad_log_pi=grad_log_pi,
            log_eta=log_eta,
            eta=math.exp(log_eta),
            drift=drift,
            s=self._a * grad_log_pi,
        )

    def sample_momentum(self, theta, rng):
        scalars = self.metric_scalars(theta)
        return math.exp(0.5 * scalars.log_g) * rng.standard_normal(self.dim)

    def kinetic_energy(self, theta, p):
        scalars = self.metric_scalars(theta)
        p = np.asarray(p, dtype=float)
        return 0.5 * _exp_checked(-scalars.log_g) * float(p @ p)

    def kinetic_v(self, ctx, v):
        # v = eta G^{-1} p makes the velocity kinetic energy metric-free
        return 0.5 * float(v @ v)

    def velocity_from_standard_normal(self, ctx, z):
        return z

    def momentum_to_velocity(self, theta, p):
        scalars = self.metric_scalars(theta)
        return math.exp(-0.5 * scalars.log_g) * np.asarray(p, dtype=float)

    def velocity_to_momentum(self, theta, v):
        scalars = self.metric_scalars(theta)
        return math.exp(0.5 * scalars.log_g) * np.asarray(v, dtype=float)

    def _kahan_columns(self, ctx, v, h):
        s = ctx.s
        alpha = 1.0 + 0.25 * h * float(v @ s)
        U = np.empty((s.shape[0], 2))
        U[:, 0] = (-0.5 * h) * s
        U[:, 1] = (0.25 * h) * v
        V = np.empty_like(U)
        V[:, 0] = v
        V[:, 1] = s
        return alpha, U, V

    def metric_matrix(self, theta):
        scalars = self.metric_scalars(theta)
        return math.exp(scalars.log_g) * np.eye(self.dim)

    def _metric_matrix_derivative(self, ctx):
        g = math.exp(self._a * ctx.log_pi)
        d = self.dim
        dG = np.zeros((d, d, d))
        for m in range(d):
            dG[m] = g * ctx.s[m] * np.eye(d)
        return dG

    def _dlog_eta(self, ctx):
        return 0.5 * ctx.s

    def langevin_drift(self, ctx):
        inv_g = _exp_checked(-self._a * ctx.log_pi)
        return 0.5 * (1.0 - self._a) * inv_g * ctx.grad_log_pi

    def sqrt_inv_metric_times(self, ctx, z):
        return _exp_checked(-0.5 * self._a * ctx.log_pi) * z

    def quad_form_metric(self, ctx, x):
        x = np.asarray(x, dtype=float)
        return math.exp(self._a * ctx.log_pi) * float(x @ x)


class DirectionalMetric(TemperedMetric):
    """Tempering concentrated along a unit direction u.

    G = g_par u u^T + g_perp (I - u u^T); gamma in [1/d, 1] interpolates
    between the isometric metric (gamma = 1/d, where g_par = g_perp) and
    distance distortion purely along u (gamma = 1, where g_perp = 1).

    ``u`` may be a fixed vector or redrawn uniformly each iteration through
    :meth:`resolve_direction`.
    """

    kind = "directional"

    def __init__(
        self,
        target: TargetDistribution,
        temperature: float,
        gamma: float,
        u=None,
        random_direction: bool = False,
    ):
        d = target.dim
        if temperature < 1.0:
            raise ValueError("temperature must be >= 1")
        if not (1.0 / d <= gamma <= 1.0):
            raise ValueError(f"gamma must lie in [1/d, 1], got {gamma}")
        if d < 2:
            raise ValueError("directional metric needs dim >= 2")
        self.target = target
        self.temperature = float(temperature)
        self.gamma = float(gamma)
        self.random_direction = bool(random_direction)
        if u is None:
            if not random_direction:
                raise ValueError("u required unless random_direction is set")
            u = np.zeros(d)
            u[0] = 1.0
        u = np.asarray(u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("u must be a unit vector")
        self.u = u
        tfac = 1.0 - 1.0 / self.temperature
        self._a_par = 2.0 * gamma * tfac
        self._a_perp = 2.0 * (1.0 - gamma) / (d - 1.0) * tfac
        # log g_perp = c log g_par
        self._c = (1.0 - gamma) / (gamma * (d - 1.0)) if tfac != 0.0 else 0.0

    def with_direction(self, u) -> "DirectionalMetric":
        return DirectionalMetric(
            self.target,
            self.temperature,
            self.gamma,
            u=u,
            random_direction=self.random_direction,
        )

    def resolve_direction(self, rng: np.random.Generator) -> "DirectionalMetric":
        """The per-iteration metric: self, or a copy with a fresh random u."""
        if not self.random_direction:
            return self
        z = rng.standard_normal(self.dim)
        return self.with_direction(z / np.linalg.norm(z))

    def metric_scalars(self, theta) -> MetricScalars:
        log_pi = _finite_log_pi(self.target.log_density(theta), theta)
        return MetricScalars(
            log_pi=log_pi,
            log_g_par=self._a_par * log_pi,
            log_g_perp=self._a_perp * log_pi,
        )

    def log_eta_from_log_pi(self, log_pi):
        return 0.5 * self._a_par * log_pi

    def _make_context(self, theta, log_pi, grad_log_pi):
        u = self.u
        log_eta = 0.5 * self._a_par * log_pi
        spread = (self._a_par - self._a_perp) * log_pi
        r_par_perp = _exp_checked(spread)
        r_perp_par = _exp_checked(-spread)
        u_dot_grad = float(u @ grad_log_pi)
        # eta^2 G^{-1} grad(phi): the parallel part cancels, the orthogonal
        # part keeps the ratio g_par / g_perp
        drift = (-1.0 / self.temperature) * (
            u_dot_grad * u + r_par_perp * (grad_log_pi - u_dot_grad * u)
        )
        s = self._a_par * grad_log_pi
        return DirContext(
            theta=theta,
            log_pi=log_pi,
            grad_log_pi=grad_log_pi,
            log_eta=log_eta,
            eta=math.exp(log_eta),
            drift=drift,
            s=s,
            u=u,
            u_dot_s=self._a_par * u_dot_grad,
            r_perp_par=r_perp_par,
            r_par_perp=r_par_perp,
        )

    def sample_momentum(self, theta, rng):
        scalars = self.metric_scalars(theta)
        z = rng.standard_normal(self.dim)
        uz = float(self.u @ z)
        return math.exp(0.5 * scalars.log_g_par) * uz * self.u + math.exp(
            0.5 * scalars.log_g_perp
        ) * (z - uz * self.u)

    def kinetic_energy(self, theta, p):
        scalars = self.metric_scalars(theta)
        p = np.asarray(p, dtype=float)
        up = float(self.u @ p)
        p_perp = p - up * self.u
        return 0.5 * (
            _exp_checked(-scalars.log_g_par) * up * up
            + _exp_checked(-scalars.log_g_perp) * float(p_perp @ p_perp)
        )

    def kinetic_v(self, ctx: DirContext, v):
        uv = float(ctx.u @ v)
        v_perp = v - uv * ctx.u
        return 0.5 * (uv * uv + ctx.r_perp_par * float(v_perp @ v_perp))

    def velocity_from_standard_normal(self, ctx: DirContext, z):
        uz = float(ctx.u @ z)
        scale = math.sqrt(ctx.r_par_perp)
        return uz * ctx.u + scale * (z - uz * ctx.u)

    def momentum_to_velocity(self, theta, p):
        scalars = self.metric_scalars(theta)
        p = np.asarray(p, dtype=float)
        up = float(self.u @ p)
        return _exp_checked(-0.5 * scalars.log_g_par) * up * self.u + _exp_checked(
            0.5 * scalars.log_g_par - scalars.log_g_perp
        ) * (p - up * self.u)

    def velocity_to_momentum(self, theta, v):
        scalars = self.metric_scalars(theta)
        v = np.asarray(v, dtype=float)
        uv = float(self.u @ v)
        return _exp_checked(0.5 * scalars.log_g_par) * uv * self.u + _exp_checked(
            scalars.log_g_perp - 0.5 * scalars.log_g_par
        ) * (v - uv * self.u)

    def _kahan_columns(self, ctx: DirContext, v, h):
        """Rank-3 decomposition of I - h v^T Gamma.

        Derived by contracting the symmetrized assembly against v; the
        three outer products pair
          (g_perp G^{-1} s)  with  (g_perp^{-1} M_A v),
          u                  with  u,
          a v/u combination  with  s,
        where M_A = c g_perp I + (g_par - c g_perp) u u^T and the scalar
        prefactors fold the g ratios so no bare g factor appears.
        """
        u, s, c = ctx.u, ctx.s, self._c
        v = np.asarray(v, dtype=float)
        v_dot_s = float(v @ s)
        u_dot_v = float(u @ v)
        u_dot_s = ctx.u_dot_s
        alpha = 1.0 - 0.25 * h * (1.0 - 2.0 * c) * v_dot_s
        U = np.empty((u.shape[0], 3))
        U[:, 0] = (-0.5 * h) * (s + (ctx.r_perp_par - 1.0) * u_dot_s * u)
        U[:, 1] = (0.5 * h * (1.0 - c) * v_dot_s) * u
        U[:, 2] = (-0.25 * h * (1.0 - 2.0 * c)) * v + (0.5 * h * (1.0 - c) * u_dot_v) * u
        V = np.empty_like(U)
        V[:, 0] = c * v + (ctx.r_par_perp - c) * u_dot_v * u
        V[:, 1] = u
        V[:, 2] = s
        return alpha, U, V

    def metric_matrix(self, theta):
        scalars = self.metric_scalars(theta)
        g_par = math.exp(scalars.log_g_par)
        g_perp = math.exp(scalars.log_g_perp)
        uuT = np.outer(self.u, self.u)
        return g_par * uuT + g_perp * (np.eye(self.dim) - uuT)

    def _metric_matrix_derivative(self, ctx: DirContext):
        d = self.dim
        g_par = math.exp(self._a_par * ctx.log_pi)
        g_perp = math.exp(self._a_perp * ctx.log_pi)
        uuT = np.outer(ctx.u, ctx.u)
        P_perp = np.eye(d) - uuT
        base = g_par * uuT + self._c * g_perp * P_perp
        dG = np.zeros((d, d, d))
        for m in range(d):
            dG[m] = ctx.s[m] * base
        return dG

    def _dlog_eta(self, ctx):
        return 0.5 * ctx.s

    def langevin_drift(self, ctx: DirContext):
        u = ctx.u
        u_dot_grad = float(u @ ctx.grad_log_pi)
        grad_perp = ctx.grad_log_pi - u_dot_grad * u
        inv_g_par = _exp_checked(-self._a_par * ctx.log_pi)
        inv_g_perp = _exp_checked(-self._a_perp * ctx.log_pi)
        return 0.5 * (
            (1.0 - self._a_par) * inv_g_par * u_dot_grad * u
            + (1.0 - self._a_perp) * inv_g_perp * grad_perp
        )

    def sqrt_inv_metric_times(self, ctx: DirContext, z):
        uz = float(ctx.u @ z)
        return _exp_checked(-0.5 * self._a_par * ctx.log_pi) * uz * ctx.u + (
            _exp_checked(-0.5 * self._a_perp * ctx.log_pi) * (z - uz * ctx.u)
        )

    def quad_form_metric(self, ctx: DirContext, x):
        x = np.asarray(x, dtype=float)
        ux = float(ctx.u @ x)
        x_perp = x - ux * ctx.u
        return math.exp(self._a_par * ctx.log_pi) * ux * ux + math.exp(
            self._a_perp * ctx.log_pi
        ) * float(x_perp @ x_perp)


def make_metric(
    kind: str,
    target: TargetDistribution,
    temperature: float = 1.0,
    gamma: float | None = None,
    u=None,
    random_direction: bool = False,
) -> TemperedMetric:
    """Build a metric from its configuration key."""
    if kind == "identity":
        return IdentityMetric(target)
    if kind == "isometric":
        return IsometricMetric(target, temperature)
    if kind == "directional":
        if gamma is None:
            raise ValueError("directional metric requires gamma")
        return DirectionalMetric(
            target, temperature, gamma, u=u, random_direction=random_direction
        )
    raise ValueError(f"unknown metric kind {kind!r}")

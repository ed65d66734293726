"""
Toda flows and the Toda lattice
===============================

Flows T' = [T, Pi_a g(T)] of the Toda hierarchy in three forms:
    - chart-exact: beta_i(t) = exp((g(l^pi_(i+1)) - g(l^pi_i)) t) beta_i(0)
    - factorized: T(t) = Q(exp(t g(T0)))^T T0 Q(exp(t g(T0)))
    - RK4 on the Lax equation (oracle)

plus the Flaschka change of variables to the non-periodic Toda lattice with
Hamiltonian H = sum y_k^2 / 2 + sum exp(x_k - x_(k+1)), its RK4 integrator,
and the closed-form wave and scattering maps.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import config
from .charts import ChartPoint, NormingVector, Spectrum, psi
from .core_linalg import (
    Permutation,
    SymTridiagonal,
    apply_function,
    graded_spectral_q,
    sym_tridiag_eigen,
)
from .errors import DegenerateVelocities, FlowOverflow, NotJacobi, TailNotFree

logger = logging.getLogger(__name__)

SIDE_MINUS = "-"
SIDE_PLUS = "+"


# ============================================================================
# Domain types
# ============================================================================


def _sum_tol(values):
    return 1e-9 * (1.0 + float(np.abs(values).max(initial=0.0)))


@dataclass(frozen=True, eq=False)
class ParticleState:
    """Positions x and velocities y of the lattice, both summing to zero."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.size < 1 or x.size != y.size:
            raise ValueError(f"Positions and velocities need equal positive length: {x.size}, {y.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("Particle state has non-finite entries")
        if abs(x.sum()) > _sum_tol(x) or abs(y.sum()) > _sum_tol(y):
            raise ValueError(
                f"Positions and velocities must sum to zero (got {x.sum():.3e}, {y.sum():.3e})"
            )
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def centered(cls, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return cls(x - x.mean(), y - y.mean())

    @property
    def n(self):
        return self.x.size


@dataclass(frozen=True)
class FlowSpec:
    """A Toda-hierarchy flow: generator g evaluated on the spectrum, run for time t."""

    g: object
    t: float


@dataclass(frozen=True, eq=False)
class AsymptoticData:
    """
    Free motion x_k(t) ~ c_k t + d_k as t -> -inf (side "-") or +inf (side "+").

    c_k = -2 lambda_(pi(k)) with pi the identity for "-" and the reversal for
    "+", so c decreases on side "-" and increases on side "+".
    """

    c: np.ndarray
    d: np.ndarray
    side: str
    residual: float = 0.0

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        d = np.array(self.d, dtype=float).reshape(-1)
        if self.side not in (SIDE_MINUS, SIDE_PLUS):
            raise ValueError(f"Side must be '-' or '+', got {self.side!r}")
        if c.size != d.size or c.size < 1:
            raise ValueError("Velocities and phases need equal positive length")
        if abs(d.sum()) > _sum_tol(d):
            raise ValueError(f"Asymptotic phases must sum to zero, got {d.sum():.3e}")
        steps = np.diff(c)
        if self.side == SIDE_MINUS and np.any(steps >= 0.0):
            raise DegenerateVelocities(f"Velocities on side '-' must decrease: {c.tolist()}")
        if self.side == SIDE_PLUS and np.any(steps <= 0.0):
            raise DegenerateVelocities(f"Velocities on side '+' must increase: {c.tolist()}")
        c.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    def max_delta(self, other):
        """Largest difference over all c_k and d_k."""
        return float(max(np.abs(self.c - other.c).max(), np.abs(self.d - other.d).max()))


@dataclass(frozen=True)
class HamiltonianEnergy:
    value: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise ValueError(f"Toda energy must be positive, got {self.value}")


@dataclass(frozen=True, eq=False)
class ParticleTrajectory:
    """RK4 samples: times[k], x[k], y[k]."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def state(self, k):
        return ParticleState.centered(self.x[k], self.y[k])

    def energies(self):
        return np.array([_energy(x, y) for x, y in zip(self.x, self.y)])


# ============================================================================
# Flaschka transform and the lattice
# ============================================================================


def _forces(x):
    gaps = x[:-1] - x[1:]
    if gaps.size and gaps.max() > config.FORCE_EXP_LIMIT:
        raise FlowOverflow(f"x_k - x_(k+1) = {gaps.max():.1f} overflows exp")
    return np.exp(gaps)


def _energy(x, y):
    return float(0.5 * np.sum(y**2) + np.sum(_forces(x)))


def flaschka(p):
    """J_kk = -y_k / 2, J_(k,k+1) = exp((x_k - x_(k+1)) / 2) / 2."""
    gaps = p.x[:-1] - p.x[1:]
    if gaps.size and gaps.max() > config.FLASCHKA_EXP_LIMIT:
        raise FlowOverflow(f"x_k - x_(k+1) = {gaps.max():.1f} overflows exp")
    return SymTridiagonal(-0.5 * p.y, 0.5 * np.exp(0.5 * gaps))


def inverse_flaschka(J):
    """
    Particle state of a trace-zero Jacobi matrix.

    Raises:
        NotJacobi: an off-diagonal entry is not positive
    """
    if np.any(J.off <= 0.0):
        raise NotJacobi(f"Off-diagonal entries must be positive: {J.off.tolist()}")
    if abs(J.trace()) > config.scaled(1e-12, J.n * max(J.norm(), 1.0)):
        raise ValueError(f"Flaschka matrices have zero trace, got {J.trace():.3e}")
    y = -2.0 * J.diag
    gaps = 2.0 * np.log(2.0 * J.off)
    x = np.concatenate([[0.0], -np.cumsum(gaps)])
    return ParticleState.centered(x, y)


def hamiltonian(p):
    """H = sum y_k^2 / 2 + sum exp(x_k - x_(k+1)) = 2 tr(J^2)."""
    return HamiltonianEnergy(_energy(p.x, p.y))


def _particle_rhs(x, y):
    forces = _forces(x)
    dy = np.zeros_like(y)
    dy[1:] += forces
    dy[:-1] -= forces
    return y.copy(), dy


def hamiltonian_rhs(p):
    """x'_k = y_k, y'_k = exp(x_(k-1) - x_k) - exp(x_k - x_(k+1)), boundary terms 0."""
    return _particle_rhs(p.x, p.y)


def particle_rk4(p0, t_end, h=None):
    """
    Classical RK4 for the lattice from t = 0 to t_end (either sign).

    Returns:
        ParticleTrajectory

    Raises:
        FlowOverflow: a gap x_k - x_(k+1) beyond FORCE_EXP_LIMIT
    """
    if h is None:
        h = config.RK4_STEP
    steps = max(1, int(math.ceil(abs(t_end) / h - 1e-9)))
    dt = t_end / steps
    times = np.linspace(0.0, t_end, steps + 1)
    xs = np.empty((steps + 1, p0.n))
    ys = np.empty((steps + 1, p0.n))
    x, y = p0.x.copy(), p0.y.copy()
    xs[0], ys[0] = x, y
    for k in range(1, steps + 1):
        k1x, k1y = _particle_rhs(x, y)
        k2x, k2y = _particle_rhs(x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
        k3x, k3y = _particle_rhs(x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
        k4x, k4y = _particle_rhs(x + dt * k3x, y + dt * k3y)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        xs[k], ys[k] = x, y
    logger.debug(f"particle_rk4: {steps} steps to t={t_end}")
    return ParticleTrajectory(times, xs, ys)


# ============================================================================
# Matrix flows
# ============================================================================


def toda_rhs(T, g):
    """
    [T, Pi_a g(T)] where Pi_a M = tril(M, -1) - tril(M, -1)^T.

    Raises:
        StructureViolation: the bracket is not symmetric tridiagonal
    """
    G = apply_function(T, g.evaluate)
    lower = np.tril(G, -1)
    skew = lower - lower.T
    dense = T.dense()
    bracket = dense @ skew - skew @ dense
    scale = max(T.norm(), 1.0) * max(float(np.abs(G).max()), 1.0)
    return SymTridiagonal.from_dense(bracket, tol=config.scaled(config.STRUCTURE_TOL, scale))


def toda_flow_factorized(T0, g, t):
    """
    Exact flow through the QR factor of exp(t g(T0)).

    The exponent is shifted by its maximum; positive scalars leave the Q
    factor unchanged. Spreads beyond EXP_STAGE_LIMIT are split into equal
    stages: the eigenvector rows of T(s) are the Q factor A(s) itself, so
    A(s + u) is the Q factor of exp(u g(Lambda)) A(s).

    Raises:
        FlowOverflow: spread of t*g(lambda) beyond EXP_SPREAD_LIMIT
    """
    lambdas, A = sym_tridiag_eigen(T0)
    exponent = t * g.evaluate(lambdas)
    spread = float(exponent.max() - exponent.min())
    if spread > config.EXP_SPREAD_LIMIT:
        raise FlowOverflow(
            f"Exponent spread {spread:.1f} exceeds {config.EXP_SPREAD_LIMIT} at t={t}"
        )
    stages = max(1, int(math.ceil(spread / config.EXP_STAGE_LIMIT)))
    if stages > 1:
        logger.debug(f"toda_flow_factorized: spread {spread:.1f} in {stages} stages")
    step = exponent / stages
    scale = np.exp(step - step.max())
    for _ in range(stages):
        A = graded_spectral_q(A, scale)
    return SymTridiagonal.from_dense(A.T @ (lambdas[:, None] * A))


def toda_flow_chart(spectrum, point, g, t):
    """
    beta_i(t) = exp((g(l^pi_(i+1)) - g(l^pi_i)) t) beta_i(0).

    Raises:
        FlowOverflow: some |beta_i(t)| beyond BETA_LIMIT
    """
    rates = np.diff(g.evaluate(spectrum.lambdas)[list(point.pi.images)])
    beta = point.beta
    nonzero = beta != 0.0
    with np.errstate(divide="ignore"):
        log_mag = np.where(nonzero, np.log(np.abs(beta)) + rates * t, -np.inf)
    if np.any(log_mag > math.log(config.BETA_LIMIT)):
        raise FlowOverflow(f"Chart coordinates leave the safe range at t={t}")
    return ChartPoint(point.pi, np.sign(beta) * np.exp(log_mag))


def norming_flow(spectrum, w0, t):
    """w(t) = exp(t Lambda) w(0) / ||exp(t Lambda) w(0)|| for the standard flow."""
    log_w = np.log(w0.by_eigenvalue()) + t * spectrum.lambdas
    return NormingVector.from_log(log_w).reordered(w0.pi)


def toda_rk4(T0, g, times, h=None):
    """
    RK4 on the Lax equation, sampled at the ascending `times` (from 0).

    Returns:
        list of SymTridiagonal, one per requested time
    """
    if h is None:
        h = config.RK4_STEP

    def rhs(diag, off):
        dT = toda_rhs(SymTridiagonal(diag, off), g)
        return dT.diag, dT.off

    diag, off = T0.diag.copy(), T0.off.copy()
    now = 0.0
    samples = []
    for target in times:
        span = target - now
        if span < 0.0:
            raise ValueError("Sample times must be ascending from 0")
        steps = int(math.ceil(span / h - 1e-9))
        dt = span / steps if steps else 0.0
        for _ in range(steps):
            k1 = rhs(diag, off)
            k2 = rhs(diag + 0.5 * dt * k1[0], off + 0.5 * dt * k1[1])
            k3 = rhs(diag + 0.5 * dt * k2[0], off + 0.5 * dt * k2[1])
            k4 = rhs(diag + dt * k3[0], off + dt * k3[1])
            diag = diag + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            off = off + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        now = target
        samples.append(SymTridiagonal(diag, off))
    return samples


def flow_limit_permutation(spectrum, g):
    """pi ordering g(lambda) decreasingly; T(t) tends to Lambda^pi as t -> +inf."""
    values = g.evaluate(spectrum.lambdas)
    return Permutation(tuple(int(i) for i in np.argsort(-values, kind="stable")))


def asymptotic_beta_from_flow(T_t, t, spectrum, pi, g):
    """beta^pi(0) estimated as T(t)[k+1, k] exp((g(l_pi(k)) - g(l_pi(k+1))) t)."""
    values = g.evaluate(spectrum.lambdas)[list(pi.images)]
    return T_t.off * np.exp(-np.diff(values) * t)


# ============================================================================
# Wave and scattering maps
# ============================================================================


def wave_map(p0, side):
    """
    Asymptotic velocities and phases of the lattice started at p0.

    c_k = -2 lambda_(pi(k)); with bt_j = log beta_j^pi(flaschka(p0)),
    d_k = sum_(j<k) (-2j/n) bt_j + sum_(j>=k) (2(n-j)/n) bt_j + (n-2k+1) log 2.

    Raises:
        DegenerateSpectrum
    """
    J = flaschka(p0)
    lambdas, _ = sym_tridiag_eigen(J)
    spectrum = Spectrum(lambdas)
    n = spectrum.n
    pi = Permutation.identity(n) if side == SIDE_MINUS else Permutation.reversal(n)
    beta = psi(spectrum, pi, J).beta
    if np.any(beta <= 0.0):
        raise NotJacobi(f"Lattice chart coordinates must be positive: {beta.tolist()}")
    log_beta = np.log(beta)
    c = -2.0 * lambdas[list(pi.images)]
    d = np.empty(n)
    j = np.arange(1, n)
    for k in range(1, n + 1):
        before = j < k
        d[k - 1] = (
            np.sum(-2.0 * j[before] / n * log_beta[before])
            + np.sum(2.0 * (n - j[~before]) / n * log_beta[~before])
            + (n - 2 * k + 1) * math.log(2.0)
        )
    return AsymptoticData(c, d, side)


def scattering_map(incoming):
    """
    Outgoing asymptotics from incoming ones:
    c+_(n+1-k) = c-_k, d+_(n+1-k) = d-_k + 2 sum_(j<k) log|c_j - c_k| - 2 sum_(j>k) log|c_j - c_k|.

    Raises:
        DegenerateVelocities
    """
    if incoming.side != SIDE_MINUS:
        raise ValueError("Scattering map takes incoming (side '-') data")
    c, d = incoming.c, incoming.d
    n = c.size
    diffs = np.abs(c[:, None] - c[None, :])
    if n > 1 and diffs[~np.eye(n, dtype=bool)].min() == 0.0:
        raise DegenerateVelocities(f"Velocities must be distinct: {c.tolist()}")
    c_out = np.empty(n)
    d_out = np.empty(n)
    for k in range(n):
        with np.errstate(divide="ignore"):
            logs = np.log(diffs[:, k])
        c_out[n - 1 - k] = c[k]
        d_out[n - 1 - k] = d[k] + 2.0 * logs[:k].sum() - 2.0 * logs[k + 1:].sum()
    return AsymptoticData(c_out, d_out, SIDE_PLUS)


def fit_asymptote(trajectory, side, force_tol=None):
    """
    Least-squares lines through the tail of a lattice trajectory.

    The tail is the last (1 - TAIL_FRACTION) of the integration span.

    Raises:
        TailNotFree: max exp(x_k - x_(k+1)) on the tail exceeds force_tol
    """
    if force_tol is None:
        force_tol = config.FORCE_TOL
    times = trajectory.times
    t_end = times[-1] if abs(times[-1]) >= abs(times[0]) else times[0]
    if (t_end < 0.0) != (side == SIDE_MINUS):
        raise ValueError(f"Trajectory toward t={t_end} cannot give side {side!r} asymptotics")
    window = np.abs(times) >= config.TAIL_FRACTION * abs(t_end)
    xs = trajectory.x[window]
    force = float(np.exp(xs[:, :-1] - xs[:, 1:]).max(initial=0.0))
    if force > force_tol:
        raise TailNotFree(f"Tail force {force:.3e} exceeds {force_tol:.1e}; integrate longer")
    slope, intercept = np.polyfit(times[window], xs, 1)
    fitted = np.outer(times[window], slope) + intercept
    residual = float(np.abs(fitted - xs).max())
    # Sum x = 0 holds along the trajectory; remove the drift left by rounding
    intercept = intercept - intercept.mean()
    logger.debug(f"fit_asymptote side {side}: residual {residual:.2e}, tail force {force:.2e}")
    return AsymptoticData(slope, intercept, side, residual)

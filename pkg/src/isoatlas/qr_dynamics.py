"""
QR dynamics on the isospectral manifold
=======================================

The QR step induced by a function f, F(T) = Q(f(T))^T T Q(f(T)), acts on
chart coordinates by beta_i -> |f(lambda^pi_(i+1)) / f(lambda^pi_i)| beta_i.
This module implements the matrix and chart forms, the shifted step extended
to shifts on the spectrum, the Rayleigh-quotient step and an empirical fit of
its cubic deflation rate.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import config
from .charts import ChartPoint, Spectrum, phi, psi, q_ratio_at, select_chart
from .core_linalg import Permutation, SymTridiagonal, graded_spectral_q, sym_tridiag_eigen
from .errors import InstantWin, NotInChart, OutsideDomain, ShiftOnSpectrum

logger = logging.getLogger(__name__)

STATUS_CONVERGED = "converged"
STATUS_DEFLATED = "deflated"
STATUS_INSTANT_WIN = "instant-win"
STATUS_MAX_STEPS = "max-steps"


# ============================================================================
# Domain types
# ============================================================================


@dataclass(frozen=True, eq=False)
class ShiftFunction:
    """
    A function known only through its values on the spectrum.

    kinds: identity (x), shift (x - s), square (x^2), exponential
    (exp(t * g(x)) for an inner ShiftFunction g), table (f(lambda_1..n)).
    """

    kind: str
    s: float = 0.0
    t: float = 0.0
    inner: "ShiftFunction" = None
    values: tuple = ()

    KINDS = ("identity", "shift", "square", "exponential", "table")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"Unknown function kind {self.kind!r}")
        if self.kind == "exponential" and self.inner is None:
            raise ValueError("Exponential function needs an inner function g")
        if self.kind == "table":
            values = tuple(float(v) for v in self.values)
            if not values or not np.all(np.isfinite(values)):
                raise ValueError("Tabulated function needs finite values")
            object.__setattr__(self, "values", values)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def shift(cls, s):
        return cls("shift", s=float(s))

    @classmethod
    def square(cls):
        return cls("square")

    @classmethod
    def exponential(cls, t, g=None):
        return cls("exponential", t=float(t), inner=g if g is not None else cls.identity())

    @classmethod
    def table(cls, values):
        return cls("table", values=tuple(values))

    def evaluate(self, lambdas):
        """f at the ascending spectrum `lambdas` (table entries are positional)."""
        lambdas = np.asarray(lambdas, dtype=float)
        if self.kind == "identity":
            return lambdas.copy()
        if self.kind == "shift":
            return lambdas - self.s
        if self.kind == "square":
            return lambdas**2
        if self.kind == "exponential":
            return np.exp(self.t * self.inner.evaluate(lambdas))
        if len(self.values) != lambdas.size:
            raise ValueError(
                f"Table has {len(self.values)} values for a spectrum of size {lambdas.size}"
            )
        return np.array(self.values)

    def log_abs(self, lambdas):
        """log|f| without overflow for the exponential kind; -inf where f = 0."""
        if self.kind == "exponential":
            return self.t * self.inner.evaluate(lambdas)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.evaluate(lambdas)))

    def sign(self, lambdas):
        if self.kind == "exponential":
            return np.ones(np.asarray(lambdas).size)
        return np.sign(self.evaluate(lambdas))

    def tabulated(self, lambdas):
        return ShiftFunction.table(self.evaluate(lambdas))

    def __str__(self):
        if self.kind == "shift":
            return f"shift={self.s!r}"
        if self.kind == "exponential":
            return f"exp({self.t!r}*{self.inner})"
        if self.kind == "table":
            return "table=" + ",".join(repr(v) for v in self.values)
        return self.kind


@dataclass(eq=False)
class QRTrajectory:
    """States T, F(T), F^2(T), ... with |T[n, n-1]| per state and a final status."""

    states: list = field(default_factory=list)
    measures: list = field(default_factory=list)
    status: str = STATUS_MAX_STEPS

    def append(self, T):
        self.states.append(T)
        self.measures.append(float(abs(T.off[-1])) if T.n > 1 else 0.0)

    @property
    def final(self):
        return self.states[-1]

    def off_diagonals(self):
        return np.array([T.off for T in self.states])


@dataclass(frozen=True, eq=False)
class RayleighStep:
    """Result of one Rayleigh-shift step; `deflated` marks |T'[n, n-1]| <= BLOCK_TOL * ||T'||."""

    matrix: SymTridiagonal
    deflated: bool
    point: ChartPoint = None


@dataclass(frozen=True)
class CubicRateFit:
    """Least-squares fit log|G(T)[n, n-1]| = slope * log|T[n, n-1]| + intercept."""

    slope: float
    intercept: float
    epsilon: float
    invariant: bool
    residual: float
    count: int

    @property
    def constant(self):
        return float(np.exp(self.intercept))


# ============================================================================
# Helpers
# ============================================================================


def _shift_tol(lambdas):
    return config.scaled(config.SHIFT_TOL, np.abs(lambdas).max())


def _checked_log_abs(f, lambdas):
    """log|f(lambda)|, raising ShiftOnSpectrum where |f| is numerically zero."""
    log_abs = f.log_abs(lambdas)
    if f.kind in ("identity", "shift"):
        floor = np.log(_shift_tol(lambdas))
    else:
        floor = log_abs.max() + np.log(config.scaled(config.SHIFT_TOL))
    hits = np.flatnonzero(log_abs <= floor)
    if hits.size:
        raise ShiftOnSpectrum(
            f"{f} vanishes on the spectrum at lambda={lambdas[hits[0]]!r}"
        )
    return log_abs


def _is_deflated(T):
    return T.n == 1 or abs(T.off[-1]) <= config.scaled(config.BLOCK_TOL, T.norm())


# ============================================================================
# Steps
# ============================================================================


def qr_step_matrix(T, f):
    """
    F(T) = Q(f(T))^T T Q(f(T)) with f(T) formed spectrally.

    Raises:
        ShiftOnSpectrum: |f(lambda_i)| numerically zero
    """
    lambdas, Q = sym_tridiag_eigen(T)
    log_abs = _checked_log_abs(f, lambdas)
    values = f.sign(lambdas) * np.exp(log_abs - log_abs.max())
    A = graded_spectral_q(Q, values)
    return SymTridiagonal.from_dense(A.T @ (lambdas[:, None] * A))


def qr_step_chart(spectrum, point, f):
    """beta_i -> |f(lambda^pi_(i+1)) / f(lambda^pi_i)| beta_i."""
    log_abs = _checked_log_abs(f, spectrum.lambdas)[list(point.pi.images)]
    return ChartPoint(point.pi, point.beta * np.exp(np.diff(log_abs)))


def shifted_step(spectrum, pi, point, s):
    """
    Shifted QR step in chart coordinates, defined also for s = lambda_(pi(n)).

    Factors are |lambda^pi_(i+1) - s| / |lambda^pi_i - s|; the last factor may
    vanish, which deflates in one step.

    Raises:
        OutsideDomain: s within SHIFT_TOL of lambda^pi_i for some i < n
    """
    values = spectrum.lambdas[list(pi.images)] - s
    tol = _shift_tol(spectrum.lambdas)
    near = np.flatnonzero(np.abs(values[:-1]) <= tol)
    if near.size:
        raise OutsideDomain(
            f"Shift {s!r} hits lambda={spectrum.lambdas[pi(int(near[0]))]!r}, "
            f"which is not last in the chart pi={pi}"
        )
    factors = np.abs(values[1:]) / np.abs(values[:-1])
    return ChartPoint(pi, point.beta * factors)


def shifted_step_matrix(spectrum, T, s):
    """
    F(s, T) on matrices via the chart form.

    The chart is chosen with the eigenvalue nearest to s in the last position
    when possible, which keeps the near-deflating factor exact.

    Returns:
        tuple: (SymTridiagonal, ChartPoint)

    Raises:
        OutsideDomain: s is on the spectrum and no admissible chart contains T
    """
    lambdas = spectrum.lambdas
    nearest = int(np.argmin(np.abs(lambdas - s)))
    on_spectrum = abs(lambdas[nearest] - s) <= _shift_tol(lambdas)
    try:
        pi = select_chart(T, last=nearest)
    except NotInChart as e:
        if on_spectrum:
            raise OutsideDomain(
                f"Shift {s!r} equals lambda_{nearest + 1} but no chart with it last contains T"
            ) from e
        pi = select_chart(T)
    stepped = shifted_step(spectrum, pi, psi(spectrum, pi, T), s)
    return phi(spectrum, pi, stepped.beta), stepped


def rayleigh_step(spectrum, T):
    """
    G(T) = F(T[n, n], T).

    An already deflated T is returned unchanged.

    Raises:
        InstantWin: T[n, n] is an eigenvalue but T lies in no chart with that
            eigenvalue last
    """
    if _is_deflated(T):
        return RayleighStep(T, True)
    s = float(T.diag[-1])
    try:
        matrix, point = shifted_step_matrix(spectrum, T, s)
    except OutsideDomain as e:
        raise InstantWin(f"T[n, n] = {s!r} is an eigenvalue: {e}", eigenvalue=s) from e
    return RayleighStep(matrix, _is_deflated(matrix), point)


# ============================================================================
# Trajectories
# ============================================================================


def limit_permutation(spectrum, f):
    """pi ordering |f(lambda)| decreasingly; F^k(T) tends to Lambda^pi."""
    log_abs = f.log_abs(spectrum.lambdas)
    return Permutation(tuple(int(i) for i in np.argsort(-log_abs, kind="stable")))


def run_qr(T0, f, k_max, deflate_tol=None):
    """
    Iterate the QR step of f until every |b_i| < deflate_tol or k_max steps.

    A shift on the spectrum is carried by the extended chart step.

    Args:
        T0: SymTridiagonal
        f: ShiftFunction
        k_max: maximum number of steps
        deflate_tol: absolute threshold, default DEFLATE_TOL * ||Lambda||

    Returns:
        QRTrajectory
    """
    spectrum_lambdas, _ = sym_tridiag_eigen(T0)
    if deflate_tol is None:
        deflate_tol = config.scaled(config.DEFLATE_TOL, np.abs(spectrum_lambdas).max())
    extended = (
        f.kind == "shift"
        and np.abs(spectrum_lambdas - f.s).min() <= _shift_tol(spectrum_lambdas)
    )
    spectrum = Spectrum(spectrum_lambdas)
    trajectory = QRTrajectory()
    trajectory.append(T0)
    T = T0
    for k in range(k_max):
        if T.n == 1 or np.abs(T.off).max() < deflate_tol:
            trajectory.status = STATUS_CONVERGED
            break
        if extended:
            T, _ = shifted_step_matrix(spectrum, T, f.s)
        else:
            T = qr_step_matrix(T, f)
        trajectory.append(T)
    else:
        if T.n == 1 or np.abs(T.off).max() < deflate_tol:
            trajectory.status = STATUS_CONVERGED
    logger.debug(f"run_qr {f}: {len(trajectory.states) - 1} steps, {trajectory.status}")
    return trajectory


def run_rayleigh(spectrum, T0, k_max):
    """Rayleigh-shift iteration until deflation, an instant win or k_max steps."""
    trajectory = QRTrajectory()
    trajectory.append(T0)
    T = T0
    if _is_deflated(T):
        trajectory.status = STATUS_DEFLATED
        return trajectory
    for _ in range(k_max):
        try:
            result = rayleigh_step(spectrum, T)
        except InstantWin as e:
            logger.info(f"Instant win: {e}")
            trajectory.status = STATUS_INSTANT_WIN
            break
        T = result.matrix
        trajectory.append(T)
        if result.deflated:
            trajectory.status = STATUS_DEFLATED
            break
    return trajectory


def asymptotic_beta(T_k, k, spectrum, pi, f):
    """Estimate beta^pi(T_0) from F^k(T_0) as T_k[i+1, i] |f(l_pi(i)) / f(l_pi(i+1))|^k."""
    log_abs = f.log_abs(spectrum.lambdas)[list(pi.images)]
    return T_k.off * np.exp(-k * np.diff(log_abs))


# ============================================================================
# Cubic deflation rate
# ============================================================================


def cubic_rate_fit(spectrum, pi=None, epsilons=None, samples=8, seed=0, spread=1.0):
    """
    Fit the deflation rate of the Rayleigh step near Delta_0.

    Each sample draws the leading chart coordinates uniformly in
    [-spread, spread] and sets beta_(n-1) to each epsilon. |G(T)[n, n-1]| is
    read as beta'_(n-1) / q_(n-1)(beta'), which stays accurate below the
    rounding level of the assembled matrix.

    Returns:
        CubicRateFit
    """
    n = spectrum.n
    if n < 2:
        raise ValueError("Deflation needs n >= 2")
    if pi is None:
        pi = Permutation.identity(n)
    if epsilons is None:
        epsilons = np.logspace(-2, -5, 7)
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(samples):
        head = rng.uniform(-spread, spread, size=n - 2)
        for eps in epsilons:
            beta = np.concatenate([head, [eps]])
            T = phi(spectrum, pi, beta)
            stepped = shifted_step(spectrum, pi, ChartPoint(pi, beta), float(T.diag[-1]))
            q = q_ratio_at(spectrum, pi, stepped.beta, n - 2)
            xs.append(abs(T.off[-1]))
            ys.append(abs(stepped.beta[-1]) / q)
    xs, ys = np.array(xs), np.array(ys)
    keep = ys > 0.0
    slope, intercept = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)
    fitted = slope * np.log(xs[keep]) + intercept
    residual = float(np.abs(fitted - np.log(ys[keep])).max())
    epsilon = float(xs.max())
    invariant = bool(np.all(ys <= epsilon))
    logger.debug(
        f"cubic_rate_fit n={n}: slope={slope:.4f}, intercept={intercept:.4f}, "
        f"residual={residual:.2e}"
    )
    return CubicRateFit(
        float(slope), float(intercept), epsilon, invariant, residual, int(keep.sum())
    )

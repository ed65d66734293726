"""
Bidiagonal-coordinate atlas
===========================

Chart domains U^pi, charts psi_pi / inverse charts phi_pi, norming constants
and their conversion to chart coordinates, cells and sign sequences, sign
conjugation, the q ratio, and the moment map.

A chart point (pi, beta) stands for B_pi, the lower bidiagonal matrix with
diagonal lambda^pi and subdiagonal beta. phi_pi(beta) = Q(L)^T Lambda^pi Q(L)
where L is the unit lower triangular matrix with L B_pi = Lambda^pi L.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import config
from .core_linalg import (
    Permutation,
    SignDiagonal,
    SymTridiagonal,
    graded_q,
    lu_unit,
    plu_select,
    qr_positive,
    sign_fix_lu_positive,
    sym_tridiag_eigen,
)
from .errors import (
    DegenerateSpectrum,
    FlowOverflow,
    NotInChart,
    NotJacobi,
    PivotBreakdown,
    SingularMatrix,
    SpectrumMismatch,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Domain types
# ============================================================================


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Simple spectrum lambda_1 < ... < lambda_n."""

    lambdas: np.ndarray

    def __post_init__(self):
        lambdas = np.array(self.lambdas, dtype=float).reshape(-1)
        if lambdas.size < 1 or not np.all(np.isfinite(lambdas)):
            raise ValueError("Spectrum needs at least one finite eigenvalue")
        gaps = np.diff(lambdas)
        if np.any(gaps < 0.0):
            raise ValueError(f"Spectrum must be ascending: {lambdas.tolist()}")
        if np.any(gaps == 0.0):
            raise DegenerateSpectrum(f"Repeated eigenvalue in {lambdas.tolist()}")
        lambdas.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)

    @classmethod
    def of(cls, T):
        """Spectrum of a symmetric tridiagonal matrix."""
        lambdas, _ = sym_tridiag_eigen(T)
        return cls(lambdas)

    @property
    def n(self):
        return self.lambdas.size

    @property
    def gamma(self):
        """Spectral gap; infinite for n = 1."""
        if self.n == 1:
            return float("inf")
        return float(np.diff(self.lambdas).min())

    def norm(self):
        """Spectral norm of diag(lambdas)."""
        return float(np.abs(self.lambdas).max())

    def permuted(self, pi):
        return PermutedSpectrum(self, pi)

    def __repr__(self):
        return f"Spectrum({self.lambdas.tolist()})"


@dataclass(frozen=True, eq=False)
class PermutedSpectrum:
    """Lambda^pi: lambda^pi_i = lambda_{pi(i)}."""

    base: Spectrum
    pi: Permutation

    def __post_init__(self):
        if self.pi.n != self.base.n:
            raise ValueError(
                f"Permutation size {self.pi.n} does not match spectrum size {self.base.n}"
            )

    @property
    def values(self):
        return self.base.lambdas[list(self.pi.images)]

    @property
    def n(self):
        return self.base.n

    def diagonal_matrix(self):
        return SymTridiagonal.diagonal(self.values)


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """Chart coordinates beta^pi of a matrix in U^pi."""

    pi: Permutation
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        if beta.size != self.pi.n - 1:
            raise ValueError(
                f"Chart point for n={self.pi.n} needs {self.pi.n - 1} coordinates, got {beta.size}"
            )
        if not np.all(np.isfinite(beta)):
            raise ValueError("Chart coordinates must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self):
        return self.pi.n


@dataclass(frozen=True, eq=False)
class NormingVector:
    """
    Norming constants of a Jacobi matrix.

    w[i] belongs to the eigenvalue lambda_{pi(i)}; with the identity ordering
    w is indexed by eigenvalue.
    """

    w: np.ndarray
    pi: Permutation

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if w.size != self.pi.n:
            raise ValueError(f"Norming vector length {w.size} != {self.pi.n}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError(f"Norming constants must be positive: {w.tolist()}")
        if abs(np.linalg.norm(w) - 1.0) > 1e-10:
            raise ValueError(f"Norming vector must have unit norm, got {np.linalg.norm(w)}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def normalized(cls, w, pi=None):
        w = np.asarray(w, dtype=float)
        if pi is None:
            pi = Permutation.identity(w.size)
        return cls(w / np.linalg.norm(w), pi)

    @classmethod
    def from_log(cls, log_w, pi=None):
        """Normalize exp(log_w) without overflow."""
        log_w = np.asarray(log_w, dtype=float)
        return cls.normalized(np.exp(log_w - log_w.max()), pi)

    def by_eigenvalue(self):
        out = np.empty_like(self.w)
        out[list(self.pi.images)] = self.w
        return out

    def reordered(self, pi):
        """Same constants listed in the pi-ordering."""
        return NormingVector(self.by_eigenvalue()[list(pi.images)], pi)


@dataclass(frozen=True, eq=False)
class CellDescriptor:
    """Block partition, per-block spectra and sign sequence of a matrix."""

    blocks: tuple
    subspectra: tuple
    signs: tuple

    @property
    def n(self):
        return self.blocks[-1][1]

    @property
    def dimension(self):
        return self.n - len(self.blocks)


# ============================================================================
# Helpers
# ============================================================================


def _block_tol(T):
    return config.scaled(config.BLOCK_TOL, T.norm())


def _blocks(T, tol):
    """Half-open index ranges of the unreduced diagonal blocks."""
    cuts = [0] + [i + 1 for i, b in enumerate(T.off) if abs(b) <= tol] + [T.n]
    return tuple((cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1))


def _block_spectrum(T, start, stop):
    if stop - start == 1:
        return np.array([T.diag[start]])
    block = SymTridiagonal(T.diag[start:stop], T.off[start:stop - 1])
    lambdas, _ = sym_tridiag_eigen(block)
    return lambdas


def _checked_eigen(T, spectrum):
    """Eigen-decompose T and confirm its spectrum is `spectrum`."""
    if T.n != spectrum.n:
        raise SpectrumMismatch(f"Matrix size {T.n} does not match spectrum size {spectrum.n}")
    lambdas, Q = sym_tridiag_eigen(T)
    drift = float(np.abs(lambdas - spectrum.lambdas).max())
    tol = config.scaled(config.EIG_TOL, max(T.norm(), spectrum.norm()))
    if drift > tol:
        raise SpectrumMismatch(
            f"Matrix spectrum {lambdas.tolist()} differs from {spectrum.lambdas.tolist()} "
            f"(max deviation {drift:.3e})"
        )
    return lambdas, Q


def _normalized(Q, pi):
    Qp = Q[list(pi.images), :]
    try:
        E = sign_fix_lu_positive(Qp)
    except PivotBreakdown as e:
        raise NotInChart(f"Matrix is not in the chart of pi={pi}: {e}") from e
    return E.array()[:, None] * Qp


def _log_L(values, beta):
    """
    log|L_ij| and sign(L_ij) of the explicit unit lower triangular L.

    L_ij = prod_{k=j}^{i-1} beta_k / (lambda_i - lambda_k) for i > j.
    """
    n = values.size
    log_mag = np.full((n, n), -np.inf)
    sign = np.zeros((n, n))
    np.fill_diagonal(log_mag, 0.0)
    np.fill_diagonal(sign, 1.0)
    with np.errstate(divide="ignore"):
        log_beta = np.log(np.abs(beta))
    for i in range(1, n):
        gaps = values[i] - values[:i]
        terms = log_beta[:i] - np.log(np.abs(gaps))
        signs = np.sign(beta[:i]) * np.sign(gaps)
        # suffix sums over k = j..i-1
        log_mag[i, :i] = np.cumsum(terms[::-1])[::-1]
        sign[i, :i] = np.cumprod(signs[::-1])[::-1]
    return log_mag, sign


def _check_pi(spectrum, pi):
    if pi.n != spectrum.n:
        raise ValueError(f"Permutation of size {pi.n} for a spectrum of size {spectrum.n}")


def _check_beta(beta, n):
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != n - 1:
        raise ValueError(f"Expected {n - 1} chart coordinates, got {beta.size}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("Chart coordinates must be finite")
    limit = config.BETA_LIMIT * config.tol_scale()
    if beta.size and np.abs(beta).max() > limit:
        raise FlowOverflow(f"|beta| = {np.abs(beta).max():.3e} exceeds the safety bound {limit:.1e}")
    return beta


def _log_gap_products(values):
    """G[i] = sum_{k<i} log|values[i] - values[k]|."""
    return np.array(
        [np.sum(np.log(np.abs(values[i] - values[:i]))) for i in range(values.size)]
    )


# ============================================================================
# Cells and sign sequences
# ============================================================================


def sign_sequence(T):
    """Signs of the subdiagonal entries, 0 where |b_i| <= BLOCK_TOL * ||T||."""
    tol = _block_tol(T)
    return tuple(0 if abs(b) <= tol else (1 if b > 0 else -1) for b in T.off)


def cell_of(T, spectrum):
    """Cell of T: unreduced blocks, their sorted spectra and the sign sequence."""
    _checked_eigen(T, spectrum)
    blocks = _blocks(T, _block_tol(T))
    subspectra = tuple(_block_spectrum(T, start, stop) for start, stop in blocks)
    return CellDescriptor(blocks, subspectra, sign_sequence(T))


def chart_contains(spectrum, pi, T):
    """
    True iff T lies in U^pi: each unreduced block has the spectrum of the
    matching consecutive segment of Lambda^pi.
    """
    _checked_eigen(T, spectrum)
    values = spectrum.lambdas[list(pi.images)]
    tol = config.scaled(config.EIG_TOL, max(T.norm(), spectrum.norm()))
    for start, stop in _blocks(T, _block_tol(T)):
        block = _block_spectrum(T, start, stop)
        if np.abs(block - np.sort(values[start:stop])).max() > tol:
            return False
    return True


def select_chart(T, last=None):
    """
    Canonical chart containing T, from partial pivoting on its eigenvectors.

    Args:
        T: SymTridiagonal
        last: optional 0-based eigenvalue index required at pi(n-1)

    Returns:
        Permutation
    """
    _, Q = sym_tridiag_eigen(T)
    try:
        return plu_select(Q, last=last)
    except SingularMatrix as e:
        if last is None:
            raise
        raise NotInChart(f"No chart with eigenvalue {last + 1} last contains T") from e


# ============================================================================
# Charts
# ============================================================================


def normalized_diagonalization(T, pi):
    """
    Q_pi orthogonal and LU-positive with T = Q_pi^T Lambda^pi Q_pi.

    Raises:
        NotInChart: a leading minor of the reordered eigenvector matrix vanishes
    """
    _, Q = sym_tridiag_eigen(T)
    return _normalized(Q, pi)


def psi(spectrum, pi, T):
    """
    Chart coordinates of T in U^pi.

    beta_j = (lambda^pi_{j+1} - lambda^pi_j) * L_pi[j+1, j], L_pi = L(Q_pi).

    Raises:
        SpectrumMismatch, NotInChart
    """
    _check_pi(spectrum, pi)
    _, Q = _checked_eigen(T, spectrum)
    Qp = _normalized(Q, pi)
    try:
        L, _ = lu_unit(Qp)
    except PivotBreakdown as e:
        raise NotInChart(f"Matrix is not in the chart of pi={pi}: {e}") from e
    values = spectrum.lambdas[list(pi.images)]
    beta = np.diff(values) * np.diag(L, -1)
    return ChartPoint(pi, beta)


def build_L(permuted, beta):
    """
    Explicit L_pi for chart coordinates beta, satisfying L B_pi = Lambda^pi L.

    Args:
        permuted: PermutedSpectrum Lambda^pi
        beta: n-1 chart coordinates

    Returns:
        np.ndarray: unit lower triangular n x n
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != permuted.n - 1:
        raise ValueError(f"Expected {permuted.n - 1} chart coordinates, got {beta.size}")
    log_mag, sign = _log_L(permuted.values, beta)
    with np.errstate(over="ignore"):
        L = sign * np.exp(log_mag)
    if not np.all(np.isfinite(L)):
        raise FlowOverflow("Entries of L overflow; use phi, which rescales columns")
    return L


def bidiagonal_matrix(permuted, beta):
    """B_pi: diagonal lambda^pi, subdiagonal beta."""
    return np.diag(permuted.values) + np.diag(np.asarray(beta, dtype=float), -1)


def bidiagonal_of(T, spectrum, pi):
    """B_pi computed in full as L_pi^-1 Lambda^pi L_pi."""
    Qp = normalized_diagonalization(T, pi)
    try:
        L, _ = lu_unit(Qp)
    except PivotBreakdown as e:
        raise NotInChart(f"Matrix is not in the chart of pi={pi}: {e}") from e
    values = spectrum.lambdas[list(pi.images)]
    return scipy.linalg.solve_triangular(
        L, values[:, None] * L, lower=True, unit_diagonal=True
    )


def phi(spectrum, pi, beta):
    """
    Inverse chart: the matrix of U^pi with coordinates beta.

    Each column of L is scaled to unit max magnitude in log space, which keeps
    |beta| up to BETA_LIMIT representable. L = D M D^-1 with D the prefix
    products of beta and M fixed by the spectrum, so the scaled L is row
    graded and is factored with its rows sorted by grade.

    Raises:
        FlowOverflow: |beta| beyond BETA_LIMIT
    """
    _check_pi(spectrum, pi)
    beta = _check_beta(beta, spectrum.n)
    values = spectrum.lambdas[list(pi.images)]
    if spectrum.n == 1:
        return SymTridiagonal.diagonal(values)
    log_mag, sign = _log_L(values, beta)
    log_scaled = log_mag - log_mag.max(axis=0)
    Q = graded_q(sign * np.exp(log_scaled), log_scaled.max(axis=1))
    return SymTridiagonal.from_dense(Q.T @ (values[:, None] * Q))


# ============================================================================
# Norming constants
# ============================================================================


def _require_jacobi(J):
    if J.n > 1 and np.any(J.off <= 0.0):
        raise NotJacobi(f"Off-diagonal entries must be positive: {J.off.tolist()}")


def jacobi_sign(T):
    """Sign diagonal E with E T E Jacobi; T must be unreduced."""
    if np.any(T.off == 0.0):
        raise NotJacobi("Reduced matrix has no Jacobi representative under sign conjugation")
    signs = [1]
    for b in T.off:
        signs.append(signs[-1] * (1 if b > 0 else -1))
    return SignDiagonal(tuple(signs))


def norming_constants(J, pi):
    """
    Norming constants |first coordinates of the eigenvectors| of a Jacobi J,
    listed in the pi-ordering.

    Raises:
        NotJacobi
    """
    _require_jacobi(J)
    _, Q = sym_tridiag_eigen(J)
    w = np.abs(Q[:, 0])
    return NormingVector.normalized(w[list(pi.images)], pi)


def jacobi_from_data(permuted, w, method="vandermonde"):
    """
    The Jacobi matrix with spectrum Lambda^pi and norming constants w.

    Args:
        permuted: PermutedSpectrum
        w: NormingVector (any ordering)
        method: "vandermonde" (Q of E W V with a Vandermonde V) or "lanczos"
            (Lanczos on Lambda^pi started at w, full reorthogonalization)

    Returns:
        SymTridiagonal: Jacobi, with J = Q^T Lambda^pi Q
    """
    values = permuted.values
    wp = w.by_eigenvalue()[list(permuted.pi.images)]
    n = values.size
    if n == 1:
        return SymTridiagonal.diagonal(values)
    if method == "lanczos":
        return _lanczos(values, wp)
    if method != "vandermonde":
        raise ValueError(f"Unknown method {method!r}")
    # An affine change of variable keeps every Krylov subspace and the sign of
    # each new direction, so it leaves Q unchanged.
    center = 0.5 * (values.max() + values.min())
    radius = 0.5 * (values.max() - values.min())
    V = np.vander((values - center) / radius, n, increasing=True)
    WV = wp[:, None] * V
    E = sign_fix_lu_positive(WV)
    Q, _ = qr_positive(E.array()[:, None] * WV)
    J = SymTridiagonal.from_dense(Q.T @ (values[:, None] * Q))
    logger.debug(f"jacobi_from_data (vandermonde) off={J.off.tolist()}")
    return J


def _lanczos(values, start):
    n = values.size
    Q = np.zeros((n, n))
    alpha = np.zeros(n)
    beta = np.zeros(n - 1)
    Q[:, 0] = start / np.linalg.norm(start)
    for k in range(n):
        v = values * Q[:, k]
        alpha[k] = Q[:, k] @ v
        if k == n - 1:
            break
        v -= Q[:, : k + 1] @ (Q[:, : k + 1].T @ v)
        v -= Q[:, : k + 1] @ (Q[:, : k + 1].T @ v)
        beta[k] = np.linalg.norm(v)
        if beta[k] <= config.scaled(config.SING_TOL, np.abs(values).max()):
            raise DegenerateSpectrum(f"Lanczos breakdown at step {k + 1}")
        Q[:, k + 1] = v / beta[k]
    return SymTridiagonal(alpha, beta)


def beta_from_norming(spectrum, pi, w):
    """
    Chart coordinates of the Jacobi matrix with norming constants w, in log space.

    log beta_i = sum_{k<=i} log|l_{i+1} - l_k| - sum_{k<i} log|l_i - l_k|
                 + log w_{pi(i+1)} - log w_{pi(i)},   l = lambda^pi.
    """
    values = spectrum.lambdas[list(pi.images)]
    wp = w.by_eigenvalue()[list(pi.images)]
    log_gaps = _log_gap_products(values)
    log_w = np.log(wp)
    log_beta = log_gaps[1:] - log_gaps[:-1] + log_w[1:] - log_w[:-1]
    return np.exp(log_beta)


def norming_from_beta(spectrum, pi, beta):
    """Inverse of beta_from_norming on positive chart coordinates."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != spectrum.n - 1:
        raise ValueError(f"Expected {spectrum.n - 1} chart coordinates, got {beta.size}")
    if np.any(beta <= 0.0):
        raise NotJacobi(f"Chart coordinates must be positive: {beta.tolist()}")
    values = spectrum.lambdas[list(pi.images)]
    log_w = np.concatenate([[0.0], np.cumsum(np.log(beta))]) - _log_gap_products(values)
    return NormingVector.from_log(log_w, pi)


# ============================================================================
# Sign conjugation, q ratio, moment map
# ============================================================================


def conjugate_by_sign(E, T):
    """E T E: diagonal unchanged, b_i -> sigma_i sigma_(i+1) b_i."""
    if E.n != T.n:
        raise ValueError(f"Sign diagonal size {E.n} does not match n={T.n}")
    s = E.array()
    return SymTridiagonal(T.diag, T.off * s[:-1] * s[1:])


def q_ratio_at(spectrum, pi, beta, i):
    """
    q_i = beta_i / T[i+1, i] for T = phi_pi(beta).

    Below Q_RATIO_THRESHOLD * gamma the quotient is replaced by the reciprocal
    derivative of T[i+1, i] along beta_i (Richardson-extrapolated central
    difference).
    """
    beta = np.array(beta, dtype=float)
    gamma = spectrum.gamma
    off = phi(spectrum, pi, beta).off[i]
    if abs(off) > config.scaled(config.Q_RATIO_THRESHOLD, gamma):
        return float(beta[i] / off)

    def slope(h):
        up, down = beta.copy(), beta.copy()
        up[i] += h
        down[i] -= h
        return (phi(spectrum, pi, up).off[i] - phi(spectrum, pi, down).off[i]) / (2.0 * h)

    h = config.Q_RATIO_STEP * gamma
    derivative = (4.0 * slope(h) - slope(2.0 * h)) / 3.0
    return float(1.0 / derivative)


def q_ratio(spectrum, pi, T, i):
    """q_i^pi(T) = beta_i^pi(T) / T[i+1, i], extended continuously where T[i+1, i] = 0."""
    point = psi(spectrum, pi, T)
    return q_ratio_at(spectrum, pi, point.beta, i)


def moment_map(T, spectrum):
    """Diagonal of Q Lambda Q^T where T = Q^T Lambda Q."""
    _, Q = _checked_eigen(T, spectrum)
    return (Q**2) @ spectrum.lambdas


def is_majorized(d, spectrum, tol=None):
    """True iff d lies in the convex hull of the permutations of the spectrum."""
    d = np.sort(np.asarray(d, dtype=float))[::-1]
    lam = spectrum.lambdas[::-1]
    if tol is None:
        tol = config.scaled(config.EIG_TOL, spectrum.norm())
    partial = np.cumsum(d) - np.cumsum(lam)
    return bool(np.all(partial[:-1] <= tol) and abs(partial[-1]) <= tol)

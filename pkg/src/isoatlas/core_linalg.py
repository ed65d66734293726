"""
Dense small-matrix kernels
==========================

QR with positive diagonal, unit LU, LU-positivity and its sign fix, partial
pivoted chart selection, and the symmetric tridiagonal eigensolver every other
module treats as ground truth.

Conventions:
    - Dense matrices are square float numpy arrays, 1 <= n <= MAX_DIMENSION.
    - Eigenvector matrices hold one eigenvector per ROW, so T = Q^T diag(l) Q.
    - Permutations are stored 0-based; P_pi has P[pi(j), j] = 1, which makes
      P_pi^-1 diag(l) P_pi = diag(l[pi(0)], ..., l[pi(n-1)]).
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import config
from .errors import (
    DegenerateSpectrum,
    PivotBreakdown,
    SingularMatrix,
    StructureViolation,
    UnsupportedDimension,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Domain types
# ============================================================================


def as_dense(M):
    """
    Validate and convert to a square float matrix.

    Args:
        M: array-like n x n

    Returns:
        np.ndarray: float64 copy of M
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"Expected a non-empty square matrix, got shape {M.shape}")
    if M.shape[0] > config.MAX_DIMENSION:
        raise UnsupportedDimension(
            f"n={M.shape[0]} exceeds the supported maximum {config.MAX_DIMENSION}"
        )
    if not np.all(np.isfinite(M)):
        raise ValueError("Matrix has non-finite entries")
    return M


@dataclass(frozen=True, eq=False)
class SymTridiagonal:
    """Symmetric tridiagonal matrix: diagonal a_1..a_n, off-diagonal b_i = T[i+1, i]."""

    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float).reshape(-1)
        off = np.array(self.off, dtype=float).reshape(-1)
        if diag.size < 1:
            raise ValueError("SymTridiagonal needs at least one diagonal entry")
        if diag.size > config.MAX_DIMENSION:
            raise UnsupportedDimension(
                f"n={diag.size} exceeds the supported maximum {config.MAX_DIMENSION}"
            )
        if off.size != diag.size - 1:
            raise ValueError(
                f"Off-diagonal length {off.size} does not match n-1 = {diag.size - 1}"
            )
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))):
            raise ValueError("SymTridiagonal has non-finite entries")
        diag.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "off", off)

    @property
    def n(self):
        return self.diag.size

    @classmethod
    def diagonal(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros(max(values.size - 1, 0)))

    @classmethod
    def from_dense(cls, M, tol=None):
        """
        Extract the tridiagonal band of a (nearly) symmetric matrix.

        Args:
            M: square matrix
            tol: when given, entries outside the band and band asymmetry must
                stay below tol, otherwise StructureViolation is raised

        Returns:
            SymTridiagonal: band of (M + M^T) / 2
        """
        M = np.asarray(M, dtype=float)
        if tol is not None:
            residue = np.abs(np.triu(M, 2)).max(initial=0.0)
            residue = max(residue, np.abs(np.tril(M, -2)).max(initial=0.0))
            residue = max(residue, np.abs(M - M.T).max(initial=0.0))
            if residue > tol:
                raise StructureViolation(
                    f"Matrix is not symmetric tridiagonal (residue {residue:.3e} > {tol:.3e})"
                )
        sym = 0.5 * (M + M.T)
        return cls(np.diag(sym).copy(), np.diag(sym, -1).copy())

    def dense(self):
        return np.diag(self.diag) + np.diag(self.off, -1) + np.diag(self.off, 1)

    def norm(self):
        """Frobenius norm, sqrt(tr(T^2))."""
        return float(np.sqrt(np.sum(self.diag**2) + 2.0 * np.sum(self.off**2)))

    def trace(self):
        return float(np.sum(self.diag))

    def max_abs_diff(self, other):
        """Sup-norm distance between two matrices of the same size."""
        if other.n != self.n:
            raise ValueError(f"Size mismatch: {self.n} vs {other.n}")
        return float(
            max(
                np.abs(self.diag - other.diag).max(initial=0.0),
                np.abs(self.off - other.off).max(initial=0.0),
            )
        )

    def __repr__(self):
        return f"SymTridiagonal(diag={self.diag.tolist()}, off={self.off.tolist()})"


@dataclass(frozen=True)
class Permutation:
    """Bijection on {0..n-1}; images[i] = pi(i)."""

    images: tuple

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"Not a permutation of 0..{len(images) - 1}: {images}")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(n)))

    @classmethod
    def reversal(cls, n):
        return cls(tuple(range(n - 1, -1, -1)))

    @classmethod
    def from_one_based(cls, images):
        return cls(tuple(int(i) - 1 for i in images))

    @property
    def n(self):
        return len(self.images)

    def __call__(self, i):
        return self.images[i]

    def one_based(self):
        return tuple(i + 1 for i in self.images)

    def matrix(self):
        P = np.zeros((self.n, self.n))
        P[list(self.images), list(range(self.n))] = 1.0
        return P

    def compose(self, other):
        """(self o other)(i) = self(other(i))."""
        if other.n != self.n:
            raise ValueError("Cannot compose permutations of different sizes")
        return Permutation(tuple(self.images[j] for j in other.images))

    def inverse(self):
        inv = [0] * self.n
        for i, image in enumerate(self.images):
            inv[image] = i
        return Permutation(tuple(inv))

    def __str__(self):
        return ",".join(str(i) for i in self.one_based())


@dataclass(frozen=True)
class SignDiagonal:
    """Diagonal matrix with entries +1 or -1."""

    signs: tuple

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (1, -1) for s in signs):
            raise ValueError(f"Sign diagonal entries must be +1 or -1: {self.signs}")
        object.__setattr__(self, "signs", signs)

    @classmethod
    def identity(cls, n):
        return cls((1,) * n)

    @property
    def n(self):
        return len(self.signs)

    def array(self):
        return np.array(self.signs, dtype=float)

    def matrix(self):
        return np.diag(self.array())

    def is_identity(self):
        return all(s == 1 for s in self.signs)


# ============================================================================
# Factorizations
# ============================================================================


def qr_positive(M, tol=None):
    """
    QR factorization with R_ii > 0.

    Columns are rescaled to unit max magnitude before a Householder QR; right
    scaling by a positive diagonal leaves Q unchanged and R picks the scales
    back up.

    Args:
        M: invertible n x n matrix
        tol: threshold on the diagonal of the column-scaled R; defaults to
            SING_TOL * ||M||, 0.0 only rejects exact breakdown

    Returns:
        tuple: (Q, R) with Q orthogonal, R upper triangular, Q R = M

    Raises:
        SingularMatrix: some R_ii <= SING_TOL * ||M||
    """
    M = as_dense(M)
    scales = np.abs(M).max(axis=0)
    if np.any(scales == 0.0):
        raise SingularMatrix("Matrix has a zero column")
    Q, R = np.linalg.qr(M / scales)
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    Q = Q * signs
    R = signs[:, None] * R
    if tol is None:
        tol = config.scaled(config.SING_TOL, np.linalg.norm(M / scales))
    if np.any(np.diag(R) <= tol):
        raise SingularMatrix(f"R has a diagonal entry <= {tol:.3e}")
    return Q, np.triu(R) * scales


def lu_unit(M, tol=None):
    """
    Unpivoted LU with unit lower triangular L.

    Args:
        M: n x n matrix with invertible leading principal minors
        tol: pivot threshold; defaults to FACT_TOL * ||M||

    Returns:
        tuple: (L, U)

    Raises:
        PivotBreakdown: |pivot| <= tol at some step
    """
    M = as_dense(M)
    n = M.shape[0]
    if tol is None:
        tol = config.scaled(config.FACT_TOL, np.linalg.norm(M))
    L = np.eye(n)
    U = M.copy()
    for k in range(n):
        pivot = U[k, k]
        if abs(pivot) <= tol:
            raise PivotBreakdown(
                f"Leading minor {k + 1} is numerically singular (pivot {pivot:.3e})"
            )
        L[k + 1:, k] = U[k + 1:, k] / pivot
        U[k + 1:, k:] -= np.outer(L[k + 1:, k], U[k, k:])
    return L, np.triu(U)


def is_lu_positive(M):
    """True iff every leading principal minor of M is positive."""
    try:
        _, U = lu_unit(M, tol=0.0)
    except PivotBreakdown:
        return False
    return bool(np.all(np.diag(U) > 0.0))


def sign_fix_lu_positive(M):
    """
    The unique sign diagonal E making E M LU-positive.

    Row k of E M multiplies the k-th leading minor by sigma_1..sigma_k, so
    sigma_k is the sign of the k-th pivot U_kk.
    """
    _, U = lu_unit(M)
    return SignDiagonal(tuple(1 if u > 0 else -1 for u in np.diag(U)))


def plu_select(Q, last=None):
    """
    Choose pi so that P_pi^-1 Q has nonzero leading principal minors.

    Partial pivoting on Q picks the canonical pi. With `last` set, row `last`
    is pinned to the final position (pi(n-1) = last) and the remaining rows are
    chosen by partial pivoting on the leading n-1 columns.

    Args:
        Q: invertible n x n matrix
        last: optional 0-based row index forced into the last position

    Returns:
        Permutation

    Raises:
        SingularMatrix: no valid ordering exists (Q singular, or no ordering
            with the requested last row)
    """
    Q = as_dense(Q)
    n = Q.shape[0]
    if last is None:
        P, _, _ = scipy.linalg.lu(Q)
        order = [int(i) for i in P.argmax(axis=0)]
    elif n == 1:
        order = [int(last)]
    else:
        rows = [i for i in range(n) if i != last]
        P, _, _ = scipy.linalg.lu(Q[rows, : n - 1])
        order = [rows[int(k)] for k in P.argmax(axis=0)] + [int(last)]
    pi = Permutation(tuple(order))
    try:
        lu_unit(Q[order, :], tol=config.scaled(config.SING_TOL, np.linalg.norm(Q)))
    except PivotBreakdown as e:
        raise SingularMatrix(f"No valid row ordering for chart selection: {e}") from e
    logger.debug(f"plu_select chose pi={pi}")
    return pi


# ============================================================================
# Eigensolver
# ============================================================================


def sym_tridiag_eigen(T):
    """
    Ascending eigenvalues and orthogonal eigenvectors of T.

    LAPACK bisection (stebz) for the eigenvalues and inverse iteration (stein)
    for the eigenvectors, followed by one QR reorthogonalization pass.

    Args:
        T: SymTridiagonal

    Returns:
        tuple: (lambdas, Q) with row i of Q the eigenvector of lambdas[i]

    Raises:
        DegenerateSpectrum: two eigenvalues closer than GAP_TOL * ||T||
    """
    if T.n == 1:
        return T.diag.copy(), np.eye(1)
    lambdas, vectors = scipy.linalg.eigh_tridiagonal(
        T.diag, T.off, lapack_driver="stebz"
    )
    vectors, R = np.linalg.qr(vectors)
    vectors = vectors * np.where(np.diag(R) < 0.0, -1.0, 1.0)
    gap = float(np.diff(lambdas).min())
    tol = config.scaled(config.GAP_TOL, T.norm())
    if gap < tol:
        raise DegenerateSpectrum(
            f"Eigenvalue gap {gap:.3e} below tolerance {tol:.3e}"
        )
    return lambdas, vectors.T


def graded_spectral_q(Q, values):
    """
    Q factor A of diag(values) Q, with Q a row-eigenvector matrix of T.

    Since f(T) = Q^T diag(f) Q = (Q^T A) R, the QR step of f(T) is Q^T A and
    the stepped matrix is A^T diag(lambdas) A. Rows are factored in order of
    decreasing |f| so widely spread values (long Toda flows, near-deflating
    shifts) keep their small components.

    Raises:
        SingularMatrix: some value is exactly zero
    """
    values = np.asarray(values, dtype=float)
    if np.any(values == 0.0):
        raise SingularMatrix("f vanishes on the spectrum")
    return graded_q(values[:, None] * Q, np.abs(values))


def graded_q(M, grades):
    """
    Q factor of a row-graded matrix M (R_ii > 0).

    Rows are factored in order of decreasing grade, so row-wise relative
    accuracy survives grades spread over hundreds of decades. Only exact
    breakdown is rejected.

    Raises:
        SingularMatrix
    """
    order = np.argsort(-np.asarray(grades, dtype=float), kind="stable")
    Qs, _ = qr_positive(np.asarray(M, dtype=float)[order], tol=0.0)
    Q = np.empty_like(Qs)
    Q[order] = Qs
    return Q


def apply_function(T, fn):
    """
    f(T) through any orthogonal eigenbasis; only f on the spectrum matters.

    Uses a dense symmetric eigensolve, so nearly equal eigenvalues are fine.
    """
    lambdas, V = np.linalg.eigh(T.dense())
    return V @ (np.asarray(fn(lambdas), dtype=float)[:, None] * V.T)


def sturm_count(T, x):
    """Number of eigenvalues of T strictly below x."""
    count = 0
    d = 1.0
    for k in range(T.n):
        d = (T.diag[k] - x) - (T.off[k - 1] ** 2 / d if k > 0 else 0.0)
        if d == 0.0:
            d = -np.finfo(float).tiny
        if d < 0.0:
            count += 1
    return count


def bisection_eigenvalues(T, tol=None):
    """
    Eigenvalues of T by Sturm-sequence bisection.

    Independent of LAPACK; slow but exact to `tol`.
    """
    radius = np.abs(np.concatenate([T.off, [0.0]])) + np.abs(
        np.concatenate([[0.0], T.off])
    )
    lo_all = float(np.min(T.diag - radius))
    hi_all = float(np.max(T.diag + radius))
    if tol is None:
        tol = 1e-15 * max(abs(lo_all), abs(hi_all), 1.0)
    eigenvalues = np.empty(T.n)
    for k in range(T.n):
        lo, hi = lo_all, hi_all
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if sturm_count(T, mid) > k:
                hi = mid
            else:
                lo = mid
        eigenvalues[k] = 0.5 * (lo + hi)
    return eigenvalues

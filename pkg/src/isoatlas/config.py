"""
isoatlas configuration
======================

Numerical tolerances, integrator settings and output defaults shared by every
module, plus the logging setup used by the command-line entry point.

All tolerances are multiplied by the scale read from the ISOATLAS_TOL
environment variable (default 1.0).
"""

import logging
import os
import sys

logger = logging.getLogger(__name__)

# ============================================================================
# Tolerances (relative; multiplied by a matrix scale at the call site)
# ============================================================================

FACT_TOL = 1e-12  # LU / QR reconstruction and pivot breakdown
SING_TOL = 1e-12  # R_ii, PLU pivots and chart minors
EIG_TOL = 1e-10  # spectrum comparison
GAP_TOL = 1e-8  # minimum eigenvalue gap before DegenerateSpectrum
BLOCK_TOL = 1e-12  # off-diagonal entry treated as zero
SHIFT_TOL = 1e-10  # shift or f(lambda) treated as hitting the spectrum
DEFLATE_TOL = 1e-13  # QR trajectory convergence
STRUCTURE_TOL = 1e-10  # off-tridiagonal residue allowed in a Toda bracket

# q ratio: direct quotient above Q_RATIO_THRESHOLD * gamma, otherwise a
# central difference with step Q_RATIO_STEP * gamma
Q_RATIO_THRESHOLD = 1e-8
Q_RATIO_STEP = 1e-3

# ============================================================================
# Safety bounds
# ============================================================================

BETA_LIMIT = 1e12  # largest |beta| accepted by the inverse chart
MAX_DIMENSION = 32
FLASCHKA_EXP_LIMIT = 1400.0  # largest x_k - x_(k+1) before exp overflows
EXP_SPREAD_LIMIT = 1400.0  # largest spread of t*g(lambda) in the factorized flow
EXP_STAGE_LIMIT = 700.0  # largest spread factored in one QR stage
FORCE_EXP_LIMIT = 709.0  # largest x_k - x_(k+1) in the lattice forces exp(x_k - x_(k+1))

# ============================================================================
# Integrators and asymptotic fits
# ============================================================================

RK4_STEP = 1e-3
FORCE_TOL = 1e-10  # largest tail force accepted by fit_asymptote
TAIL_FRACTION = 0.8  # tail window is [TAIL_FRACTION * t_max, t_max]
SCATTER_TMAX = 30.0

# ============================================================================
# Output
# ============================================================================

MESH_GRID = 41
MESH_RANGE = 3.0
MESH_OUTPUT = "isoatlas_mesh.obj"
CSV_BUFFER_ROWS = 500  # rows held before a CSV flush
TODA_TMAX = 5.0
TODA_STEPS = 50
QR_STEPS = 50


def tol_scale():
    """
    Read the tolerance scale from ISOATLAS_TOL.

    Returns:
        float: Positive scale factor, 1.0 when unset or unreadable
    """
    raw = os.environ.get("ISOATLAS_TOL")
    if raw is None or not raw.strip():
        return 1.0
    try:
        value = float(raw)
    except ValueError:
        logger.warning(f"Ignoring ISOATLAS_TOL={raw!r}: not a number")
        return 1.0
    if not value > 0 or value == float("inf"):
        logger.warning(f"Ignoring ISOATLAS_TOL={raw!r}: must be positive and finite")
        return 1.0
    return value


def scaled(tol, scale=1.0):
    """Tolerance `tol` relative to `scale`, with the ISOATLAS_TOL factor applied."""
    return tol * tol_scale() * max(float(scale), sys.float_info.min)


def setup_logging(verbose=False):
    """Configure logging on stderr (stdout carries JSON and CSV output)."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(levelname)s: %(message)s',
        stream=sys.stderr,
    )
    return logging.getLogger("isoatlas")

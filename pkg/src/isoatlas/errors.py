"""
Exception hierarchy. Each class carries the exit code the CLI reports for it.
"""


class IsoAtlasError(Exception):
    """Base class for every failure raised by isoatlas."""

    exit_code = 1


class ParseError(IsoAtlasError, ValueError):
    """Malformed input document or command-line option."""

    exit_code = 2


class DegenerateSpectrum(IsoAtlasError):
    """Two eigenvalues closer than the gap tolerance."""

    exit_code = 3


class DegenerateVelocities(IsoAtlasError):
    """Two asymptotic velocities coincide."""

    exit_code = 3


class SpectrumMismatch(IsoAtlasError):
    """Matrix spectrum differs from the declared spectrum."""

    exit_code = 4


class NotInChart(IsoAtlasError):
    """Matrix lies outside the requested chart domain."""

    exit_code = 4


class NotJacobi(IsoAtlasError):
    """An off-diagonal entry is not strictly positive."""

    exit_code = 4


class ShiftOnSpectrum(IsoAtlasError):
    """Shift function vanishes (numerically) on the spectrum."""

    exit_code = 5


class OutsideDomain(IsoAtlasError):
    """Shift hits an eigenvalue other than the one the chart allows."""

    exit_code = 5


class InstantWin(OutsideDomain):
    """
    Rayleigh shift equals an eigenvalue but no chart with that eigenvalue in
    the last position contains the matrix. T[n, n] is then an eigenvalue.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class FlowOverflow(IsoAtlasError, OverflowError):
    """Exponent or coordinate beyond the representable range."""

    exit_code = 6


class UnsupportedDimension(IsoAtlasError):
    """Dimension outside what the operation supports."""

    exit_code = 7


class SingularMatrix(IsoAtlasError):
    """Factorization met a (numerically) singular matrix."""

    exit_code = 1


class PivotBreakdown(IsoAtlasError):
    """Unpivoted elimination met a vanishing leading minor."""

    exit_code = 1


class StructureViolation(IsoAtlasError):
    """A result that must be symmetric tridiagonal is not."""

    exit_code = 1


class TailNotFree(IsoAtlasError):
    """Trajectory tail still feels inter-particle forces above tolerance."""

    exit_code = 1

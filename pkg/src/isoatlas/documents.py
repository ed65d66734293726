"""
Input documents, option parsers and output writers for the CLI.

Matrices and reports travel as JSON (floats written with repr, which
round-trips every finite double); trajectories as CSV with 17 significant
digits, buffered and flushed in blocks.
"""

import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config
from .charts import Spectrum
from .core_linalg import Permutation, SymTridiagonal
from .errors import IsoAtlasError, ParseError
from .qr_dynamics import ShiftFunction
from .toda import ParticleState

logger = logging.getLogger(__name__)

RAYLEIGH = "rayleigh"


# ============================================================================
# Documents
# ============================================================================


@dataclass(eq=False)
class MatrixDocument:
    """A symmetric tridiagonal matrix with optional spectrum, chart and coordinates."""

    matrix: SymTridiagonal
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        doc = {
            "n": self.matrix.n,
            "diag": [float(v) for v in self.matrix.diag],
            "off": [float(v) for v in self.matrix.off],
        }
        if self.metadata:
            doc["metadata"] = self.metadata
        return doc

    @classmethod
    def from_dict(cls, doc):
        """
        Build from parsed JSON.

        Raises:
            ParseError: missing keys, wrong lengths or non-numeric entries
        """
        if not isinstance(doc, dict):
            raise ParseError("Matrix document must be a JSON object")
        try:
            diag = [float(v) for v in doc["diag"]]
            off = [float(v) for v in doc.get("off", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"Matrix document needs numeric 'diag' and 'off' lists: {e}") from e
        if "n" in doc and doc["n"] != len(diag):
            raise ParseError(f"'n' = {doc['n']} but 'diag' has {len(diag)} entries")
        try:
            matrix = SymTridiagonal(diag, off)
        except ValueError as e:
            raise ParseError(str(e)) from e
        metadata = doc.get("metadata") or {}
        if not isinstance(metadata, dict):
            raise ParseError("'metadata' must be a JSON object")
        return cls(matrix, metadata)

    def spectrum(self):
        """Declared spectrum from metadata, or None."""
        if "spectrum" not in self.metadata:
            return None
        try:
            return Spectrum(sorted(float(v) for v in self.metadata["spectrum"]))
        except (TypeError, ValueError) as e:
            raise ParseError(f"Bad metadata spectrum: {e}") from e

    def permutation(self):
        if "pi" not in self.metadata:
            return None
        return parse_permutation(self.metadata["pi"])


def particle_to_dict(p):
    return {"x": [float(v) for v in p.x], "y": [float(v) for v in p.y]}


def particle_from_dict(doc):
    try:
        return ParticleState.centered([float(v) for v in doc["x"]], [float(v) for v in doc["y"]])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Particle document needs numeric 'x' and 'y' lists: {e}") from e


def read_json(path):
    """Parse JSON from a path, or stdin for '-'."""
    try:
        if str(path) == "-":
            return json.load(sys.stdin)
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ParseError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Malformed JSON in {path}: {e}") from e


def load_matrix(path):
    return MatrixDocument.from_dict(read_json(path))


def load_state(path):
    """A particle document ({"x", "y"}) or a matrix document."""
    doc = read_json(path)
    if isinstance(doc, dict) and "x" in doc:
        return particle_from_dict(doc)
    return MatrixDocument.from_dict(doc)


def dumps(report):
    return json.dumps(report, indent=2, allow_nan=False)


def write_report(report, output=None):
    """Write a JSON report to `output` or stdout."""
    text = dumps(report) + "\n"
    if output is None or str(output) == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


# ============================================================================
# Option parsers
# ============================================================================


def parse_floats(text, name="values"):
    try:
        values = [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError as e:
        raise ParseError(f"Bad {name} {text!r}: {e}") from e
    if not values or not np.all(np.isfinite(values)):
        raise ParseError(f"Bad {name} {text!r}: need finite comma-separated numbers")
    return values


def parse_permutation(text):
    """One-based images, e.g. "3,1,2" or [3, 1, 2]."""
    try:
        images = text if isinstance(text, (list, tuple)) else str(text).split(",")
        return Permutation.from_one_based(int(v) for v in images)
    except (TypeError, ValueError) as e:
        raise ParseError(f"Bad permutation {text!r}: {e}") from e


def parse_spectrum(text):
    try:
        return Spectrum(sorted(parse_floats(text, "spectrum")))
    except ValueError as e:
        raise ParseError(f"Bad spectrum {text!r}: {e}") from e


def parse_shift(text):
    """identity | s=VALUE | shift=VALUE | rayleigh; returns a ShiftFunction or RAYLEIGH."""
    text = str(text).strip()
    if text == "identity":
        return ShiftFunction.identity()
    if text == RAYLEIGH:
        return RAYLEIGH
    key, sep, value = text.partition("=")
    if sep and key in ("s", "shift"):
        return ShiftFunction.shift(parse_floats(value, "shift")[0])
    raise ParseError(f"Bad shift spec {text!r}: use identity, s=VALUE or rayleigh")


def parse_generator(text):
    """id | square | table=v1,...,vn."""
    text = str(text).strip()
    if text in ("id", "identity"):
        return ShiftFunction.identity()
    if text == "square":
        return ShiftFunction.square()
    key, sep, value = text.partition("=")
    if sep and key == "table":
        return ShiftFunction.table(parse_floats(value, "table"))
    raise ParseError(f"Bad generator {text!r}: use id, square or table=v1,...,vn")


# ============================================================================
# Buffered CSV trajectory writer
# ============================================================================


class TrajectoryWriter:
    """
    Buffered CSV writer for trajectory rows.

    Rows are held in memory and written every CSV_BUFFER_ROWS rows and on
    close, so an exception mid-run still flushes what was computed.
    """

    def __init__(self, fieldnames, output=None, buffer_rows=None):
        self.fieldnames = list(fieldnames)
        self.buffer = []
        self.buffer_rows = buffer_rows or config.CSV_BUFFER_ROWS
        self.rows_written = 0
        self._owns_stream = output is not None and str(output) != "-"
        self.stream = open(output, "w", newline="") if self._owns_stream else sys.stdout
        self.writer = csv.DictWriter(self.stream, fieldnames=self.fieldnames)
        self.writer.writeheader()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
        return False

    @staticmethod
    def _format(value):
        if isinstance(value, float):
            return f"{value:.17g}"
        return value

    def write_row(self, row):
        self.buffer.append({k: self._format(v) for k, v in row.items()})
        if len(self.buffer) >= self.buffer_rows:
            self._write_buffer()

    def _write_buffer(self):
        if not self.buffer:
            return
        try:
            self.writer.writerows(self.buffer)
            self.stream.flush()
        except OSError as e:
            raise IsoAtlasError(f"CSV write error: {e}") from e
        self.rows_written += len(self.buffer)
        logger.debug(f"Wrote {len(self.buffer)} rows (total {self.rows_written})")
        self.buffer.clear()

    def close(self):
        try:
            self._write_buffer()
        finally:
            if self._owns_stream:
                self.stream.close()

"""
Surface mesh of the n = 3 isospectral manifold
==============================================

The six charts of a 3 x 3 spectrum each contribute a quad grid centered at a
diagonal matrix Lambda^pi. Every grid point phi_pi(beta_1, beta_2) is written
in an orthonormal basis (trace inner product) of the trace-zero symmetric
tridiagonal matrices, normalized to the unit 3-sphere and projected
stereographically to R^3.

Output is a Wavefront OBJ file with one object per chart and a CSV sidecar of
per-vertex attributes.
"""

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config
from .charts import phi, sign_sequence
from .core_linalg import Permutation
from .errors import FlowOverflow, UnsupportedDimension

logger = logging.getLogger(__name__)

ATTRIBUTE_FIELDNAMES = [
    "vertex",
    "pi",
    "beta1",
    "beta2",
    "signseq",
    "trace",
    "frob",
    "a1",
    "a2",
    "a3",
    "b1",
    "b2",
]


@dataclass(eq=False)
class MeshDocument:
    """Vertices in R^3, 0-based quad faces, per-vertex attribute rows, chart patches."""

    vertices: np.ndarray
    faces: list = field(default_factory=list)
    attributes: list = field(default_factory=list)
    patches: list = field(default_factory=list)  # (Permutation, first vertex, end vertex)

    def __post_init__(self):
        count = len(self.vertices)
        for face in self.faces:
            if min(face) < 0 or max(face) >= count:
                raise ValueError(f"Face {face} references a missing vertex")


def trace_zero_basis(n):
    """
    Orthonormal basis under <A, B> = tr(AB) of trace-zero symmetric
    tridiagonal n x n matrices: Gram-Schmidt on the diagonal deviations
    E_ii - I/n, then (E_(i+1,i) + E_(i,i+1)) / sqrt(2).
    """
    deviations = np.eye(n)[:, : n - 1] - 1.0 / n
    diagonal_part, _ = np.linalg.qr(deviations)
    basis = [np.diag(column) for column in diagonal_part.T]
    for i in range(n - 1):
        B = np.zeros((n, n))
        B[i + 1, i] = B[i, i + 1] = 1.0 / np.sqrt(2.0)
        basis.append(B)
    return basis


def embed(T, basis):
    """Coordinates tr(B_k T) of T in the trace-zero basis."""
    dense = T.dense()
    return np.array([np.sum(B * dense) for B in basis])


def stereographic(u, pole):
    """Project the unit vector u from `pole` onto the hyperplane orthogonal to it."""
    complement, _ = np.linalg.qr(np.column_stack([pole, np.eye(pole.size)]))
    tangent = complement[:, 1:pole.size]
    denominator = 1.0 - float(u @ pole)
    if denominator <= 1e-12:
        raise FlowOverflow("Vertex sits at the projection pole")
    return (tangent.T @ u) / denominator


def build_mesh(spectrum, grid=None, beta_range=None):
    """
    Quad grids phi_pi([-R, R]^2) for the six charts of a 3 x 3 spectrum.

    Raises:
        UnsupportedDimension: n != 3
    """
    if spectrum.n != 3:
        raise UnsupportedDimension(f"Mesh emission needs n = 3, got n = {spectrum.n}")
    grid = config.MESH_GRID if grid is None else int(grid)
    beta_range = config.MESH_RANGE if beta_range is None else float(beta_range)
    if grid < 2 or not beta_range > 0.0:
        raise ValueError("Mesh needs grid >= 2 and a positive beta range")

    basis = trace_zero_basis(3)
    center = embed(spectrum.permuted(Permutation.identity(3)).diagonal_matrix(), basis)
    pole = -center / np.linalg.norm(center)
    betas = np.linspace(-beta_range, beta_range, grid)

    vertices, faces, attributes, patches = [], [], [], []
    for images in itertools.permutations(range(3)):
        pi = Permutation(images)
        first = len(vertices)
        for b1 in betas:
            for b2 in betas:
                T = phi(spectrum, pi, (b1, b2))
                coords = embed(T, basis)
                vertices.append(stereographic(coords / np.linalg.norm(coords), pole))
                attributes.append(
                    {
                        "vertex": len(vertices),
                        "pi": str(pi),
                        "beta1": b1,
                        "beta2": b2,
                        "signseq": "".join("+-0"[(1, -1, 0).index(s)] for s in sign_sequence(T)),
                        "trace": T.trace(),
                        "frob": T.norm() ** 2,
                        "a1": T.diag[0],
                        "a2": T.diag[1],
                        "a3": T.diag[2],
                        "b1": T.off[0],
                        "b2": T.off[1],
                    }
                )
        for i in range(grid - 1):
            for j in range(grid - 1):
                v = first + i * grid + j
                faces.append((v, v + grid, v + grid + 1, v + 1))
        patches.append((pi, first, len(vertices)))
    logger.debug(f"build_mesh: {len(vertices)} vertices, {len(faces)} faces")
    return MeshDocument(np.array(vertices), faces, attributes, patches)


def write_obj(mesh, path):
    """Wavefront OBJ, one object per chart patch, 1-based indices."""
    path = Path(path)
    with open(path, "w") as f:
        f.write("# isoatlas: stereographic image of the n=3 isospectral manifold\n")
        for pi, first, end in mesh.patches:
            f.write(f"o chart_{str(pi).replace(',', '_')}\n")
            for x, y, z in mesh.vertices[first:end]:
                f.write("v " + " ".join(repr(float(c)) for c in (x, y, z)) + "\n")
            for face in mesh.faces:
                if first <= face[0] < end:
                    f.write("f " + " ".join(str(v + 1) for v in face) + "\n")
    return path


def write_attributes(mesh, path):
    """CSV sidecar keyed by 1-based vertex number."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ATTRIBUTE_FIELDNAMES)
        writer.writeheader()
        for row in mesh.attributes:
            writer.writerow(
                {k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()}
            )
    return path


def sidecar_path(obj_path):
    obj_path = Path(obj_path)
    return obj_path.with_name(obj_path.stem + ".attrs.csv")

"""End-to-end tests of the isoatlas subcommands through main()."""

import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from isoatlas import config
from isoatlas.charts import Spectrum, phi
from isoatlas.cli import main
from isoatlas.core_linalg import Permutation, SymTridiagonal
from isoatlas.documents import MatrixDocument

SPECTRUM_457 = Spectrum((4.0, 5.0, 7.0))


@pytest.fixture
def write_matrix(tmp_path):
    """Write a matrix document and return its path."""

    def write(T, name="input.json", metadata=None):
        path = tmp_path / name
        path.write_text(json.dumps(MatrixDocument(T, metadata or {}).to_dict()))
        return str(path)

    return write


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def read_report(path):
    with open(path) as f:
        return json.load(f)


# ============================================================================
# eigen
# ============================================================================


def test_eigen_reports_spectrum(write_matrix, capsys):
    T = phi(SPECTRUM_457, Permutation.identity(3), (1.0, 1.0))
    assert main(["eigen", "--input", write_matrix(T)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert_allclose(report["eigenvalues"], [4.0, 5.0, 7.0], atol=1e-12)
    assert report["gap"] == pytest.approx(1.0)
    assert report["jacobi"] is True
    assert len(report["norming_constants"]) == 3
    assert report["residual"] <= 1e-12


def test_eigen_swap_norming_constants(write_matrix, tmp_path):
    output = tmp_path / "out.json"
    assert main(["eigen", "--input", write_matrix(SymTridiagonal((0.0, 0.0), (1.0,))), "--output", str(output)]) == 0
    report = read_report(output)
    assert_allclose(report["norming_constants"], [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-15)
    assert_allclose(report["moment_map"], [0.0, 0.0], atol=1e-15)


def test_eigen_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert main(["eigen", "--input", str(bad)]) == 2
    assert main(["eigen"]) == 2


# ============================================================================
# chart
# ============================================================================


def test_chart_forward_at_vertex(write_matrix, tmp_path):
    output = tmp_path / "chart.json"
    path = write_matrix(SymTridiagonal.diagonal((7.0, 4.0, 5.0)))
    assert main(["chart", "--input", path, "--pi", "3,1,2", "--output", str(output)]) == 0
    report = read_report(output)
    assert report["mode"] == "forward"
    assert report["pi"] == "3,1,2"
    assert_allclose(report["beta"], [0.0, 0.0], atol=1e-14)
    assert report["sign_sequence"] == [0, 0]


def test_chart_forward_picks_a_chart(write_matrix, tmp_path):
    output = tmp_path / "chart.json"
    T = phi(SPECTRUM_457, Permutation.identity(3), (0.7, -1.2))
    assert main(["chart", "--input", write_matrix(T), "--output", str(output)]) == 0
    report = read_report(output)
    assert report["residual"] <= 1e-12


def test_chart_inverse_mode(tmp_path):
    output = tmp_path / "chart.json"
    argv = ["chart", "--beta", "0.5,-1", "--spectrum", "4,5,7", "--pi", "3,1,2", "--output", str(output)]
    assert main(argv) == 0
    report = read_report(output)
    assert report["mode"] == "inverse"
    T = MatrixDocument.from_dict(report["matrix"]).matrix
    expected = phi(SPECTRUM_457, Permutation.from_one_based((3, 1, 2)), (0.5, -1.0))
    assert T.max_abs_diff(expected) <= 1e-15
    assert report["residual"] <= 1e-12


def test_chart_exit_codes(write_matrix):
    path = write_matrix(SymTridiagonal.diagonal((7.0, 4.0, 5.0)))
    assert main(["chart", "--input", path, "--pi", "1,2,3"]) == 4
    assert main(["chart", "--beta", "1e13,1", "--spectrum", "4,5,7"]) == 6
    assert main(["chart", "--beta", "1,1"]) == 2
    assert main(["chart", "--input", path, "--spectrum", "1,2,3"]) == 4


# ============================================================================
# qr
# ============================================================================


def test_qr_fixes_diagonal(write_matrix, tmp_path):
    output = tmp_path / "qr.csv"
    path = write_matrix(SymTridiagonal.diagonal((2.0, 4.0, 1.0)))
    assert main(["qr", "--input", path, "--output", str(output)]) == 0
    rows = read_csv(output)
    assert len(rows) == 1
    assert rows[0]["status"] == "converged"
    assert list(rows[0]) == ["k", "b1", "b2", "measure", "status"]


def test_qr_shift_on_eigenvalue_deflates(write_matrix, tmp_path):
    output = tmp_path / "qr.csv"
    path = write_matrix(phi(SPECTRUM_457, Permutation.identity(3), (1.0, 1.0)))
    assert main(["qr", "--input", path, "--shift", "s=4", "--steps", "1", "--output", str(output)]) == 0
    rows = read_csv(output)
    assert len(rows) == 2
    assert abs(float(rows[1]["b2"])) <= 1e-14


def test_qr_rayleigh(write_matrix, tmp_path):
    output = tmp_path / "qr.csv"
    path = write_matrix(phi(SPECTRUM_457, Permutation.identity(3), (0.5, 0.3)))
    assert main(["qr", "--input", path, "--shift", "rayleigh", "--output", str(output)]) == 0
    rows = read_csv(output)
    assert rows[-1]["status"] == "deflated"
    assert all(row["status"] == "" for row in rows[:-1])


def test_qr_identity_with_zero_eigenvalue(write_matrix):
    # eigenvalues 0 and 2
    path = write_matrix(SymTridiagonal((1.0, 1.0), (1.0,)))
    assert main(["qr", "--input", path]) == 5


def test_qr_bad_shift(write_matrix):
    path = write_matrix(SymTridiagonal((1.0, 1.0), (1.0,)))
    assert main(["qr", "--input", path, "--shift", "wilkinson"]) == 2


# ============================================================================
# toda
# ============================================================================


def test_toda_cross_checks(write_matrix, tmp_path):
    output = tmp_path / "toda.csv"
    path = write_matrix(phi(SPECTRUM_457, Permutation.identity(3), (1.0, 1.0)))
    assert main(["toda", "--input", path, "--tmax", "1", "--steps", "5", "--output", str(output)]) == 0
    rows = read_csv(output)
    assert len(rows) == 6
    assert float(rows[-1]["t"]) == 1.0
    for row in rows:
        assert float(row["chart_delta"]) <= 1e-6
        assert float(row["rk4_delta"]) <= 1e-6
        assert float(row["a1"]) + float(row["a2"]) + float(row["a3"]) == pytest.approx(16.0)


def test_toda_square_generator_five_particles(write_matrix, tmp_path):
    spectrum = Spectrum((-0.52, 0.12, 0.94, 1.79, 2.44))
    T0 = phi(spectrum, Permutation.identity(5), (0.3, 1.0, 0.5, 0.5))
    output = tmp_path / "toda.csv"
    assert main(["toda", "--input", write_matrix(T0), "--g", "square", "--steps", "5", "--output", str(output)]) == 0
    for row in read_csv(output):
        assert float(row["chart_delta"]) <= 1e-6
        assert float(row["rk4_delta"]) <= 1e-6


def test_toda_from_particle_state(tmp_path):
    state = tmp_path / "state.json"
    state.write_text(json.dumps({"x": [1.0, 0.0, -1.0], "y": [0.2, 0.0, -0.2]}))
    output = tmp_path / "toda.csv"
    argv = ["toda", "--input", str(state), "--g", "square", "--tmax", "0.5", "--steps", "2", "--output", str(output)]
    assert main(argv) == 0
    assert len(read_csv(output)) == 3


# ============================================================================
# scatter
# ============================================================================


def test_scatter_default_lattice(tmp_path):
    output = tmp_path / "scatter.json"
    assert main(["scatter", "--output", str(output)]) == 0
    report = read_report(output)
    assert report["n"] == 3
    assert report["tmax"] == pytest.approx(30.0)
    assert len(report["state"]["x"]) == len(report["state"]["y"]) == 3
    deltas = report["deltas"]
    assert deltas["scattering_vs_wave"] <= 1e-8
    assert deltas["fit_minus_vs_wave"] <= 1e-3
    assert deltas["fit_plus_vs_wave"] <= 1e-3
    assert abs(report["wave_minus"]["sum_d"]) <= 1e-9


def test_scatter_rejects_non_jacobi(write_matrix):
    path = write_matrix(SymTridiagonal((0.0, 0.0), (-1.0,)))
    assert main(["scatter", "--input", path]) == 4


def test_scatter_short_horizon_is_a_numerical_failure():
    # forces are still of order one at t = 0.5
    assert main(["scatter", "--tmax", "0.5"]) == 1


# ============================================================================
# mesh
# ============================================================================


def test_mesh_writes_obj_and_sidecar(tmp_path):
    output = tmp_path / "surface.obj"
    assert main(["mesh", "--grid", "5", "--output", str(output)]) == 0
    assert output.exists()
    rows = read_csv(tmp_path / "surface.attrs.csv")
    assert len(rows) == 150


def test_mesh_needs_three_eigenvalues(tmp_path):
    assert main(["mesh", "--spectrum", "1,2", "--output", str(tmp_path / "m.obj")]) == 7


# ============================================================================
# Parser and configuration
# ============================================================================


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_tol_scale(monkeypatch):
    monkeypatch.delenv("ISOATLAS_TOL", raising=False)
    assert config.tol_scale() == 1.0
    monkeypatch.setenv("ISOATLAS_TOL", "10")
    assert config.tol_scale() == 10.0
    assert config.scaled(1e-12, 2.0) == pytest.approx(2e-11)
    for raw in ("abc", "-1", "inf"):
        monkeypatch.setenv("ISOATLAS_TOL", raw)
        assert config.tol_scale() == 1.0

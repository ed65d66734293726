"""Tests for QR steps, the shifted and Rayleigh steps, and deflation."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from isoatlas.charts import ChartPoint, Spectrum, phi, psi
from isoatlas.core_linalg import Permutation, SymTridiagonal
from isoatlas.errors import InstantWin, OutsideDomain, ShiftOnSpectrum
from isoatlas.qr_dynamics import (
    STATUS_CONVERGED,
    STATUS_DEFLATED,
    STATUS_INSTANT_WIN,
    ShiftFunction,
    asymptotic_beta,
    cubic_rate_fit,
    limit_permutation,
    qr_step_chart,
    qr_step_matrix,
    rayleigh_step,
    run_qr,
    run_rayleigh,
    shifted_step,
    shifted_step_matrix,
)

SPECTRUM_124 = Spectrum((1.0, 2.0, 4.0))


# ============================================================================
# Shift functions
# ============================================================================


def test_shift_function_values():
    lambdas = np.array([1.0, 2.0, 4.0])
    assert_allclose(ShiftFunction.identity().evaluate(lambdas), lambdas)
    assert_allclose(ShiftFunction.shift(2.5).evaluate(lambdas), [-1.5, -0.5, 1.5])
    assert_allclose(ShiftFunction.square().evaluate(lambdas), [1.0, 4.0, 16.0])
    assert_allclose(ShiftFunction.exponential(0.5).evaluate(lambdas), np.exp(0.5 * lambdas))
    assert_allclose(ShiftFunction.exponential(1e4).log_abs(lambdas), 1e4 * lambdas)
    assert_allclose(ShiftFunction.table((3.0, -1.0, 2.0)).evaluate(lambdas), [3.0, -1.0, 2.0])
    assert str(ShiftFunction.shift(2.5)) == "shift=2.5"


def test_shift_function_validation():
    with pytest.raises(ValueError):
        ShiftFunction("cubic")
    with pytest.raises(ValueError):
        ShiftFunction.table((1.0, 2.0)).evaluate(np.array([1.0, 2.0, 3.0]))


# ============================================================================
# Single steps
# ============================================================================


def test_step_fixes_vertices():
    T = SymTridiagonal.diagonal((4.0, 1.0, 2.0))
    for f in (ShiftFunction.identity(), ShiftFunction.shift(3.0), ShiftFunction.square()):
        assert qr_step_matrix(T, f).max_abs_diff(T) <= 1e-14


def test_identity_step_fixes_swap(swap2):
    assert qr_step_matrix(swap2, ShiftFunction.identity()).max_abs_diff(swap2) <= 1e-14


def test_constant_modulus_step_is_trivial(make_jacobi):
    T = make_jacobi(3)
    f = ShiftFunction.table((1.0, -1.0, 1.0))
    assert qr_step_matrix(T, f).max_abs_diff(T) <= 1e-12


def test_step_on_spectrum_raises():
    T = phi(SPECTRUM_124, Permutation.identity(3), (0.5, 0.5))
    with pytest.raises(ShiftOnSpectrum):
        qr_step_matrix(T, ShiftFunction.shift(2.0))
    with pytest.raises(ShiftOnSpectrum):
        qr_step_chart(SPECTRUM_124, ChartPoint(Permutation.identity(3), (0.5, 0.5)), ShiftFunction.shift(4.0))


def test_chart_step_example(spectrum457):
    point = ChartPoint(Permutation.identity(3), (0.8, -1.1))
    stepped = qr_step_chart(spectrum457, point, ShiftFunction.identity())
    assert_allclose(stepped.beta, [5.0 / 4.0 * 0.8, 7.0 / 5.0 * -1.1])
    zero = ChartPoint(Permutation.identity(3), (0.0, 0.0))
    assert_allclose(qr_step_chart(spectrum457, zero, ShiftFunction.identity()).beta, 0.0)


@pytest.mark.parametrize(
    "f",
    [
        ShiftFunction.identity(),
        ShiftFunction.shift(2.7),
        ShiftFunction.shift(-0.4),
        ShiftFunction.exponential(0.6),
        ShiftFunction.square(),
    ],
    ids=str,
)
def test_commuting_diagram(f, make_permutation, rng):
    spectrum = Spectrum((0.5, 1.5, 3.0, 4.2))
    for _ in range(25):
        pi = make_permutation(4)
        beta = rng.uniform(-2.0, 2.0, size=3)
        T = phi(spectrum, pi, beta)
        expected = qr_step_chart(spectrum, ChartPoint(pi, beta), f).beta
        assert_allclose(psi(spectrum, pi, qr_step_matrix(T, f)).beta, expected, atol=1e-8, rtol=1e-8)


def test_chart_steps_compose(spectrum457, rng):
    point = ChartPoint(Permutation.from_one_based((2, 3, 1)), rng.uniform(-2, 2, size=2))
    f = ShiftFunction.shift(4.6)
    g = ShiftFunction.square()
    product = ShiftFunction.table(f.evaluate(spectrum457.lambdas) * g.evaluate(spectrum457.lambdas))
    twice = qr_step_chart(spectrum457, qr_step_chart(spectrum457, point, f), g)
    once = qr_step_chart(spectrum457, point, product)
    assert_allclose(twice.beta, once.beta, rtol=1e-13)


def test_shifted_step_on_last_eigenvalue_deflates(spectrum457, pi312):
    point = ChartPoint(pi312, (1.2, -0.7))
    stepped = shifted_step(spectrum457, pi312, point, 5.0)
    assert stepped.beta[-1] == 0.0
    T = phi(spectrum457, pi312, stepped.beta)
    assert T.off[-1] == pytest.approx(0.0, abs=1e-15)
    assert T.diag[-1] == pytest.approx(5.0, abs=1e-12)


def test_shifted_step_far_shift_keeps_vertex(spectrum457, pi312):
    zero = ChartPoint(pi312, (0.0, 0.0))
    assert_allclose(shifted_step(spectrum457, pi312, zero, 100.0).beta, 0.0)


def test_shifted_step_outside_domain(spectrum457, pi312):
    with pytest.raises(OutsideDomain):
        shifted_step(spectrum457, pi312, ChartPoint(pi312, (1.0, 1.0)), 7.0)


def test_shifted_step_matches_matrix_step(spectrum457, pi312, rng):
    for s in (3.3, 4.4, 6.1, 9.0):
        beta = rng.uniform(-2, 2, size=2)
        T = phi(spectrum457, pi312, beta)
        stepped = shifted_step(spectrum457, pi312, ChartPoint(pi312, beta), s)
        T_step = qr_step_matrix(T, ShiftFunction.shift(s))
        assert T_step.max_abs_diff(phi(spectrum457, pi312, stepped.beta)) <= 1e-8


def test_shifted_step_matrix_on_spectrum(spectrum457):
    T = phi(spectrum457, Permutation.identity(3), (0.9, 1.4))
    stepped, point = shifted_step_matrix(spectrum457, T, 4.0)
    assert point.pi(2) == 0
    assert abs(stepped.off[-1]) <= 1e-14
    assert stepped.diag[-1] == pytest.approx(4.0, abs=1e-12)


def test_shifted_step_matrix_outside_domain(spectrum457):
    T = SymTridiagonal((7.0, 4.5, 4.5), (0.0, 0.5))
    with pytest.raises(OutsideDomain):
        shifted_step_matrix(spectrum457, T, 7.0)


# ============================================================================
# Rayleigh step
# ============================================================================


def test_rayleigh_step_already_deflated(spectrum457):
    T = SymTridiagonal((4.5, 4.5, 7.0), (0.5, 0.0))
    result = rayleigh_step(spectrum457, T)
    assert result.deflated
    assert result.matrix is T


def test_rayleigh_step_fixes_vertex(spectrum457, pi312):
    T = spectrum457.permuted(pi312).diagonal_matrix()
    result = rayleigh_step(spectrum457, T)
    assert result.matrix.max_abs_diff(T) == 0.0


def test_rayleigh_step_instant_win(spectrum457):
    # T[3, 3] = 5 is an eigenvalue, but 5 sits alone in the top block
    T = SymTridiagonal((5.0, 6.0, 5.0), (0.0, np.sqrt(2.0)))
    with pytest.raises(InstantWin) as info:
        rayleigh_step(spectrum457, T)
    assert info.value.eigenvalue == 5.0


def test_rayleigh_two_by_two_is_cubic():
    for eps in (1e-2, 1e-3):
        T = phi(Spectrum((-1.0, 1.0)), Permutation.identity(2), (eps,))
        result = rayleigh_step(Spectrum((-1.0, 1.0)), T)
        assert abs(result.matrix.off[-1]) <= 2.0 * abs(T.off[-1]) ** 3


def test_run_rayleigh_deflates(spectrum457):
    T0 = phi(spectrum457, Permutation.identity(3), (0.5, 0.3))
    trajectory = run_rayleigh(spectrum457, T0, 20)
    assert trajectory.status == STATUS_DEFLATED
    assert trajectory.measures[-1] <= 1e-11
    assert len(trajectory.states) <= 6


# ============================================================================
# Trajectories
# ============================================================================


def test_limit_permutation():
    f = ShiftFunction.shift(1.8)
    assert limit_permutation(SPECTRUM_124, f) == Permutation.from_one_based((3, 1, 2))
    assert limit_permutation(SPECTRUM_124, ShiftFunction.identity()) == Permutation.reversal(3)


def test_run_qr_converges_to_predicted_vertex(rng):
    f = ShiftFunction.shift(1.8)
    T0 = phi(SPECTRUM_124, Permutation.identity(3), rng.uniform(0.3, 1.5, size=2))
    trajectory = run_qr(T0, f, 200)
    assert trajectory.status == STATUS_CONVERGED
    expected = SPECTRUM_124.permuted(limit_permutation(SPECTRUM_124, f)).values
    assert_allclose(trajectory.final.diag, expected, atol=1e-10)


def test_run_qr_isospectral_and_sign_preserving(rng):
    T0 = phi(SPECTRUM_124, Permutation.identity(3), (0.9, -1.3))
    trajectory = run_qr(T0, ShiftFunction.identity(), 100)
    for T in trajectory.states:
        assert_allclose(np.linalg.eigvalsh(T.dense()), SPECTRUM_124.lambdas, atol=1e-10)
        assert np.all(np.sign(T.off) == np.sign(T0.off))


def test_run_qr_diagonal_start():
    T0 = SymTridiagonal.diagonal((2.0, 4.0, 1.0))
    trajectory = run_qr(T0, ShiftFunction.identity(), 10)
    assert trajectory.status == STATUS_CONVERGED
    assert len(trajectory.states) == 1


def test_run_qr_shift_on_spectrum_deflates_in_one_step(spectrum457):
    T0 = phi(spectrum457, Permutation.identity(3), (1.0, 1.0))
    trajectory = run_qr(T0, ShiftFunction.shift(4.0), 1)
    assert trajectory.measures[1] <= 1e-14
    assert trajectory.final.diag[-1] == pytest.approx(4.0, abs=1e-12)


def test_asymptotic_beta_recovery():
    f = ShiftFunction.identity()
    pi = limit_permutation(SPECTRUM_124, f)
    beta0 = np.array([1.5, -0.7])
    T0 = phi(SPECTRUM_124, pi, beta0)
    k = 25
    trajectory = run_qr(T0, f, k, deflate_tol=0.0)
    assert len(trajectory.states) == k + 1
    assert_allclose(asymptotic_beta(trajectory.final, k, SPECTRUM_124, pi, f), beta0, rtol=1e-2)


# ============================================================================
# Cubic deflation
# ============================================================================


@pytest.mark.parametrize(
    "lambdas",
    [(-1.0, 1.0), (4.0, 5.0, 7.0), (1.0, 2.0, 4.0, 7.0)],
    ids=["n2", "n3", "n4"],
)
def test_cubic_rate(lambdas):
    fit = cubic_rate_fit(Spectrum(lambdas), samples=4)
    assert 2.8 <= fit.slope <= 3.2
    assert fit.invariant
    assert fit.constant > 0.0


def test_cubic_rate_needs_two_eigenvalues():
    with pytest.raises(ValueError):
        cubic_rate_fit(Spectrum((1.0,)))


def test_run_rayleigh_reports_instant_win(spectrum457):
    T0 = SymTridiagonal((5.0, 6.0, 5.0), (0.0, np.sqrt(2.0)))
    trajectory = run_rayleigh(spectrum457, T0, 5)
    assert trajectory.status == STATUS_INSTANT_WIN
    assert len(trajectory.states) == 1

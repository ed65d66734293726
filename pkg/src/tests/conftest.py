"""Shared fixtures for the isoatlas test suite."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from isoatlas.charts import Spectrum  # noqa: E402
from isoatlas.core_linalg import Permutation, SymTridiagonal  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def spectrum457():
    """Lambda = diag(4, 5, 7)."""
    return Spectrum((4.0, 5.0, 7.0))


@pytest.fixture
def pi312():
    """pi(1) = 3, pi(2) = 1, pi(3) = 2, so Lambda^pi = diag(7, 4, 5)."""
    return Permutation.from_one_based((3, 1, 2))


@pytest.fixture
def swap2():
    """[[0, 1], [1, 0]], spectrum (-1, 1)."""
    return SymTridiagonal((0.0, 0.0), (1.0,))


@pytest.fixture
def make_spectrum(rng):
    """Factory for spectra of size n with gaps drawn from [0.5, 1.5]."""

    def make(n, low=-3.0):
        return Spectrum(low + np.cumsum(rng.uniform(0.5, 1.5, size=n)))

    return make


@pytest.fixture
def make_permutation(rng):
    def make(n):
        return Permutation(tuple(int(i) for i in rng.permutation(n)))

    return make


@pytest.fixture
def make_jacobi(rng):
    """Factory for random Jacobi matrices: diagonal in [-2, 2], off-diagonal in [0.5, 1.5]."""

    def make(n):
        return SymTridiagonal(rng.uniform(-2.0, 2.0, size=n), rng.uniform(0.5, 1.5, size=n - 1))

    return make

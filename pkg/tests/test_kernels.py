import importlib

import numpy as np
import pytest

from bulkedge import _accel, kernels as K
from bulkedge.chern import bloch_bands
from bulkedge.lattice import FluxSpec


@pytest.mark.parametrize("kind", ["uniform", "exponential"])
def test_filter_twins(kind):
    w = np.sort(np.random.default_rng(0).normal(size=50))
    w[3] = w[4]  # exercise the small-argument branch
    a = K.filter_matrix_numba(w, 37.0, kind)
    b = K.filter_matrix_numpy(w, 37.0, kind)
    assert np.abs(a - b).max() < 1e-12


def test_cell_pair_twins():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(36, 36)) + 1j * rng.normal(size=(36, 36))
    cells = rng.integers(0, 5, 36)
    a = K.cell_pair_sq_numba(M, cells, 5)
    assert np.allclose(a, K.cell_pair_sq_numpy(M, cells, 5))
    assert a.sum() == pytest.approx(np.sum(np.abs(M) ** 2))


def test_plaquette_twins():
    _, U = bloch_bands(FluxSpec(1, 5), 8)
    a = K.plaquette_phases_numba(U[..., :2])
    b = K.plaquette_phases_numpy(U[..., :2])
    assert np.allclose(a, b)


def test_env_flag(monkeypatch):
    monkeypatch.setenv("BULKEDGE_NUMBA", "0")
    assert not _accel.numba_enabled()
    w = np.linspace(0, 1, 5)
    assert np.allclose(K.filter_matrix(w, 2.0), K.filter_matrix_numpy(w, 2.0, "uniform"))
    monkeypatch.setenv("BULKEDGE_NUMBA", "1")
    assert _accel.numba_enabled() == _accel.HAVE_NUMBA


def test_unknown_kind():
    with pytest.raises(ValueError):
        K.filter_matrix_numba(np.zeros(2), 1.0, "box")
    with pytest.raises(ValueError):
        K.filter_matrix_numpy(np.zeros(2), 1.0, "box")

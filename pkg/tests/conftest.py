import numpy as np
import pytest

from bulkedge.lattice import DisorderSpec, FluxSpec, Geometry, ModelSpec, WallSpec, build_bulk, build_edge
from bulkedge.spectral import diagonalize


@pytest.fixture(scope="session")
def clean_torus():
    spec = ModelSpec(Geometry(18, 18), FluxSpec(1, 3))
    H = build_bulk(spec)
    return spec, H, diagonalize(H)


@pytest.fixture(scope="session")
def disordered_torus():
    spec = ModelSpec(Geometry(12, 12), FluxSpec(1, 3), DisorderSpec("electric", 1.0, seed=7))
    H = build_bulk(spec)
    return spec, H, diagonalize(H)


@pytest.fixture(scope="session")
def clean_cylinder():
    spec = ModelSpec(Geometry(18, 16, "open"), FluxSpec(1, 3), wall=WallSpec("electric", 4, 30, 2))
    H = build_edge(spec)
    return spec, H, diagonalize(H)


def lowest_gap(sd, q=3):
    w = sd.eigenvalues
    k = w.size // q
    return w[k - 1], w[k]


def random_projector(rng, n, rank):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Qm, _ = np.linalg.qr(A)
    V = Qm[:, :rank]
    return V @ V.conj().T

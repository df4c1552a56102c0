import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bulkedge.chern import bloch_hamiltonian
from bulkedge.lattice import (DisorderSpec, FluxSpec, Geometry, ModelSpec, SpecError, WallSpec,
                              apply_gauge, build_bulk, build_edge, magnetic_translate,
                              plaquette_flux, read_realization, sample_disorder,
                              write_realization)


def test_hermitian_and_coords():
    spec = ModelSpec(Geometry(6, 5, "open", "periodic"), FluxSpec(1, 3), DisorderSpec("electric", 2.0, seed=1))
    H = build_bulk(spec)
    assert np.allclose(H.entries, H.entries.conj().T)
    assert H.dim == 30
    assert tuple(H.site_coords[0]) == (-3, -2)
    assert spec.geometry.index(2, 3) == 13


def test_clean_spectrum_matches_bloch_bands():
    flux = FluxSpec(1, 3)
    geo = Geometry(6, 6)
    w = np.linalg.eigvalsh(build_bulk(ModelSpec(geo, flux)).entries)
    ref = []
    for n1 in range(geo.Lx // flux.q):
        for n2 in range(geo.Ly):
            k1 = 2 * np.pi * n1 / geo.Lx
            k2 = 2 * np.pi * n2 / geo.Ly
            ref.extend(np.linalg.eigvalsh(bloch_hamiltonian(flux, k1, k2)))
    assert np.allclose(np.sort(ref), w, atol=1e-12)


def test_zero_flux_is_free_laplacian():
    w = np.linalg.eigvalsh(build_bulk(ModelSpec(Geometry(4, 4), FluxSpec(0, 1))).entries)
    k = 2 * np.pi * np.arange(4) / 4
    ref = np.sort((4 - 2 * np.cos(k)[:, None] - 2 * np.cos(k)[None, :]).ravel())
    assert np.allclose(w, ref)


def test_uniform_plaquette_flux():
    geo = Geometry(9, 7)
    f = plaquette_flux(build_bulk(ModelSpec(geo, FluxSpec(2, 3))), geo)
    assert f.shape == (9, 7)
    assert np.allclose(f, 2 / 3)


def test_magnetic_disorder_changes_flux_but_not_density_of_bonds():
    geo = Geometry(6, 6)
    spec = ModelSpec(geo, FluxSpec(1, 3), DisorderSpec("magnetic", 0.2, seed=3))
    H = build_bulk(spec)
    assert np.allclose(np.diagonal(H.entries), 4.0)
    assert not np.allclose(plaquette_flux(H, geo), 1 / 3)


def test_iwatsuka_wall_flux_profile():
    geo = Geometry(20, 6, "open")
    wall = WallSpec("magnetic", a=3, height=0.25, width=2)
    H = build_edge(ModelSpec(geo, FluxSpec(1, 4), wall=wall))
    f = plaquette_flux(H, geo)
    x1 = geo.x1_values()[:-1] + 0.5
    expect = np.mod(0.25 + wall.profile(x1), 1.0)
    assert np.allclose(f, expect[:, None])
    assert np.allclose(np.diagonal(H.entries), 4.0)


def test_electric_wall_diagonal():
    geo = Geometry(20, 4, "open")
    wall = WallSpec("electric", a=4, height=30, width=2)
    H = build_edge(ModelSpec(geo, FluxSpec(1, 3), wall=wall))
    d = np.diagonal(H.entries).real.reshape(20, 4)
    x1 = geo.x1_values()
    assert np.allclose(d[x1 <= -6], 34.0)
    assert np.allclose(d[x1 >= -2], 4.0)


@pytest.mark.parametrize("alpha", [(3, 0), (0, 1), (3, 2), (6, 5)])
def test_magnetic_translations_commute(alpha):
    flux = FluxSpec(1, 3)
    geo = Geometry(9, 6)
    H = build_bulk(ModelSpec(geo, flux)).entries
    rng = np.random.default_rng(0)
    psi = rng.normal(size=geo.dim) + 1j * rng.normal(size=geo.dim)
    lhs = magnetic_translate(H @ psi, alpha, flux, geo)
    rhs = H @ magnetic_translate(psi, alpha, flux, geo)
    assert np.allclose(lhs, rhs)


def test_magnetic_translation_rejects_unquantized_step():
    with pytest.raises(SpecError):
        magnetic_translate(np.zeros(9 * 4), (1, 0), FluxSpec(1, 3), Geometry(9, 4))


def test_gauge_transform_preserves_spectrum():
    H = build_bulk(ModelSpec(Geometry(6, 6), FluxSpec(1, 3), DisorderSpec("electric", 1.0, seed=2)))
    ph = np.random.default_rng(1).uniform(0, 2 * np.pi, H.dim)
    H2 = apply_gauge(H, ph)
    assert np.allclose(np.linalg.eigvalsh(H.entries), np.linalg.eigvalsh(H2.entries))
    assert H2.content_hash != H.content_hash


@pytest.mark.parametrize("make", [
    lambda: build_bulk(ModelSpec(Geometry(10, 6), FluxSpec(1, 3))),
    lambda: FluxSpec(2, 4),
    lambda: FluxSpec(0, 3),
    lambda: Geometry(2, 5),
    lambda: DisorderSpec("electric", -1.0),
    lambda: ModelSpec(Geometry(10, 6), wall=WallSpec()),
    lambda: build_edge(ModelSpec(Geometry(12, 6, "open"), wall=WallSpec(a=5, width=2))),
    lambda: build_edge(ModelSpec(Geometry(12, 6, "open"))),
    lambda: build_bulk(ModelSpec(Geometry(6, 6)), realization=np.zeros(5)),
])
def test_spec_errors(make):
    with pytest.raises(SpecError):
        make()


def test_json_roundtrip_and_unknown_keys():
    spec = ModelSpec(Geometry(12, 8, "open"), FluxSpec(2, 5), DisorderSpec("magnetic", 0.3, seed=4),
                     WallSpec("magnetic", 3, 0.2, 1.5), 0.25)
    again = ModelSpec.from_json(spec.to_json())
    assert again == spec
    assert again.spec_hash() == spec.spec_hash()
    d = spec.to_dict()
    d["colour"] = "red"
    with pytest.raises(SpecError):
        ModelSpec.from_dict(d)


def test_realization_file_roundtrip(tmp_path):
    v = sample_disorder(DisorderSpec("electric", 2.0, seed=9), Geometry(5, 5))
    p = tmp_path / "v.bin"
    write_realization(p, v)
    assert np.array_equal(read_realization(p), v)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_realization(p)


def test_realization_override_is_used():
    spec = ModelSpec(Geometry(4, 4), FluxSpec(0, 1), DisorderSpec("electric", 1.0, seed=0))
    V = np.arange(16.0)
    H = build_bulk(spec, V)
    assert np.allclose(np.diagonal(H.entries).real, 4 + V)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), W=st.floats(0.01, 10.0),
       kind=st.sampled_from(["electric", "magnetic"]))
def test_disorder_draws_are_seeded_and_bounded(seed, W, kind):
    geo = Geometry(5, 4)
    spec = DisorderSpec(kind, W, seed=seed)
    a = sample_disorder(spec, geo)
    assert np.array_equal(a, sample_disorder(spec, geo))
    lo, hi = spec.bounds()
    assert a.min() >= -lo and a.max() <= hi


@settings(max_examples=20, deadline=None)
@given(W=st.floats(0.0, 3.0), seed=st.integers(0, 1000))
def test_spectrum_inside_gershgorin_bound(W, seed):
    H = build_bulk(ModelSpec(Geometry(6, 6), FluxSpec(1, 3), DisorderSpec("electric", W, seed=seed)))
    w = np.linalg.eigvalsh(H.entries)
    assert w.min() >= -1e-10 and w.max() <= 8 + W + 1e-10

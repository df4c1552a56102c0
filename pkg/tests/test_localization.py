import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bulkedge import localization as Lo
from bulkedge.lattice import DisorderSpec, FluxSpec, Geometry, ModelSpec, build_bulk
from bulkedge.spectral import diagonalize, fermi_projector, switch_values
from bulkedge.switches import SwitchProfile

from conftest import lowest_gap


@settings(max_examples=40, deadline=None)
@given(lo=st.floats(-5, 5), width=st.floats(0.01, 5), x=st.floats(-20, 20))
def test_bump(lo, width, x):
    b = Lo.EnergyBump(lo, lo + width)
    v = float(b(x))
    assert 0.0 <= v <= 1.0
    if x <= lo or x >= lo + width:
        assert v == 0.0
    assert float(b(lo + width / 2)) == pytest.approx(1.0)


def test_bump_invalid():
    with pytest.raises(ValueError):
        Lo.EnergyBump(1.0, 1.0)


def test_moment_trivial_cases(disordered_torus):
    spec, _, sd = disordered_torus
    geo = spec.geometry
    c0 = [Lo.central_site(geo)]
    assert Lo.moment(sd, geo, 0.2, 1.0, Lo.EnergyBump(50, 51), 3.0, c0) == 0.0
    # m = 0, t = 0: ||X(H) chi0||^2 <= 1 for a single site
    v = Lo.moment(sd, geo, 0.0, 1.0, Lo.EnergyBump(-1, 20), 0.0, c0)
    assert 0 < v <= 1 + 1e-12
    assert Lo.time_averaged_moment(sd, geo, 0.2, 1.0, Lo.EnergyBump(1, 3), 0.0, c0) == \
        pytest.approx(Lo.moment(sd, geo, 0.2, 1.0, Lo.EnergyBump(1, 3), 0.0, c0))


def test_exponential_kernel_matches_quadrature(disordered_torus):
    spec, _, sd = disordered_torus
    geo = spec.geometry
    c0 = [Lo.central_site(geo)]
    bump = Lo.EnergyBump(1.0, 3.0)
    T = 3.0
    t = np.linspace(0, 10 * T, 1501)
    M = np.array([Lo.moment(sd, geo, 0.3, 1.0, bump, s, c0) for s in t])
    ref = np.trapezoid(np.exp(-t / T) * M, t) / T
    got = Lo.time_averaged_moment(sd, geo, 0.3, 1.0, bump, T, c0)
    assert abs(got - ref) / ref < 0.01


def test_averaged_moment_single_realization(disordered_torus):
    spec, _, sd = disordered_torus
    c0 = [Lo.central_site(spec.geometry)]
    mean, se = Lo.averaged_moment([sd], spec.geometry, 0.2, 1.0, Lo.EnergyBump(1, 3), 10.0, c0)
    assert se == 0.0 and mean > 0


def test_clean_ballistic_growth():
    spec = ModelSpec(Geometry(16, 16), FluxSpec(0, 1))
    sd = diagonalize(build_bulk(spec))
    geo = spec.geometry
    c0 = [Lo.central_site(geo)]
    bump = Lo.EnergyBump(3.0, 5.0)
    m = [Lo.moment(sd, geo, 0.5, 1.0, bump, t, c0) for t in (0.0, 2.0, 4.0)]
    assert m[0] < m[1] < m[2]


def test_weight_overflow_rejected(clean_torus):
    spec, _, sd = clean_torus
    with pytest.raises(OverflowError, match="exponent"):
        Lo.moment(sd, spec.geometry, 200.0, 1.0, Lo.EnergyBump(1, 3), 0.0, [0])


@settings(max_examples=20, deadline=None)
@given(C=st.floats(0.1, 10), m=st.floats(0.05, 2), zeta=st.sampled_from([0.5, 0.7, 1.0]))
def test_fit_recovers_synthetic_decay(C, m, zeta):
    d = np.arange(1.0, 15.0)
    fit = Lo.fit_decay(d, C * np.exp(-m * d ** zeta), zeta="grid")
    assert fit.stretch == zeta
    assert fit.rate == pytest.approx(m, rel=1e-6)
    assert fit.prefactor == pytest.approx(C, rel=1e-6)
    assert fit.fit_residual < 1e-8


def test_fit_needs_four_points():
    with pytest.raises(ValueError):
        Lo.fit_decay([1, 2, 3, 4], [1.0, 0.5, 0.0, -1.0])


def test_projector_decay(clean_torus):
    spec, _, sd = clean_torus
    geo = spec.geometry
    P = fermi_projector(sd, 0.5 * sum(lowest_gap(sd)))
    fit, rows = Lo.projector_kernel_decay(P, geo)
    assert fit.rate > 0.3 and fit.stretch == 1.0
    again, _ = Lo.projector_kernel_decay(P, geo)
    assert again == fit
    assert all(r[2] > 0 for r in rows)
    # identity: no off-diagonal blocks at all
    fit_id, rows_id = Lo.projector_kernel_decay(np.eye(geo.dim), geo)
    assert fit_id.degenerate and rows_id == []


def test_profile_csv(tmp_path, clean_torus):
    spec, _, sd = clean_torus
    P = fermi_projector(sd, 0.5 * sum(lowest_gap(sd)))
    _, rows = Lo.projector_kernel_decay(P, spec.geometry)
    p = tmp_path / "prof.csv"
    Lo.write_profile_csv(p, rows)
    assert p.read_text().splitlines()[0] == "distance_bin,mean_lognorm,count"


def test_commutator_decay(clean_torus):
    spec, _, sd = clean_torus
    geo = spec.geometry
    P = fermi_projector(sd, 0.5 * sum(lowest_gap(sd)))
    L2 = switch_values(SwitchProfile(0.0, 1.0), "x2", geo)
    fit, _ = Lo.commutator_kernel_decay(P, L2, geo)
    assert not fit.degenerate
    assert fit.extra["rate_x1"] > 0 and fit.extra["rate_x2"] > 0 and fit.extra["rate_y2"] > 0
    fit0, _ = Lo.commutator_kernel_decay(P, np.ones(geo.dim), geo)
    assert fit0.degenerate
    # blocks far from the step on the same side vanish
    C = P * L2[None, :] - L2[:, None] * P
    x2 = geo.coords()[:, 1]
    far = (x2 >= 2) & (x2 <= 6)
    assert np.abs(C[np.ix_(far, far)]).max() < 1e-12


def test_combes_thomas(disordered_torus):
    spec, H, sd = disordered_torus
    lo = sd.eigenvalues[0]
    rows, mono = Lo.combes_thomas_check(H, spec.geometry, [lo - e for e in (0.2, 0.5, 1.0, 2.0)])
    assert mono
    assert [r["eta"] for r in rows] == pytest.approx([0.2, 0.5, 1.0, 2.0])
    with pytest.raises(ValueError):
        Lo.combes_thomas_check(H, spec.geometry, [sd.eigenvalues[3]])


def test_cell_layout_periodic_distance():
    geo = Geometry(12, 12)
    d1, d2 = Lo.cell_distances(geo, 3)
    assert d1.shape == (16, 16)
    # in site units, wrapping around
    assert d1.max() == 6 and d2.max() == 6

import json

import numpy as np
import pytest

from bulkedge import conductance as C
from bulkedge.lattice import DisorderSpec, FluxSpec, Geometry, ModelSpec, WallSpec, build_edge
from bulkedge.spectral import diagonalize, fermi_projector, switch_values
from bulkedge.switches import SwitchProfile

from conftest import lowest_gap, random_projector

L = SwitchProfile(0.0, 1.0)


def _switches(geo):
    return switch_values(L, "x1", geo), switch_values(L, "x2", geo)


def test_windows():
    geo = Geometry(12, 8)
    q = C.bulk_window(geo)
    c = geo.coords()
    assert np.array_equal(q > 0, (np.abs(c[:, 0]) < 3) & (np.abs(c[:, 1]) < 2))
    s = C.strip_window(geo, 0.5)
    assert np.array_equal(s > 0, np.abs(c[:, 1]) < 4)
    assert C.central_cells(geo, 2).sum() == 16


def test_clean_torus_hall_close_to_one(clean_torus):
    spec, _, sd = clean_torus
    geo = spec.geometry
    L1, L2 = _switches(geo)
    E = 0.5 * sum(lowest_gap(sd))
    P = fermi_projector(sd, E)
    Q = C.bulk_window(geo)
    s, im = C.hall_switch(P, L1, L2, Q, return_imag=True)
    assert abs(s - 1) < 0.05 and abs(im) < 1e-10
    assert abs(C.hall_switch_spectral(sd, E, L1, L2, Q) - s) < 1e-10
    assert abs(C.hall_double_commutator(P, L1, L2, Q) - s) < 1e-10
    # finite-dimensional trace of a commutator vanishes
    assert abs(C.hall_switch(P, L1, L2)) < 1e-9


def test_empty_and_full_projectors_give_zero(clean_torus):
    spec, _, sd = clean_torus
    L1, L2 = _switches(spec.geometry)
    for P in (np.zeros((sd.dim, sd.dim)), np.eye(sd.dim)):
        assert abs(C.hall_switch(P, L1, L2, C.bulk_window(spec.geometry))) < 1e-12


def test_identity_switch_gives_zero(clean_torus):
    spec, _, sd = clean_torus
    P = fermi_projector(sd, 0.5 * sum(lowest_gap(sd)))
    one = np.ones(sd.dim)
    assert abs(C.hall_switch(P, one, _switches(spec.geometry)[1])) < 1e-12


def test_position_marker(clean_torus):
    spec, _, sd = clean_torus
    P = fermi_projector(sd, 0.5 * sum(lowest_gap(sd)))
    rows = C.position_window_scan(P, spec.geometry, (1, 2))
    assert all(abs(r["value"] - 1) < 0.05 for r in rows)
    c = spec.geometry.coords()
    _, meta = C.hall_position_local(P, c[:, 0], c[:, 1], C.central_cells(spec.geometry, 8), True)
    assert meta["touches_boundary"]


def test_dec_hall_identity_random_projectors():
    rng = np.random.default_rng(11)
    n = 30
    l1 = rng.random(n)
    l2 = rng.random(n)
    q = (rng.random(n) > 0.5).astype(float)
    for rank in (1, 7, 15, 29):
        P = random_projector(rng, n, rank)
        assert C.check_dec_hall(P, l1, l2, q) < 1e-12
        assert abs(C.hall_switch(P, l1, l2, q) - C.hall_double_commutator(P, l1, l2, q)) < 1e-12


def test_diagonal_matrix_arguments_accepted(clean_torus):
    spec, _, sd = clean_torus
    L1, L2 = _switches(spec.geometry)
    P = fermi_projector(sd, 0.5 * sum(lowest_gap(sd)))
    assert C.hall_switch(P, np.diag(L1), np.diag(L2)) == pytest.approx(C.hall_switch(P, L1, L2))
    with pytest.raises(ValueError):
        C.hall_switch(P, np.ones((sd.dim, sd.dim)), L2)


def test_pi_E_time_average(disordered_torus):
    spec, _, sd = disordered_torus
    L1, L2 = _switches(spec.geometry)
    E = 0.5 * sum(lowest_gap(sd))
    P = fermi_projector(sd, E)
    Q = C.bulk_window(spec.geometry)
    # T = 0 reproduces i tau(Pi_E)
    assert abs(C.pi_E_time_average(sd, E, L1, L2, 0.0, Q) - C.pi_E_trace(P, L1, L2, Q)) < 1e-10
    # full trace is real
    assert abs(C.pi_E_trace(P, L1, L2).imag) < 1e-10
    vals = [abs(C.pi_E_time_average(sd, E, L1, L2, T, Q)) for T in (10.0, 1e3, 1e5)]
    assert vals[2] < vals[0]


@pytest.fixture(scope="module")
def edge_case():
    geo = Geometry(24, 30, "open")
    spec = ModelSpec(geo, FluxSpec(1, 3), wall=WallSpec("electric", 6, 40, 2))
    sd = diagonalize(build_edge(spec))
    g = SwitchProfile(2.95, 0.35, smoothness="cinf")
    L1, L2 = _switches(geo)
    return geo, sd, g, L1, L2


def test_edge_functionals(edge_case):
    geo, sd, g, L1, L2 = edge_case
    Q = C.strip_window(geo)
    Ts = [0.0, 10.0, 100.0]
    reg = C.edge_conductance_regularized(sd, g, L1, L2, Ts, Q)
    assert isinstance(reg, list) and len(reg) == 3
    assert reg[0] == pytest.approx(C.edge_integrand(sd, g, L1, L2, 0.0, Q))
    assert C.edge_conductance_unregularized(sd, g, L2, Q) == pytest.approx(
        C.edge_integrand(sd, g, None, L2, 0.0, Q))
    assert abs(reg[-1] - 1) < 0.1
    assert isinstance(C.edge_conductance_regularized(sd, g, L1, L2, 10.0, Q), float)


def test_edge_remainder_identity(edge_case):
    # edge = comparator + remainder + tau([g,L2] L1) with the same window
    geo, sd, g, L1, L2 = edge_case
    Q = C.strip_window(geo)
    T = 30.0
    e = C.edge_conductance_regularized(sd, g, L1, L2, T, Q)
    r = C.remainder_trace_average(sd, g, L1, L2, T, Q)
    b = C.bulk_comparator_trace(sd, g, L1, L2, T, Q)
    pc = C._edge_pieces(sd, g, L1, L2, Q)
    zt = C.UNIT * (-1j * np.sum(C._commutator_g(pc) * (pc.L1t @ pc.Qt).T)).real
    assert e == pytest.approx(r + b + zt, abs=1e-10)


def test_zero_trace_is_exact_for_diagonal_switches(edge_case):
    geo, sd, g, L1, L2 = edge_case
    assert C.zero_trace_check(sd, g, L1, L2, C.strip_window(geo)) < 1e-12
    assert C.zero_trace_check(sd, g, L1, L2) < 1e-12


def test_convergence_in_a_rows(edge_case):
    geo, sd, g, L1, L2 = edge_case
    rows = C.convergence_in_a(lambda a: sd, [6], g, L1, L2, 10.0, 1.0, C.strip_window(geo))
    assert rows[0]["deviation"] == pytest.approx(abs(rows[0]["comparator"] - 1.0))
    with pytest.raises(ValueError):
        C.convergence_in_a(lambda a: sd, [6, 20], g, L1, L2, 10.0, 1.0, max_a=10)


def test_report_serialization():
    rep = C.ConductanceReport(sigma_hall=0.99, chern_oracle=1,
                              sigma_edge_reg=[{"a": 8, "T": 100.0, "value": 0.98}],
                              remainder_avg=[{"T": 100.0, "value": 1e-3}],
                              definition_residuals={"dec_hall": 1e-15})
    rep.flag_imaginary("sigma_hall", 1e-12)
    rep.flag_imaginary("sigma_hall", 1e-3)
    assert len(rep.flags) == 1
    assert json.loads(rep.to_json())["chern_oracle"] == 1
    lines = rep.to_csv().splitlines()
    assert lines[0] == "quantity,a,T,E,value"
    assert "sigma_edge_reg,8,100.0,,0.98" in lines

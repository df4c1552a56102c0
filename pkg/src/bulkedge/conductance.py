"""Bulk Hall and edge conductance functionals on finite lattices.

Units.  ``-i tr[P L2 P, P L1 P]`` equals (Chern number)/(2 pi) for a clean
band, so every *conductance* returned here is multiplied by 2 pi and is in
units of e^2/h.  Raw traces (``pi_E_time_average``, ``zero_trace_check``) are
returned unscaled.

Localized traces.  On a finite matrix the trace of any commutator vanishes,
so the bulk quantities would all be identically zero with the full trace.
Every functional takes an optional diagonal ``window`` Q and evaluates
tau(A) = sum_x Q_x A_xx instead; ``window=None`` means the full trace.  The
windows built by ``bulk_window`` / ``strip_window`` keep the sums away from
the periodic seams and the open cuts, where the switches produce spurious
second steps.

Switches Lambda_1, Lambda_2 and windows may be passed as 1-D diagonals or as
square diagonal matrices.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .kernels import filter_matrix
from .lattice import Geometry
from .spectral import SpectralData, TimeAverageKernel, fermi_projector
from .switches import SwitchProfile

UNIT = 2.0 * np.pi


def _diag(L, n=None):
    if L is None:
        return None
    L = np.asarray(L)
    if L.ndim == 2:
        d = np.diagonal(L).copy()
        if np.abs(L - np.diag(d)).max() > 0:
            raise ValueError("switch/window matrices must be diagonal")
        return d.real if np.isrealobj(d) or np.abs(d.imag).max() == 0 else d
    return L


def _tau_diag(M_diag, window):
    """tau of a matrix given its diagonal."""
    return np.sum(M_diag) if window is None else np.sum(window * M_diag)


# ---------------------------------------------------------------- windows

def box_window(geometry: Geometry, half_x1=None, half_x2=None):
    """Indicator of |x1| < half_x1 and |x2| < half_x2 (None = no restriction)."""
    c = geometry.coords()
    m = np.ones(geometry.dim, dtype=bool)
    if half_x1 is not None:
        m &= np.abs(c[:, 0]) < half_x1
    if half_x2 is not None:
        m &= np.abs(c[:, 1]) < half_x2
    return m.astype(float)


def bulk_window(geometry: Geometry, fraction=0.25):
    """Central box |x1| < fraction*Lx, |x2| < fraction*Ly (torus runs)."""
    return box_window(geometry, fraction * geometry.Lx, fraction * geometry.Ly)


def strip_window(geometry: Geometry, fraction=0.25):
    """Strip |x2| < fraction*Ly, all x1 (cylinder runs)."""
    return box_window(geometry, None, fraction * geometry.Ly)


# ------------------------------------------------------------ bulk Hall

def hall_switch(P, L1, L2, window=None, return_imag=False):
    """2 pi Re(-i tau[P L2 P, P L1 P])."""
    P = np.asarray(P)
    l1, l2, q = _diag(L1), _diag(L2), _diag(window)
    PL1P = (P * l1[None, :]) @ P
    X_diag = np.sum((P * l2[None, :]) * PL1P.T, axis=1)      # diag(P L2 P L1 P)
    # the commutator is X - X^dagger, so its diagonal is 2i Im X_xx
    val = -1j * _tau_diag(X_diag - X_diag.conj(), q)
    out = UNIT * val.real
    return (out, UNIT * val.imag) if return_imag else out


def hall_switch_spectral(sd: SpectralData, E, L1, L2, window=None):
    """hall_switch for P = chi(H <= E) using only the occupied eigenvectors."""
    l1, l2, q = _diag(L1), _diag(L2), _diag(window)
    k = int(np.searchsorted(sd.eigenvalues, E, side="right"))
    Vo = sd.eigenvectors[:, :k]
    A1 = Vo.conj().T @ (l1[:, None] * Vo)
    A2 = Vo.conj().T @ (l2[:, None] * Vo)
    K = A2 @ A1 - A1 @ A2
    d = np.sum((Vo @ K) * Vo.conj(), axis=1)
    return UNIT * (-1j * _tau_diag(d, q)).real


def hall_double_commutator(P, L1, L2, window=None, return_imag=False):
    """2 pi Re(-i tau P[[P, L2], [P, L1]])."""
    P = np.asarray(P)
    l1, l2, q = _diag(L1), _diag(L2), _diag(window)
    C1 = P * l1[None, :] - l1[:, None] * P
    C2 = P * l2[None, :] - l2[:, None] * P
    D = C2 @ C1 - C1 @ C2
    d = np.sum(P * D.T, axis=1)
    val = -1j * _tau_diag(d, q)
    return (UNIT * val.real, UNIT * val.imag) if return_imag else UNIT * val.real


def central_cells(geometry: Geometry, half):
    """Indicator of the (2 half) x (2 half) block of sites around the origin."""
    c = geometry.coords()
    m = (c[:, 0] >= -half) & (c[:, 0] < half) & (c[:, 1] >= -half) & (c[:, 1] < half)
    return m.astype(float)


def hall_position_local(P, X1, X2, chi0, return_meta=False):
    """Local position-operator Hall marker averaged over the sites of chi0.

    2 pi Re(-i tr chi0 P[[P, X2], [P, X1]] chi0) / |chi0|, i.e. per unit cell
    of one site.  X1, X2 are site coordinates measured from the centre; near a
    periodic seam they jump, so chi0 must stay well inside (flagged otherwise).
    """
    P = np.asarray(P)
    x1, x2, chi = (np.asarray(_diag(a), dtype=float) for a in (X1, X2, chi0))
    C1 = P * x1[None, :] - x1[:, None] * P
    C2 = P * x2[None, :] - x2[:, None] * P
    D = C2 @ C1 - C1 @ C2
    d = np.sum(P * D.T, axis=1)
    ncell = chi.sum()
    val = UNIT * (-1j * np.sum(chi * d)).real / max(ncell, 1.0)
    if not return_meta:
        return val
    inside = chi > 0
    margin = min(x1.max() - np.abs(x1[inside]).max(), x2.max() - np.abs(x2[inside]).max())
    meta = {"cells": int(ncell), "margin_sites": float(margin),
            "touches_boundary": bool(margin < 2)}
    return val, meta


def position_window_scan(P, geometry: Geometry, halves=(2, 3, 4)):
    """hall_position_local over growing central windows (convergence metadata)."""
    c = geometry.coords().astype(float)
    rows = []
    for h in halves:
        v, meta = hall_position_local(P, c[:, 0], c[:, 1], central_cells(geometry, h), True)
        rows.append({"half": h, "value": v, **meta})
    return rows


# -------------------------------------------------------------- Pi_E

def pi_E(P, L1, L2):
    """P L2 P^perp L1 P - P^perp L2 P L1 P^perp (literal)."""
    P = np.asarray(P)
    n = P.shape[0]
    l1, l2 = _diag(L1), _diag(L2)
    Q = np.eye(n) - P
    return (P * l2[None, :]) @ Q @ (l1[:, None] * P) - (Q * l2[None, :]) @ P @ (l1[:, None] * Q)


def pi_E_trace(P, L1, L2, window=None):
    """i tau(Pi_E), complex and unscaled."""
    return 1j * _tau_diag(np.diagonal(pi_E(P, L1, L2)), _diag(window))


def check_dec_hall(P, L1, L2, window=None):
    """|hall_switch - 2 pi Re(i tau Pi_E)|; an exact identity for any diagonal window."""
    return abs(hall_switch(P, L1, L2, window) - UNIT * pi_E_trace(P, L1, L2, window).real)


def pi_E_time_average(sd: SpectralData, E, L1, L2, T, window=None, kind="uniform"):
    """i tau of the time-averaged Pi_E(t) (Lambda_1 -> Lambda_1(t)); complex, unscaled."""
    w = sd.eigenvalues
    k = int(np.searchsorted(w, E, side="right"))
    L1t = sd.to_eig(_diag(L1))
    L2t = sd.to_eig(_diag(L2))
    Lb = L1t * filter_matrix(w, T, kind)
    o, u = slice(0, k), slice(k, None)
    A = np.zeros_like(L1t)
    A[o, o] = L2t[o, u] @ Lb[u, o]
    A[u, u] = -L2t[u, o] @ Lb[o, u]
    q = _diag(window)
    if q is None:
        return 1j * np.trace(A)
    Qt = sd.to_eig(q)
    return 1j * np.sum(A * Qt.T)


# ------------------------------------------------------------ edge side

@dataclass
class _EdgePieces:
    """Eigenbasis ingredients shared by the edge functionals."""
    w: np.ndarray
    g: np.ndarray
    gp: np.ndarray
    win: np.ndarray
    L1t: np.ndarray
    L2t: np.ndarray
    Qt: np.ndarray


def _edge_pieces(sd: SpectralData, g: SwitchProfile, L1, L2, window):
    w = sd.eigenvalues
    n = w.size
    l1 = _diag(L1)
    L1t = np.eye(n, dtype=complex) if l1 is None else sd.to_eig(l1)
    L2t = sd.to_eig(_diag(L2))
    q = _diag(window)
    Qt = np.eye(n, dtype=complex) if q is None else sd.to_eig(q)
    gp = g.derivative(w)
    return _EdgePieces(w, g(w), gp, np.nonzero(gp != 0)[0], L1t, L2t, Qt)


def _current_trace(pc: _EdgePieces, F):
    """tau(g'(H)[H, L2] * X) with X = L1 filtered by F in the eigenbasis."""
    win = pc.win
    if win.size == 0:
        return 0.0
    Cw = (pc.w[win][:, None] - pc.w[None, :]) * pc.L2t[win, :]
    Y = (pc.L1t * F) @ pc.Qt[:, win]
    return UNIT * (-1j * np.sum(pc.gp[win] * np.sum(Cw * Y.T, axis=1))).real


def _commutator_g(pc: _EdgePieces):
    """[g(H), L2] in the eigenbasis."""
    return (pc.g[:, None] - pc.g[None, :]) * pc.L2t


def _filter(pc, T, kind):
    if T == 0:
        return np.ones((pc.w.size, pc.w.size), dtype=complex)
    return TimeAverageKernel(kind, T).matrix(pc.w)


def edge_integrand(sd: SpectralData, g: SwitchProfile, L1, L2, t, window=None):
    """2 pi Re(-i tau g'(H)[H, L2] e^{itH} L1 e^{-itH}).  ``L1=None`` means identity."""
    pc = _edge_pieces(sd, g, L1, L2, window)
    ph = np.exp(1j * t * pc.w)
    return _current_trace(pc, ph[:, None] * ph.conj()[None, :])


def edge_conductance_regularized(sd: SpectralData, g: SwitchProfile, L1, L2, T,
                                 window=None, kind="uniform"):
    """2 pi Re(-i tau g'(H)[H, L2] <L1>_T), the time average taken exactly.

    ``T`` may be a scalar or a sequence; a sequence returns a list.
    """
    pc = _edge_pieces(sd, g, L1, L2, window)
    Ts = np.atleast_1d(T)
    out = [_current_trace(pc, _filter(pc, float(t), kind)) for t in Ts]
    return out if np.ndim(T) else out[0]


def edge_conductance_unregularized(sd: SpectralData, g: SwitchProfile, L2, window=None):
    """2 pi Re(-i tau g'(H)[H, L2])."""
    return edge_integrand(sd, g, None, L2, 0.0, window)


def remainder_trace_average(sd: SpectralData, g: SwitchProfile, L1, L2, T,
                            window=None, kind="uniform"):
    """Time average of the remainder trace, as the difference of two traces:

        2 pi Re(-i [tau g'(H)[H,L2] <L1>_T  -  tau [g(H),L2] <L1>_T]).

    ``window=None`` (full trace) is the natural choice here: the remainder is
    trace class on its own, while a window adds a finite-size offset from the
    states the window cuts through.
    """
    pc = _edge_pieces(sd, g, L1, L2, window)
    d = pc.w[:, None] - pc.w[None, :]
    K = (pc.gp[:, None] * d) * pc.L2t - _commutator_g(pc)
    Ts = np.atleast_1d(T)
    out = []
    for t in Ts:
        Lb = pc.L1t * _filter(pc, float(t), kind)
        out.append(UNIT * (-1j * np.sum(K * (Lb @ pc.Qt).T)).real)
    return out if np.ndim(T) else out[0]


def bulk_comparator_trace(sd: SpectralData, g: SwitchProfile, L1, L2, T,
                          window=None, kind="uniform"):
    """2 pi Re(-i tau [g(H), L2](<L1>_T - L1))."""
    pc = _edge_pieces(sd, g, L1, L2, window)
    B = _commutator_g(pc)
    Ts = np.atleast_1d(T)
    out = []
    for t in Ts:
        D = pc.L1t * (_filter(pc, float(t), kind) - 1.0)
        out.append(UNIT * (-1j * np.sum(B * (D @ pc.Qt).T)).real)
    return out if np.ndim(T) else out[0]


def pi_E_energy_integral(sd: SpectralData, g: SwitchProfile, L1, L2, window=None, nodes=9):
    """2 pi * sum_k w_k g'(E_k) Re(i tau Pi_{E_k}) on Gauss-Legendre nodes over supp g'."""
    x, wts = np.polynomial.legendre.leggauss(nodes)
    E = g.center + g.half_width * x
    acc = 0.0
    for e, wk in zip(E, wts):
        P = fermi_projector(sd, e)
        acc += g.half_width * wk * g.derivative(e) * pi_E_trace(P, L1, L2, window).real
    return UNIT * float(acc)


def zero_trace_check(sd: SpectralData, g: SwitchProfile, L1, L2, window=None):
    """|tau([g(H), L2] L1)|, unscaled."""
    V = sd.eigenvectors
    G = (V * g(sd.eigenvalues)[None, :]) @ V.conj().T
    l2 = _diag(L2)
    l1 = _diag(L1)
    C = G * l2[None, :] - l2[:, None] * G
    if l1 is not None:
        C = C * l1[None, :]
    return float(abs(_tau_diag(np.diagonal(C), _diag(window))))


def convergence_in_a(build, a_grid, g: SwitchProfile, L1, L2, T, bulk_value,
                     window=None, max_a=None):
    """Sweep the wall position.

    ``build(a)`` returns the SpectralData of the edge model with the wall at
    ``a`` (same disorder realization).  Each row holds the regularized edge
    conductance and the deviation of tau[g(H_a),L2](<L1>_T - L1) from the bulk
    comparator value ``bulk_value``.
    """
    if max_a is not None and max(a_grid) > max_a:
        raise ValueError(f"a grid exceeds the geometry (max a = {max_a})")
    rows = []
    for a in a_grid:
        sd = build(a)
        comp = bulk_comparator_trace(sd, g, L1, L2, T, window)
        edge = edge_conductance_regularized(sd, g, L1, L2, T, window)
        rows.append({"a": a, "T": T, "edge": edge, "comparator": comp,
                     "deviation": abs(comp - bulk_value)})
    return rows


# ------------------------------------------------------------ reporting

@dataclass
class ConductanceReport:
    sigma_hall: Optional[float] = None
    sigma_hall_alt1: Optional[float] = None
    sigma_hall_alt2: Optional[float] = None
    chern_oracle: Optional[int] = None
    sigma_edge_unreg: Optional[float] = None
    sigma_edge_reg: list = field(default_factory=list)      # rows {a, T, value}
    remainder_avg: list = field(default_factory=list)       # rows {T, value}
    definition_residuals: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def flag_imaginary(self, name, imag, tol=1e-8):
        if abs(imag) > tol:
            self.flags.append(f"{name}: imaginary part {imag:.3e} exceeds {tol}")

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    CSV_COLUMNS = ("quantity", "a", "T", "E", "value")

    def csv_rows(self):
        rows = []
        for name in ("sigma_hall", "sigma_hall_alt1", "sigma_hall_alt2",
                     "chern_oracle", "sigma_edge_unreg"):
            v = getattr(self, name)
            if v is not None:
                rows.append((name, "", "", "", v))
        for r in self.sigma_edge_reg:
            rows.append(("sigma_edge_reg", r.get("a", ""), r.get("T", ""), "", r["value"]))
        for r in self.remainder_avg:
            rows.append(("remainder_avg", r.get("a", ""), r["T"], "", r["value"]))
        for k, v in sorted(self.definition_residuals.items()):
            rows.append((f"residual:{k}", "", "", "", v))
        return rows

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(self.CSV_COLUMNS)
        wr.writerows(self.csv_rows())
        return buf.getvalue()

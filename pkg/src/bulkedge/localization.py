"""Localization diagnostics: dynamical moments and kernel-decay fits."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .kernels import cell_pair_sq
from .lattice import Geometry
from .spectral import SpectralData, TimeAverageKernel
from .switches import SwitchProfile

ZETA_GRID = tuple(np.round(np.arange(0.3, 1.0001, 0.1), 2))
_MAX_EXPONENT = 700.0


@dataclass
class DecayFit:
    prefactor: float
    rate: float
    stretch: float
    fit_residual: float
    window: tuple
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class EnergyBump:
    """Smoothstep-squared bump on [lo, hi] with maximum 1 at the midpoint."""
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("bump needs lo < hi")

    def __call__(self, E):
        u = (np.asarray(E, dtype=float) - self.lo) / (self.hi - self.lo)
        rise = SwitchProfile(0.25, 0.25, smoothness="smoothstep3")
        left = 1.0 - rise(u)              # 0 -> 1 on [0, 1/2]
        right = rise(u - 0.5)             # 1 -> 0 on [1/2, 1]
        return left * right


# ------------------------------------------------------------- distances

def _periodic_abs(d, L, periodic):
    d = np.abs(d)
    return np.minimum(d, L - d) if periodic else d


def site_distance_from_origin(geometry: Geometry):
    """l1 distance of every site from x = 0 (wraparound on periodic axes)."""
    c = geometry.coords()
    return (_periodic_abs(c[:, 0], geometry.Lx, geometry.bc_x1 == "periodic")
            + _periodic_abs(c[:, 1], geometry.Ly, geometry.bc_x2 == "periodic"))


def cell_layout(geometry: Geometry, cell=1):
    """Map sites to square cells of side ``cell``; returns (cell_of_site, cell_coords)."""
    if geometry.Lx % cell or geometry.Ly % cell:
        raise ValueError("cell size must divide Lx and Ly")
    nx, ny = geometry.Lx // cell, geometry.Ly // cell
    i = np.repeat(np.arange(geometry.Lx), geometry.Ly) // cell
    j = np.tile(np.arange(geometry.Ly), geometry.Lx) // cell
    cell_of_site = i * ny + j
    ci = np.repeat(np.arange(nx), ny)
    cj = np.tile(np.arange(ny), nx)
    return cell_of_site, np.stack([ci, cj], axis=1), (nx, ny)


def cell_distances(geometry: Geometry, cell=1):
    """Pairwise l1 distances between cells, in site units (periodic metric on tori)."""
    _, cc, (nx, ny) = cell_layout(geometry, cell)
    d1 = _periodic_abs(cc[:, None, 0] - cc[None, :, 0], nx, geometry.bc_x1 == "periodic")
    d2 = _periodic_abs(cc[:, None, 1] - cc[None, :, 1], ny, geometry.bc_x2 == "periodic")
    return cell * d1, cell * d2


# ------------------------------------------------------------- moments

def _weights(geometry, m, zeta):
    r = site_distance_from_origin(geometry).astype(float)
    expo = m * r ** zeta
    if expo.max() > _MAX_EXPONENT:
        raise OverflowError(
            f"moment weight exponent m|X|^zeta reaches {expo.max():.1f} > {_MAX_EXPONENT}")
    return np.exp(expo)


def _columns(sd, bump, chi0):
    """Columns X(H) chi0 in the eigenbasis, restricted to the bump support."""
    xv = bump(sd.eigenvalues)
    keep = np.nonzero(xv > 0)[0]
    sites = np.atleast_1d(np.asarray(chi0))
    if sites.dtype == bool or (sites.size == sd.dim and set(np.unique(sites)) <= {0, 1}
                               and sites.size > 1):
        sites = np.nonzero(sites)[0]
    A = xv[keep][:, None] * sd.eigenvectors[sites][:, keep].conj().T   # (k, nsites)
    return keep, A


def moment(sd: SpectralData, geometry: Geometry, m, zeta, bump: EnergyBump, t, chi0):
    """|| e^{(m/2)|X|^zeta} e^{-itH} X(H) chi0 ||_2^2 (Hilbert-Schmidt norm)."""
    wt = _weights(geometry, m, zeta)
    keep, A = _columns(sd, bump, chi0)
    if keep.size == 0:
        return 0.0
    V = sd.eigenvectors[:, keep]
    psi = V @ (np.exp(-1j * t * sd.eigenvalues[keep])[:, None] * A)
    return float(np.sum(wt[:, None] * np.abs(psi) ** 2))


def time_averaged_moment(sd: SpectralData, geometry: Geometry, m, zeta, bump: EnergyBump,
                         T, chi0, kind="exponential"):
    """(1/T) int_0^inf e^{-t/T} M(t) dt for one realization, exact in the eigenbasis."""
    wt = _weights(geometry, m, zeta)
    keep, A = _columns(sd, bump, chi0)
    if keep.size == 0:
        return 0.0
    if T == 0:
        return moment(sd, geometry, m, zeta, bump, 0.0, chi0)
    w = sd.eigenvalues[keep]
    V = sd.eigenvectors[:, keep]
    # |psi_t(x)|^2 = sum_kl B_xk conj(B_xl) e^{-it(w_k - w_l)}; the kernel
    # averages e^{i t delta} at delta = w_l - w_k, hence the transpose
    F = TimeAverageKernel(kind, T).matrix(w).T
    total = 0.0
    for col in range(A.shape[1]):
        B = V * A[:, col][None, :]
        dens = np.real(np.sum((B @ F) * B.conj(), axis=1))
        total += float(np.sum(wt * dens))
    return total


def averaged_moment(sds, geometry: Geometry, m, zeta, bump: EnergyBump, T, chi0,
                    kind="exponential"):
    """Ensemble mean and standard error of the time-averaged moment."""
    vals = np.array([time_averaged_moment(sd, geometry, m, zeta, bump, T, chi0, kind)
                     for sd in sds])
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


def central_site(geometry: Geometry):
    c = geometry.coords()
    return int(np.nonzero((c[:, 0] == 0) & (c[:, 1] == 0))[0][0])


# ----------------------------------------------------------- decay fits

def fit_decay(d, y, zeta=1.0) -> DecayFit:
    """Least squares log y = log C - m d^zeta on y > 0.  ``zeta='grid'``
    scans ZETA_GRID and keeps the smallest residual."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (y > 0) & np.isfinite(y)
    d, ly = d[ok], np.log(y[ok])
    if d.size < 4:
        raise ValueError(f"need at least 4 distance bins with data, got {d.size}")
    zetas = ZETA_GRID if zeta == "grid" else (float(zeta),)
    best = None
    for z in zetas:
        X = np.stack([np.ones_like(d), -d ** z], axis=1)
        coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
        res = float(np.sqrt(np.mean((X @ coef - ly) ** 2)))
        if best is None or res < best[0] - 1e-12:
            best = (res, z, coef)
    res, z, coef = best
    return DecayFit(float(np.exp(coef[0])), float(coef[1]), float(z), res,
                    (float(d.min()), float(d.max())))


def _binned_profile(S, dist, dmin, dmax, floor):
    """Per integer distance: mean log block norm and count (nonzero blocks only)."""
    norms = np.sqrt(S)
    top = norms.max()
    rows = []
    for dd in range(int(dmin), int(dmax) + 1):
        sel = (dist == dd) & (norms > floor * top)
        cnt = int(sel.sum())
        if cnt:
            rows.append((dd, float(np.mean(np.log(norms[sel]))), cnt))
    return rows


def _fit_profile(rows, zeta):
    if not rows:
        return DecayFit(float("nan"), float("nan"), float("nan"), float("nan"), (0, 0),
                        degenerate=True)
    d = np.array([r[0] for r in rows])
    y = np.exp(np.array([r[1] for r in rows]))
    return fit_decay(d, y, zeta)


def projector_kernel_decay(P, geometry: Geometry, cell=1, zeta=1.0, dmin=1, dmax=None,
                           floor=1e-13):
    """Fit of ||chi_x P chi_y||_2 against the cell distance |x - y|.

    Returns (DecayFit, profile rows (distance_bin, mean_lognorm, count)).
    """
    cos, _, (nx, ny) = cell_layout(geometry, cell)
    S = cell_pair_sq(np.asarray(P), cos, nx * ny)
    d1, d2 = cell_distances(geometry, cell)
    dist = d1 + d2
    if dmax is None:
        dmax = dist.max() // 2
    rows = _binned_profile(S, dist, dmin, dmax, floor)
    return _fit_profile(rows, zeta), rows


def commutator_kernel_decay(P, L2, geometry: Geometry, step_x2=0.0, cell=1, zeta=1.0,
                            band=None, floor=1e-13):
    """Decay of ||chi_x [P, L2] chi_y||_2.

    Fits log-norm = c - r1 |x1 - y1|^zeta - r2 |x2 - s|^zeta - r3 |y2 - s|^zeta over
    nonzero blocks with both cells inside |x2 - s| < band (default Ly/4), s the
    step line.  The returned DecayFit has rate r1; r2, r3 are in ``extra``.
    """
    P = np.asarray(P)
    l2 = np.asarray(L2)
    if l2.ndim == 2:
        l2 = np.diagonal(l2)
    C = P * l2[None, :] - l2[:, None] * P
    cos, cc, (nx, ny) = cell_layout(geometry, cell)
    S = cell_pair_sq(C, cos, nx * ny)
    d1, _ = cell_distances(geometry, cell)
    x2 = (cc[:, 1] * cell + (cell - 1) / 2.0) - geometry.origin_offset[1] - step_x2
    if band is None:
        band = geometry.Ly / 4
    norms = np.sqrt(S)
    near = np.abs(x2) < band
    sel = near[:, None] & near[None, :] & (norms > floor * max(norms.max(), 1e-300))
    rows = _binned_profile(S, d1, 0, d1.max(), floor)
    if sel.sum() < 4:
        return DecayFit(float("nan"), float("nan"), float("nan"), float("nan"), (0, 0),
                        degenerate=True), rows
    ax = np.abs(x2)
    X1 = np.broadcast_to(d1.astype(float), S.shape)[sel]
    A2 = np.broadcast_to(ax[:, None], S.shape)[sel]
    B2 = np.broadcast_to(ax[None, :], S.shape)[sel]
    X = np.stack([np.ones_like(X1), -X1 ** zeta, -A2 ** zeta, -B2 ** zeta], axis=1)
    ly = np.log(norms[sel])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    res = float(np.sqrt(np.mean((X @ coef - ly) ** 2)))
    fit = DecayFit(float(np.exp(coef[0])), float(coef[1]), float(zeta), res,
                   (float(X1.min()), float(X1.max())),
                   extra={"rate_x1": float(coef[1]), "rate_x2": float(coef[2]),
                          "rate_y2": float(coef[3]), "pairs": int(sel.sum())})
    return fit, rows


def combes_thomas_check(H, geometry: Geometry, z_list, cell=1, dmin=1, dmax=None,
                        floor=1e-13):
    """Resolvent kernel decay rate per z; rows carry eta = dist(z, spectrum)."""
    M = H.entries if hasattr(H, "entries") else np.asarray(H)
    w = np.linalg.eigvalsh(M)
    cos, _, (nx, ny) = cell_layout(geometry, cell)
    d1, d2 = cell_distances(geometry, cell)
    dist = d1 + d2
    if dmax is None:
        dmax = dist.max() // 2
    rows = []
    for z in z_list:
        z = complex(z)
        eta = float(np.min(np.abs(w - z)))
        if eta < 1e-6:
            raise ValueError(f"z = {z} lies within 1e-6 of the spectrum")
        R = np.linalg.inv(M - z * np.eye(M.shape[0]))
        S = cell_pair_sq(R, cos, nx * ny)
        prof = _binned_profile(S, dist, dmin, dmax, floor)
        rows.append({"z": [z.real, z.imag], "eta": eta, "fit": _fit_profile(prof, 1.0)})
    rates = [r["fit"].rate for r in sorted(rows, key=lambda r: r["eta"])]
    monotone = all(b >= a for a, b in zip(rates, rates[1:]))
    return rows, monotone


def write_profile_csv(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["distance_bin", "mean_lognorm", "count"])
        wr.writerows(rows)

"""Chern numbers of clean Hofstadter bands by plaquette Berry fluxes.

Independent oracle for the conductance functionals: the magnetic Bloch
Hamiltonian is diagonalized on a discretized magnetic Brillouin zone and
the lattice field strength (products of link overlaps around each
plaquette) is summed.  The result is an integer up to rounding for any
grid fine enough to resolve the curvature.
"""
import numpy as np

from .kernels import plaquette_phases
from .lattice import FluxSpec


class GapClosingError(RuntimeError):
    pass


def bloch_hamiltonian(flux: FluxSpec, k1, k2, energy_shift=0.0):
    """q x q Bloch matrix of the Landau-gauge model on the magnetic cell.

    Same conventions as ``lattice.build_bulk``: x2-bond amplitude
    -exp(i 2 pi phi x1), so a plane wave in x2 sees -2 cos(k2 - 2 pi phi m);
    k1 is the quasi-momentum for translations by q sites in x1.
    """
    q, phi = flux.q, flux.phi
    m = np.arange(q)
    H = np.diag(4.0 + energy_shift - 2.0 * np.cos(k2 - 2 * np.pi * phi * m)).astype(complex)
    for a in range(q):
        b = (a + 1) % q
        amp = -np.exp(1j * k1 * q) if a == q - 1 else -1.0
        H[b, a] += amp
        H[a, b] += np.conj(amp)
    return H


def bloch_bands(flux: FluxSpec, grid):
    """Eigen-frames on a grid x grid mesh: energies (g, g, q), frames (g, g, q, q)."""
    q = flux.q
    k1s = 2 * np.pi / q * np.arange(grid) / grid
    k2s = 2 * np.pi * np.arange(grid) / grid
    E = np.empty((grid, grid, q))
    U = np.empty((grid, grid, q, q), dtype=complex)
    for i, k1 in enumerate(k1s):
        for j, k2 in enumerate(k2s):
            E[i, j], U[i, j] = np.linalg.eigh(bloch_hamiltonian(flux, k1, k2))
    return E, U


def chern_oracle(flux: FluxSpec, band_count_below: int, bz_grid: int = 24,
                 gap_tol=1e-8, integer_tol=0.1) -> int:
    """Total Chern number of the lowest ``band_count_below`` bands.

    The orientation (sign) is the one for which the first Hofstadter band at
    phi = 1/q has Chern number +1, matching the sign of ``hall_switch``.
    """
    if not 0 <= band_count_below <= flux.q:
        raise ValueError("band_count_below must be between 0 and q")
    if band_count_below in (0, flux.q):
        return 0
    E, U = bloch_bands(flux, bz_grid)
    gap = E[..., band_count_below] - E[..., band_count_below - 1]
    if gap.min() < gap_tol:
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        raise GapClosingError(
            f"bands {band_count_below - 1} and {band_count_below} touch on the grid "
            f"at k-index ({i}, {j}), gap {gap.min():.2e}")
    F = plaquette_phases(U[..., :band_count_below])
    total = -F.sum() / (2 * np.pi)
    c = int(np.rint(total))
    if abs(total - c) > integer_tol:
        raise RuntimeError(f"plaquette sum {total:.4f} is not an integer; refine bz_grid")
    return c


def chern_table(flux: FluxSpec, bz_grid: int = 24):
    """Rows (bands_below, chern) for every gap of the spectrum."""
    return [{"bands_below": n, "chern": chern_oracle(flux, n, bz_grid)}
            for n in range(flux.q + 1)]

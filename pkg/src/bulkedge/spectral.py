"""Dense eigendecomposition and functions of a Hamiltonian.

Everything here works in the eigenbasis of one realization: projections,
f(H), e^{-itH}, and exact time averages of Heisenberg-evolved observables.
"""
from __future__ import annotations

import csv
import hashlib
import threading
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kernels import filter_matrix
from .lattice import Geometry, HamiltonianMatrix
from .switches import SwitchProfile


class RankAmbiguityWarning(UserWarning):
    """Fermi level within 1e-9 of an eigenvalue."""


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_hash: str = ""

    @property
    def dim(self):
        return self.eigenvalues.size

    def residuals(self, H):
        """(max |HV - V diag(w)|, max |V^dag V - I|)."""
        H = _entries(H)
        V, w = self.eigenvectors, self.eigenvalues
        r1 = np.abs(H @ V - V * w[None, :]).max()
        r2 = np.abs(V.conj().T @ V - np.eye(self.dim)).max()
        return r1, r2

    def to_site(self, A_eig):
        """V A V^dag."""
        V = self.eigenvectors
        return V @ A_eig @ V.conj().T

    def to_eig(self, A):
        """V^dag A V; a 1-D A is read as a diagonal matrix."""
        V = self.eigenvectors
        if np.ndim(A) == 1:
            return V.conj().T @ (np.asarray(A)[:, None] * V)
        return V.conj().T @ A @ V


def _entries(H):
    return H.entries if isinstance(H, HamiltonianMatrix) else np.asarray(H)


def _hash_matrix(M):
    return hashlib.sha256(np.ascontiguousarray(M).tobytes()).hexdigest()[:16]


def diagonalize(H) -> SpectralData:
    """Full eigendecomposition (LAPACK ``evr``); rejects non-Hermitian input."""
    M = _entries(H)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.conj().T).max() > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    if M.shape[0] == 1:
        w = np.real(M[0:1, 0]).astype(float)
        V = np.ones((1, 1), dtype=complex)
    else:
        w, V = sla.eigh(M, driver="evr", check_finite=False)
    return SpectralData(w, V, _hash_matrix(M))


class SpectralCache:
    """Per-realization cache keyed by the matrix content hash.

    Concurrent readers are fine; inserts are serialized by a lock.
    """

    def __init__(self):
        self._store = {}
        self._lock = threading.Lock()

    def get(self, H) -> SpectralData:
        key = _hash_matrix(_entries(H))
        hit = self._store.get(key)
        if hit is not None:
            return hit
        sd = diagonalize(H)
        with self._lock:
            return self._store.setdefault(key, sd)

    def __len__(self):
        return len(self._store)


def fermi_projector(sd: SpectralData, E: float, with_flag=False):
    """P = sum over eigenvalues <= E of v v^dag."""
    w = sd.eigenvalues
    ambiguous = bool(np.any(np.abs(w - E) < 1e-9))
    if ambiguous:
        warnings.warn(f"Fermi level {E} within 1e-9 of an eigenvalue", RankAmbiguityWarning)
    occ = sd.eigenvectors[:, w <= E]
    P = occ @ occ.conj().T
    return (P, ambiguous) if with_flag else P


def apply_function_spectral(sd: SpectralData, f) -> np.ndarray:
    vals = np.asarray(f(sd.eigenvalues))
    if vals.ndim == 0:
        vals = np.full(sd.dim, vals)
    V = sd.eigenvectors
    return (V * vals[None, :]) @ V.conj().T


def evolve(sd: SpectralData, t: float) -> np.ndarray:
    """e^{-itH}."""
    return apply_function_spectral(sd, lambda w: np.exp(-1j * t * w))


@dataclass(frozen=True)
class TimeAverageKernel:
    """Closed-form filter of a time average of e^{i t delta}.

    uniform:     (1/T) int_0^T          -> (e^{iT delta} - 1) / (iT delta)
    exponential: (1/T) int_0^inf e^{-t/T} -> 1 / (1 - iT delta)
    """
    kind: str = "uniform"
    T: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "exponential"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.T < 0:
            raise ValueError("T must be nonnegative")

    def filter(self, delta):
        d = self.T * np.asarray(delta, dtype=float)
        if self.kind == "exponential":
            return 1.0 / (1.0 - 1j * d)
        small = np.abs(d) < 1e-8
        safe = np.where(small, 1.0, d)
        return np.where(small, 1.0 + 0.5j * d, np.expm1(1j * safe) / (1j * safe))

    def matrix(self, w):
        return filter_matrix(w, self.T, self.kind)


def heisenberg_time_average(sd: SpectralData, A, kernel: TimeAverageKernel, basis="site"):
    """Time average of e^{itH} A e^{-itH}, exact in the eigenbasis.

    Entry (i, j) in the eigenbasis is A_ij * filter(w_i - w_j).  ``basis='eig'``
    returns the eigenbasis matrix and skips the back-transformation.
    """
    Ae = sd.to_eig(A) * kernel.matrix(sd.eigenvalues)
    return Ae if basis == "eig" else sd.to_site(Ae)


def switch_values(profile: SwitchProfile, axis: str, geometry: Geometry) -> np.ndarray:
    """Profile evaluated at the x1 or x2 coordinate of every site (a diagonal)."""
    if axis not in ("x1", "x2"):
        raise ValueError("axis must be 'x1' or 'x2'")
    coords = geometry.x1_values() if axis == "x1" else geometry.x2_values()
    periodic = (geometry.bc_x1 if axis == "x1" else geometry.bc_x2) == "periodic"
    lo, hi = profile.lo, profile.hi
    cmin, cmax = coords.min(), coords.max()
    if periodic:
        outside = hi <= cmin or lo >= cmax
        if not outside and (lo < cmin + 2 or hi > cmax - 2):
            raise ValueError(
                f"switch transition ({lo}, {hi}) reaches the periodic seam of axis {axis}; "
                f"keep it inside [{cmin + 2}, {cmax - 2}]")
    vals = profile(coords)
    if axis == "x1":
        return np.repeat(vals, geometry.Ly)
    return np.tile(vals, geometry.Lx)


def switch_matrix(profile: SwitchProfile, axis: str, geometry: Geometry) -> np.ndarray:
    return np.diag(switch_values(profile, axis, geometry))


def dump_eigenvalues(sd: SpectralData, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "eigenvalue"])
        for i, e in enumerate(sd.eigenvalues):
            wr.writerow([i, repr(float(e))])

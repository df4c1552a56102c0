"""Hot loops with numba and pure-numpy twins.

``*_numba`` functions are compiled with ``@njit``; the public dispatchers
pick them unless BULKEDGE_NUMBA=0 is set (see ``_accel``).  Both variants
return the same numbers up to rounding.
"""
import numpy as np

from ._accel import njit, numba_enabled

# below this |T * delta| the filters use their Taylor series
_SMALL = 1e-8


# ---------------------------------------------------------------- filters

def filter_matrix_numpy(w, T, kind):
    d = T * (w[:, None] - w[None, :])
    if kind == "uniform":
        small = np.abs(d) < _SMALL
        safe = np.where(small, 1.0, d)
        out = np.expm1(1j * safe) / (1j * safe)
        out[small] = 1.0 + 0.5j * d[small]
        return out
    if kind == "exponential":
        return 1.0 / (1.0 - 1j * d)
    raise ValueError(kind)


@njit
def _filter_matrix_nb(w, T, uniform):
    n = w.shape[0]
    out = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            d = T * (w[i] - w[j])
            if uniform:
                if abs(d) < 1e-8:
                    out[i, j] = 1.0 + 0.5j * d
                else:
                    out[i, j] = (np.cos(d) - 1.0 + 1j * np.sin(d)) / (1j * d)
            else:
                out[i, j] = 1.0 / (1.0 - 1j * d)
    return out


def filter_matrix_numba(w, T, kind):
    if kind not in ("uniform", "exponential"):
        raise ValueError(kind)
    return _filter_matrix_nb(np.ascontiguousarray(w, dtype=np.float64), float(T), kind == "uniform")


def filter_matrix(w, T, kind="uniform"):
    """F[i, j] = time-average filter evaluated at w[i] - w[j]."""
    w = np.asarray(w, dtype=float)
    if numba_enabled():
        return filter_matrix_numba(w, T, kind)
    return filter_matrix_numpy(w, T, kind)


# ------------------------------------------------------- cell block norms

def cell_pair_sq_numpy(M, cell_of_site, ncell):
    """S[c, d] = sum |M[a, b]|^2 over sites a in cell c, b in cell d."""
    A = np.abs(M) ** 2
    ind = np.zeros((ncell, M.shape[0]))
    ind[cell_of_site, np.arange(M.shape[0])] = 1.0
    return ind @ A @ ind.T


@njit
def _cell_pair_sq_nb(M, cell_of_site, ncell):
    n = M.shape[0]
    S = np.zeros((ncell, ncell))
    for a in range(n):
        ca = cell_of_site[a]
        for b in range(n):
            z = M[a, b]
            S[ca, cell_of_site[b]] += z.real * z.real + z.imag * z.imag
    return S


def cell_pair_sq_numba(M, cell_of_site, ncell):
    M = np.ascontiguousarray(M, dtype=np.complex128)
    return _cell_pair_sq_nb(M, np.ascontiguousarray(cell_of_site, dtype=np.int64), int(ncell))


def cell_pair_sq(M, cell_of_site, ncell):
    if numba_enabled():
        return cell_pair_sq_numba(M, cell_of_site, ncell)
    return cell_pair_sq_numpy(M, cell_of_site, ncell)


# --------------------------------------------------- Berry link variables

def plaquette_phases_numpy(U):
    """Berry phase per plaquette from eigenvector frames U[k1, k2, :, band].

    Link variable U_mu(k) = det(u(k)^dagger u(k + mu)) (multi-band); the field
    strength is arg of the ordered product around the plaquette.
    """
    U1 = np.roll(U, -1, axis=0)
    U2 = np.roll(U, -1, axis=1)
    U12 = np.roll(U1, -1, axis=1)
    ov = lambda A, B: np.linalg.det(np.einsum("xyim,xyin->xymn", A.conj(), B))
    l1 = ov(U, U1)
    l2 = ov(U1, U12)
    l3 = ov(U2, U12)
    l4 = ov(U, U2)
    return np.angle(l1 * l2 * np.conj(l3) * np.conj(l4))


@njit
def _plaquette_phases_nb(U):
    n1, n2, dim, nb = U.shape
    F = np.empty((n1, n2))
    for a in range(n1):
        ap = (a + 1) % n1
        for b in range(n2):
            bp = (b + 1) % n2
            prod = 1.0 + 0.0j
            corners = ((a, b, ap, b), (ap, b, ap, bp), (ap, bp, a, bp), (a, bp, a, b))
            for c in corners:
                M = np.conj(U[c[0], c[1]]).T @ U[c[2], c[3]]
                prod *= np.linalg.det(M)
            F[a, b] = np.angle(prod)
    return F


def plaquette_phases_numba(U):
    return _plaquette_phases_nb(np.ascontiguousarray(U, dtype=np.complex128))


def plaquette_phases(U):
    if numba_enabled():
        return plaquette_phases_numba(U)
    return plaquette_phases_numpy(U)

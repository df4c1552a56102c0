"""Helffer-Sjoestrand functional calculus by plane quadrature.

With dbar = (d/du + i d/dv)/2, z = u + iv and R(z) = (H - z)^{-1}:

    f(H)  =  (1/pi) int dbar f~(z) R(z)          du dv      (first_order)
    g(H)  =  (1/pi) int dbar G~(z) R(z)^2        du dv      (primitive_second_order)
    g'(H) = -(2/pi) int dbar G~(z) R(z)^3        du dv

where G(x) = int_x^inf g(s) ds is the primitive of the switch g, and f~ is the
order-N quasi-analytic extension

    f~(u + iv) = sum_{k<=N} f^(k)(u) (iv)^k / k!  * chi(v / rho) * tau(u).

chi cuts off at |v| = rho and tau cuts off below the spectrum, where G is
affine (G = c - x) and its extension (c - z) is analytic.  Only the cut-off
zones and the transition strip of g contribute, so the integrand is smooth
and the tensor midpoint rule converges fast for C-infinity profiles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, pi

import numpy as np

from .lattice import HamiltonianMatrix
from .switches import SwitchProfile

VARIANTS = ("first_order", "primitive_second_order")


@dataclass(frozen=True)
class QuasiAnalyticExtension:
    base_function: SwitchProfile
    order: int = 5
    u_min: float = -1.0
    u_max: float = 1.0
    v_max: float = 1.0
    h: float = 0.05
    cutoff_width: float = 1.0
    cutoff_smoothness: str = "smoothstep17"

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("extension order must be >= 2")
        if not (self.h > 0 and self.v_max > 0 and self.u_max > self.u_min + self.cutoff_width):
            raise ValueError("invalid quadrature grid")

    @classmethod
    def for_spectrum(cls, g: SwitchProfile, lo, hi, order=5, h=0.05, v_max=1.0,
                     cutoff_width=1.0, margin=0.5, cutoff_smoothness="smoothstep17"):
        """Grid covering [lo, hi] (the spectrum) with the lower cutoff below lo - margin."""
        u_min = lo - margin - cutoff_width
        u_max = max(hi, g.hi) + margin
        return cls(g, order, u_min, u_max, v_max, h, cutoff_width, cutoff_smoothness)

    def with_step(self, h):
        return QuasiAnalyticExtension(self.base_function, self.order, self.u_min,
                                      self.u_max, self.v_max, h, self.cutoff_width,
                                      self.cutoff_smoothness)

    # cut-offs -----------------------------------------------------------
    def _tau(self, u, order=1):
        c = self.u_min + 0.5 * self.cutoff_width
        step = SwitchProfile(center=c, half_width=0.5 * self.cutoff_width,
                             smoothness=self.cutoff_smoothness)
        d = step.derivatives(u, order)
        return 1.0 - d[0], -d[1]

    def _chi(self, v):
        step = SwitchProfile(center=0.5 * self.v_max, half_width=0.5 * self.v_max,
                             smoothness=self.cutoff_smoothness)
        d = step.derivatives(np.abs(v), 1)
        return d[0], d[1] * np.sign(v)

    def grid(self):
        nu = int(np.ceil((self.u_max - self.u_min) / self.h))
        nv = int(np.ceil(2 * self.v_max / self.h))
        hu = (self.u_max - self.u_min) / nu
        hv = 2 * self.v_max / nv
        u = self.u_min + (np.arange(nu) + 0.5) * hu
        v = -self.v_max + (np.arange(nv) + 0.5) * hv
        return u, v, hu * hv

    def _jets(self, u, variant):
        """Derivatives 0..N+1 of the function being extended (g or G)."""
        N = self.order
        g = self.base_function
        if variant == "first_order":
            return g.derivatives(u, N + 1)
        d = np.empty((N + 2,) + np.shape(u))
        d[0] = g.primitive(u)
        d[1:] = -g.derivatives(u, N)
        return d

    def dbar(self, u, v, variant="primitive_second_order"):
        """dbar f~ on the mesh u (nu,) x v (nv,), shape (nu, nv)."""
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        N = self.order
        d = self._jets(u, variant)
        iv = 1j * v
        powers = np.stack([iv ** k / factorial(k) for k in range(N + 1)])  # (N+1, nv)
        F = d[: N + 1].T @ powers                                             # (nu, nv)
        top = np.outer(d[N + 1], powers[N])
        tau, dtau = self._tau(u)
        chi, dchi = self._chi(v)
        out = 0.5 * (top * np.outer(tau, chi)
                     + F * (np.outer(dtau, chi) + 1j * np.outer(tau, dchi)))
        return out

    def max_dbar_near_axis(self, variant="primitive_second_order"):
        """Max |dbar f~| on the two mesh rows closest to v = 0 (O(h^N) check)."""
        u, v, _ = self.grid()
        rows = np.argsort(np.abs(v))[:2]
        return float(np.abs(self.dbar(u, v[rows], variant)).max())


@dataclass
class HSResult:
    matrix: np.ndarray
    metadata: dict = field(default_factory=dict)


def _plane_integral(M, ext, variant, power, chunk=256):
    u, v, area = ext.grid()
    w = ext.dbar(u, v, variant)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    keep = np.abs(w) > 0
    z = (uu + 1j * vv)[keep]
    wz = w[keep] * area
    n = M.shape[0]
    eye = np.eye(n)
    acc = np.zeros((n, n), dtype=complex)
    for s in range(0, z.size, chunk):
        zs = z[s:s + chunk]
        R = np.linalg.inv(M[None, :, :] - zs[:, None, None] * eye[None])
        Rp = R
        for _ in range(power - 1):
            Rp = Rp @ R
        acc += np.einsum("k,kij->ij", wz[s:s + chunk], Rp)
    return acc, int(z.size)


def apply_function_hs(H, ext: QuasiAnalyticExtension, variant="primitive_second_order",
                      derivative=False, tol=1e-6, estimate_error=True) -> HSResult:
    """g(H) (or g'(H) with ``derivative=True``) from the plane integral.

    The quadrature error is estimated by repeating the integral at step 2h and
    is reported in the metadata (``error_estimate``, ``above_tolerance``).
    """
    M = H.entries if isinstance(H, HamiltonianMatrix) else np.asarray(H)
    wmin, wmax = np.linalg.eigvalsh(M)[[0, -1]]
    if wmin < ext.u_min + ext.cutoff_width or wmax > ext.u_max:
        raise ValueError("spectrum not inside the real range of the extension grid")
    if derivative and variant != "primitive_second_order":
        raise ValueError("g' is only available through the primitive (R^3) form")

    def run(e):
        if variant == "first_order":
            acc, npts = _plane_integral(M, e, variant, 1)
            return acc / pi, npts
        if derivative:
            acc, npts = _plane_integral(M, e, variant, 3)
            return -2.0 * acc / pi, npts
        acc, npts = _plane_integral(M, e, variant, 2)
        return acc / pi, npts

    out, npts = run(ext)
    meta = {"variant": variant, "derivative": bool(derivative), "order": ext.order,
            "h": ext.h, "points": npts}
    if estimate_error:
        coarse, _ = run(ext.with_step(2 * ext.h))
        err = float(np.abs(out - coarse).max())
        meta["error_estimate"] = err
        meta["above_tolerance"] = err > tol
    return HSResult(out, meta)

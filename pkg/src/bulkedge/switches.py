"""Smooth monotone 1 -> 0 switch profiles.

The same object serves as a spatial switch (Lambda_1, Lambda_2) and as an
energy switch g of a window.  Values and derivatives of any order are
exact.  Polynomial smoothsteps are regularized incomplete beta functions,
differentiated through their integrand; the C-infinity ``erf`` and ``cinf``
profiles go through Taylor jets.
"""
from dataclasses import dataclass, asdict

import re

import numpy as np
from scipy.special import beta, betainc

from . import taylor

SMOOTHNESS = ("smoothstep3", "smoothstep5", "erf", "cinf")


def _order_m(name):
    m = re.fullmatch(r"smoothstep(\d+)", name)
    if m is None:
        raise ValueError(f"unknown smoothness {name!r}")
    degree = int(m.group(1))
    if degree < 3 or degree % 2 == 0:
        raise ValueError("smoothstep degree must be odd and >= 3")
    return (degree - 1) // 2


def smoothstep_coefficients(degree):
    """Rising polynomial step of odd ``degree`` = 2m+1 with m vanishing
    derivatives at both ends (regularized incomplete beta I_u(m+1, m+1)),
    lowest power first.  Degree 3 and 5 are the classic smoothsteps."""
    m = _order_m(f"smoothstep{degree}")
    P = np.polynomial.polynomial
    return P.polyint(_derivative_coefficients(m))


def _derivative_coefficients(m):
    # s'(u) = (u - u^2)^m / B(m+1, m+1)
    return np.polynomial.polynomial.polypow([0.0, 1.0, -1.0], m) / beta(m + 1, m + 1)


# below this distance from the ends of [0,1] the erf step is flat to
# far below double precision, for every derivative order used here
_ERF_EDGE = 1e-3

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _erf_rise(u, order):
    """Derivatives 0..order of s(u) = (1 + erf((u-1/2)/sqrt(u(1-u))))/2."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((order + 1,) + u.shape)
    out[0] = (u >= 0.5).astype(float)
    inside = (u > _ERF_EDGE) & (u < 1.0 - _ERF_EDGE)
    if np.any(inside):
        x = taylor.variable(u[inside], order)
        one_minus = -x.copy()
        one_minus[0] = 1.0 - x[0]
        shifted = x.copy()
        shifted[0] = x[0] - 0.5
        y = taylor.mul(shifted, taylor.recip(taylor.sqrt_(taylor.mul(x, one_minus))))
        s = 0.5 * taylor.erf_(y)
        s[0] += 0.5
        out[:, inside] = taylor.derivatives(s)
    out[0, u >= 1.0 - _ERF_EDGE] = 1.0
    out[0, u <= _ERF_EDGE] = 0.0
    return out


def _cinf_half(u, order):
    # s(u) = e / (1 + e), e = exp(1/(1-u) - 1/u); the exponent is <= 0 for 0 < u <= 1/2
    x = taylor.variable(u, order)
    one_minus = -x.copy()
    one_minus[0] = 1.0 - x[0]
    e = taylor.exp_(taylor.recip(one_minus) - taylor.recip(x))
    den = e.copy()
    den[0] += 1.0
    return taylor.derivatives(taylor.mul(e, taylor.recip(den)))


def _cinf_rise(u, order):
    """Derivatives 0..order of s(u) = e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)})."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((order + 1,) + u.shape)
    out[0] = (u >= 0.5).astype(float)
    left = (u > _ERF_EDGE) & (u <= 0.5)
    right = (u > 0.5) & (u < 1.0 - _ERF_EDGE)
    if np.any(left):
        out[:, left] = _cinf_half(u[left], order)
    if np.any(right):
        # s(u) = 1 - s(1-u)
        d = _cinf_half(1.0 - u[right], order)
        sign = -((-1.0) ** np.arange(order + 1))
        out[:, right] = sign.reshape((-1, 1)) * d
        out[0, right] += 1.0
    return out


def rise_derivatives(u, order, smoothness="smoothstep5"):
    """Derivatives 0..order of the rising unit step s(u), s=0 for u<=0, 1 for u>=1."""
    u = np.asarray(u, dtype=float)
    if smoothness == "erf":
        return _erf_rise(u, order)
    if smoothness == "cinf":
        return _cinf_rise(u, order)
    m = _order_m(smoothness)
    inside = (u > 0.0) & (u < 1.0)
    out = np.zeros((order + 1,) + u.shape)
    out[0] = np.where(u >= 1.0, 1.0, 0.0)
    out[0, inside] = betainc(m + 1, m + 1, u[inside])
    c = _derivative_coefficients(m)
    for k in range(1, order + 1):
        out[k, inside] = np.polynomial.polynomial.polyval(u[inside], c)
        c = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
    return out


@dataclass(frozen=True)
class SwitchProfile:
    center: float = 0.0
    half_width: float = 0.5
    orientation: str = "one_on_left"
    smoothness: str = "smoothstep5"

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.orientation != "one_on_left":
            raise ValueError("only orientation 'one_on_left' is supported")
        if self.smoothness not in ("erf", "cinf"):
            _order_m(self.smoothness)

    @property
    def lo(self):
        return self.center - self.half_width

    @property
    def hi(self):
        return self.center + self.half_width

    def _u(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (2.0 * self.half_width)

    def __call__(self, x):
        return 1.0 - rise_derivatives(self._u(x), 0, self.smoothness)[0]

    def derivatives(self, x, order):
        """Array of shape (order+1, ...) with d^k/dx^k of the profile, k=0..order."""
        d = rise_derivatives(self._u(x), order, self.smoothness)
        scale = (2.0 * self.half_width) ** -np.arange(order + 1)
        out = -d * scale.reshape((-1,) + (1,) * (d.ndim - 1))
        out[0] += 1.0
        return out

    def derivative(self, x, order=1):
        return self.derivatives(x, order)[order]

    def primitive(self, x):
        """G(x) = int_x^inf profile(s) ds (finite since the profile vanishes on the right)."""
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.lo, self.center - x, 0.0)
        mid = (x > self.lo) & (x < self.hi)
        if np.any(mid):
            xm = x[mid]
            length = self.hi - xm
            nodes = xm[:, None] + length[:, None] * (0.5 * (_GL_X + 1.0))[None, :]
            vals = self(nodes)
            out = out.astype(float)
            out[mid] = 0.5 * length * (vals @ _GL_W)
        return out

    def to_dict(self):
        return asdict(self)

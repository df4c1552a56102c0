"""Hofstadter-type lattice Hamiltonians for bulk (torus) and edge (cylinder) models.

Site ordering is row-major, ``index = i * Ly + j`` with integer lattice
coordinates ``x1 = i - origin_offset[0]`` and ``x2 = j - origin_offset[1]``.
The Hamiltonian is ``(4 + energy_shift) I - hopping + disorder (+ wall)``, with
Landau-gauge Peierls phases ``exp(i 2 pi A(x1))`` on the bonds
``(x1, x2) -> (x1, x2 + 1)``, where ``A(x1)`` is the accumulated flux
(``A = phi * x1`` for a uniform field).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, asdict
from math import gcd
from typing import Optional

import numpy as np

from .switches import SwitchProfile

BC = ("periodic", "open")


class SpecError(ValueError):
    """Invalid or physically inconsistent model specification."""


@dataclass(frozen=True)
class Geometry:
    Lx: int
    Ly: int
    bc_x1: str = "periodic"
    bc_x2: str = "periodic"
    origin_offset: Optional[tuple] = None

    def __post_init__(self):
        if int(self.Lx) < 3 or int(self.Ly) < 3:
            raise SpecError("Lx and Ly must be at least 3")
        if self.bc_x1 not in BC or self.bc_x2 not in BC:
            raise SpecError(f"boundary conditions must be in {BC}")
        if self.origin_offset is None:
            object.__setattr__(self, "origin_offset", (self.Lx // 2, self.Ly // 2))
        else:
            object.__setattr__(self, "origin_offset", tuple(int(v) for v in self.origin_offset))

    @property
    def dim(self):
        return self.Lx * self.Ly

    @property
    def is_torus(self):
        return self.bc_x1 == "periodic" and self.bc_x2 == "periodic"

    def x1_values(self):
        return np.arange(self.Lx) - self.origin_offset[0]

    def x2_values(self):
        return np.arange(self.Ly) - self.origin_offset[1]

    def coords(self):
        """(dim, 2) integer array of (x1, x2) per site index."""
        x1 = np.repeat(self.x1_values(), self.Ly)
        x2 = np.tile(self.x2_values(), self.Lx)
        return np.stack([x1, x2], axis=1)

    def index(self, i, j):
        return i * self.Ly + j


@dataclass(frozen=True)
class FluxSpec:
    p: int = 1
    q: int = 3
    gauge: str = "landau"

    def __post_init__(self):
        if self.q <= 0:
            raise SpecError("q must be positive")
        if gcd(int(self.p), int(self.q)) != 1 and self.p != 0:
            raise SpecError(f"gcd(p, q) must be 1, got p={self.p}, q={self.q}")
        if self.p == 0 and self.q != 1:
            raise SpecError("zero flux must be written p=0, q=1")
        if not 0 <= self.p < self.q:
            raise SpecError("need 0 <= p/q < 1")
        if self.gauge != "landau":
            raise SpecError("only the landau gauge is implemented")

    @property
    def phi(self):
        return self.p / self.q


@dataclass(frozen=True)
class DisorderSpec:
    kind: str = "none"
    W: float = 0.0
    distribution: Optional[str] = None
    single_site_support: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("electric", "magnetic", "none"):
            raise SpecError(f"unknown disorder kind {self.kind!r}")
        if self.W < 0:
            raise SpecError("disorder strength W must be nonnegative")
        if self.single_site_support != 0:
            raise SpecError("only single_site_support=0 is implemented")
        if self.distribution is None:
            dist = "uniform_centered" if self.kind == "magnetic" else "uniform01"
            object.__setattr__(self, "distribution", dist)
        if self.distribution not in ("uniform01", "uniform_centered"):
            raise SpecError(f"unknown distribution {self.distribution!r}")

    def bounds(self):
        """(M1, M2) with -M1 <= draw <= M2."""
        if self.kind == "none" or self.W == 0:
            return 0.0, 0.0
        if self.distribution == "uniform01":
            return 0.0, float(self.W)
        return self.W / 2.0, self.W / 2.0


@dataclass(frozen=True)
class WallSpec:
    kind: str = "electric"
    a: float = 8.0
    height: float = 30.0
    width: float = 2.0

    def __post_init__(self):
        if self.kind not in ("electric", "magnetic"):
            raise SpecError(f"unknown wall kind {self.kind!r}")
        if self.a < 0:
            raise SpecError("wall position a must be nonnegative")
        if not self.width > 0:
            raise SpecError("wall width must be positive")

    def profile(self, x1):
        """Decreasing profile: height for x1 <= -a-w, 0 for x1 >= -a+w."""
        step = SwitchProfile(center=-self.a, half_width=self.width, smoothness="smoothstep3")
        return self.height * step(x1)


@dataclass(frozen=True)
class ModelSpec:
    geometry: Geometry
    flux: FluxSpec = field(default_factory=FluxSpec)
    disorder: DisorderSpec = field(default_factory=DisorderSpec)
    wall: Optional[WallSpec] = None
    energy_shift: float = 0.0

    def __post_init__(self):
        if self.wall is not None and self.geometry.bc_x1 != "open":
            raise SpecError("a wall requires bc_x1='open'")

    def to_dict(self):
        d = asdict(self)
        d["geometry"]["origin_offset"] = list(self.geometry.origin_offset)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {"geometry", "flux", "disorder", "wall", "energy_shift", "schema_version"}
        extra = set(d) - allowed
        if extra:
            raise SpecError(f"unknown ModelSpec keys: {sorted(extra)}")
        d.pop("schema_version", None)
        try:
            geo = Geometry(**d["geometry"])
            flux = FluxSpec(**d.get("flux", {}))
            dis = DisorderSpec(**d.get("disorder", {}))
            wall = WallSpec(**d["wall"]) if d.get("wall") else None
        except TypeError as exc:
            raise SpecError(str(exc)) from None
        return cls(geo, flux, dis, wall, float(d.get("energy_shift", 0.0)))

    def to_json(self):
        from . import SCHEMA_VERSION
        d = self.to_dict()
        d["schema_version"] = SCHEMA_VERSION
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def spec_hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass
class HamiltonianMatrix:
    entries: np.ndarray
    site_coords: np.ndarray
    spec: Optional[ModelSpec] = None

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def content_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.entries).tobytes()).hexdigest()[:16]


# --------------------------------------------------------------------------
# disorder

def sample_disorder(spec: DisorderSpec, geometry: Geometry) -> np.ndarray:
    """One draw omega per site (electric) or per x2-bond (magnetic), scaled by W.

    Magnetic draws are in flux quanta, i.e. the bond phase changes by 2*pi*omega.
    """
    n = geometry.dim
    if spec.kind == "none" or spec.W == 0:
        return np.zeros(n)
    rng = np.random.default_rng(spec.seed)
    u = rng.random(n)
    if spec.distribution == "uniform_centered":
        u = u - 0.5
    return spec.W * u


def write_realization(path, vec):
    """Little-endian float64 payload preceded by an 8-byte little-endian dim."""
    vec = np.ascontiguousarray(vec, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", vec.size))
        fh.write(vec.tobytes())


def read_realization(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n:
        raise ValueError(f"realization file truncated: header {n}, payload {data.size}")
    return data.copy()


# --------------------------------------------------------------------------
# construction

def _vector_potential(spec: ModelSpec):
    """Accumulated flux A(x1) per column, in flux quanta."""
    geo, phi = spec.geometry, spec.flux.phi
    x1 = geo.x1_values().astype(float)
    wall = spec.wall
    if wall is None or wall.kind != "magnetic":
        return phi * x1
    # Iwatsuka profile: plaquette between columns x1 and x1+1 carries
    # phi + B(x1 + 1/2); A is its running sum, anchored at A(0) = 0
    plaq = phi + wall.profile(x1[:-1] + 0.5)
    A = np.concatenate([[0.0], np.cumsum(plaq)])
    return A - A[geo.origin_offset[0]]


def _check_quantization(spec: ModelSpec):
    geo, flux = spec.geometry, spec.flux
    if geo.bc_x1 == "periodic" and (flux.p * geo.Lx) % flux.q != 0:
        raise SpecError(
            f"flux {flux.p}/{flux.q} not quantized on a torus with Lx={geo.Lx}: "
            f"q must divide Lx so the Landau-gauge phases close around x1")


def _assemble(spec: ModelSpec, realization=None, extra_diag=None):
    geo = spec.geometry
    Lx, Ly = geo.Lx, geo.Ly
    n = geo.dim
    dis = spec.disorder
    if realization is None:
        realization = sample_disorder(dis, geo)
    realization = np.asarray(realization, dtype=float)
    if realization.shape != (n,):
        raise SpecError(f"realization has shape {realization.shape}, expected ({n},)")

    A = _vector_potential(spec)
    idx = np.arange(n).reshape(Lx, Ly)
    H = np.zeros((n, n), dtype=complex)

    # x2 bonds (i, j) -> (i, j+1)
    theta = 2 * np.pi * np.repeat(A[:, None], Ly, axis=1)
    if dis.kind == "magnetic":
        theta = theta + 2 * np.pi * realization.reshape(Lx, Ly)
    jmax = Ly if geo.bc_x2 == "periodic" else Ly - 1
    a = idx[:, :jmax].ravel()
    b = idx[:, (np.arange(jmax) + 1) % Ly].ravel()
    t = -np.exp(1j * theta[:, :jmax].ravel())
    H[b, a] += t
    H[a, b] += np.conj(t)

    # x1 bonds (i, j) -> (i+1, j), no phase in this gauge
    imax = Lx if geo.bc_x1 == "periodic" else Lx - 1
    a = idx[:imax, :].ravel()
    b = idx[(np.arange(imax) + 1) % Lx, :].ravel()
    H[b, a] += -1.0
    H[a, b] += -1.0

    diag = np.full(n, 4.0 + spec.energy_shift)
    if dis.kind == "electric":
        diag = diag + realization
    if extra_diag is not None:
        diag = diag + extra_diag
    H[np.arange(n), np.arange(n)] += diag
    return HamiltonianMatrix(H, geo.coords(), spec)


def build_bulk(spec: ModelSpec, realization=None) -> HamiltonianMatrix:
    """Bulk Hamiltonian (no wall).  ``realization`` overrides the seeded draw."""
    if spec.wall is not None:
        raise SpecError("build_bulk requires a spec without wall")
    _check_quantization(spec)
    return _assemble(spec, realization)


def build_edge(spec: ModelSpec, realization=None) -> HamiltonianMatrix:
    """Cylinder Hamiltonian with a soft left wall centred at x1 = -a."""
    wall = spec.wall
    if wall is None:
        raise SpecError("build_edge requires a wall")
    geo = spec.geometry
    x1 = geo.x1_values()
    if -wall.a - wall.width < x1[0] - 0.5 or wall.a + wall.width >= geo.Lx / 2:
        raise SpecError(
            f"wall (a={wall.a}, w={wall.width}) extends past the lattice; need a + w < Lx/2")
    extra = None
    if wall.kind == "electric":
        extra = np.repeat(wall.profile(x1), geo.Ly)
    return _assemble(spec, realization, extra)


def apply_gauge(H: HamiltonianMatrix, phases) -> HamiltonianMatrix:
    """D H D^dagger for the diagonal unitary D = diag(exp(i phases))."""
    d = np.exp(1j * np.asarray(phases, dtype=float))
    return HamiltonianMatrix(d[:, None] * H.entries * d.conj()[None, :], H.site_coords, H.spec)


def magnetic_translate(state, alpha, flux: FluxSpec, geometry: Geometry):
    """Magnetic translation by the lattice vector alpha = (a1, a2).

    In the Landau gauge used here this is the shift psi(x - alpha) followed
    by the gauge factor exp(i 2 pi phi a1 x2), which is the symmetric-gauge
    operator exp(-i pi phi alpha ^ x) after the corresponding gauge change.
    """
    if not geometry.is_torus:
        raise SpecError("magnetic translations need a torus geometry")
    a1, a2 = (int(v) for v in alpha)
    phi = flux.phi
    if (flux.p * a1 * geometry.Ly) % flux.q != 0:
        raise SpecError("phi * a1 * Ly must be an integer for a single-valued translation")
    psi = np.asarray(state).reshape(geometry.Lx, geometry.Ly)
    shifted = np.roll(psi, shift=(a1, a2), axis=(0, 1))
    j = np.arange(geometry.Ly)
    phase = np.exp(2j * np.pi * phi * a1 * j)
    return (shifted * phase[None, :]).ravel()


def plaquette_flux(H: HamiltonianMatrix, geometry: Geometry) -> np.ndarray:
    """Flux (in quanta, mod 1 in [0,1)) through every plaquette, read off the bond phases.

    Shape (Lx', Ly') where plaquette (i, j) has lower-left corner at site (i, j);
    open directions drop the last row/column.
    """
    Lx, Ly = geometry.Lx, geometry.Ly
    M = H.entries
    ni = Lx if geometry.bc_x1 == "periodic" else Lx - 1
    nj = Ly if geometry.bc_x2 == "periodic" else Ly - 1
    i = np.arange(ni)[:, None]
    j = np.arange(nj)[None, :]
    ip, jp = (i + 1) % Lx, (j + 1) % Ly
    s00 = geometry.index(i, j)
    s10 = geometry.index(ip, j)
    s11 = geometry.index(ip, jp)
    s01 = geometry.index(i, jp)
    # hopping amplitude a -> b is -H[b, a]
    loop = (-M[s10, s00]) * (-M[s11, s10]) * (-M[s01, s11]) * (-M[s00, s01])
    return np.mod(np.angle(loop) / (2 * np.pi), 1.0)

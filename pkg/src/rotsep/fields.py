"""Discrete vector fields on the torus and their Hodge splitting.

An edge field stores one value per undirected edge on the canonical
orientation (rightward, upward); antisymmetry phi(x,y) = -phi(y,x) is
structural. The splitting

    phi = gradient part + circulation part + harmonic part

is computed with one FFT Poisson solve on the graph Laplacian
(eigenvalues 4 - 2cos(2 pi k1/N) - 2cos(2 pi k2/N), zero mode dropped),
the harmonic part from the two axis means, and the circulation part as
the validated remainder.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .torus import LEFT, RIGHT, UP, DirectedEdge, OrientedFace, TorusLattice


class EdgeField:
    """Antisymmetric function on directed edges.

    `h[ix, iy]` is the value on (ix,iy) -> (ix+1,iy), `v[ix, iy]` the value
    on (ix,iy) -> (ix,iy+1); reversed edges carry the opposite sign.
    """

    __slots__ = ("lattice", "h", "v")

    def __init__(self, lattice: TorusLattice, h: np.ndarray, v: np.ndarray):
        n = lattice.n
        self.lattice = lattice
        self.h = np.asarray(h, dtype=float).reshape(n, n)
        self.v = np.asarray(v, dtype=float).reshape(n, n)

    @classmethod
    def zeros(cls, lattice: TorusLattice) -> "EdgeField":
        n = lattice.n
        return cls(lattice, np.zeros((n, n)), np.zeros((n, n)))

    @classmethod
    def harmonic_basis(cls, lattice: TorusLattice, axis: int) -> "EdgeField":
        """phi^(i): value 1 on every edge along the given axis, 0 on the other."""
        f = cls.zeros(lattice)
        (f.h if axis == 0 else f.v)[:] = 1.0
        return f

    def copy(self) -> "EdgeField":
        return EdgeField(self.lattice, self.h.copy(), self.v.copy())

    def edge_value(self, e: DirectedEdge) -> float:
        ix, iy = e.tail
        if e.direction == RIGHT:
            return float(self.h[ix, iy])
        if e.direction == UP:
            return float(self.v[ix, iy])
        hx, hy = e.head
        if e.direction == LEFT:
            return -float(self.h[hx, hy])
        return -float(self.v[hx, hy])

    def flat_canonical(self) -> np.ndarray:
        """Values indexed by undirected edge id 2*flat(v) + axis."""
        out = np.empty(self.lattice.n_undirected_edges)
        out[0::2] = self.h.ravel()
        out[1::2] = self.v.ravel()
        return out

    @classmethod
    def from_flat_canonical(cls, lattice: TorusLattice, values: np.ndarray) -> "EdgeField":
        values = np.asarray(values, dtype=float)
        return cls(lattice, values[0::2], values[1::2])

    # algebra -------------------------------------------------------------

    def __add__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.lattice, self.h + other.h, self.v + other.v)

    def __sub__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.lattice, self.h - other.h, self.v - other.v)

    def __mul__(self, c: float) -> "EdgeField":
        return EdgeField(self.lattice, self.h * c, self.v * c)

    __rmul__ = __mul__

    def inner(self, other: "EdgeField") -> float:
        """Scalar product over *directed* edges (each undirected edge counts twice)."""
        return 2.0 * float(np.sum(self.h * other.h) + np.sum(self.v * other.v))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def max_abs(self) -> float:
        return max(np.abs(self.h).max(), np.abs(self.v).max())

    # differential operators ------------------------------------------------

    def divergence_grid(self) -> np.ndarray:
        """Sum of phi over the 4 out-edges of each vertex, as an (N, N) grid."""
        h, v = self.h, self.v
        return h - np.roll(h, 1, axis=0) + v - np.roll(v, 1, axis=1)

    def divergence(self, vertex) -> float:
        ix, iy = self.lattice.wrap(vertex)
        return float(self.divergence_grid()[ix, iy])

    def circulation_grid(self) -> np.ndarray:
        """Anticlockwise cycle sum around each face, indexed by anchor."""
        h, v = self.h, self.v
        return h + np.roll(v, -1, axis=0) - np.roll(h, -1, axis=1) - v

    def face_circulation(self, f: OrientedFace) -> float:
        ix, iy = self.lattice.wrap(f.anchor)
        c = float(self.circulation_grid()[ix, iy])
        return c if f.anticlockwise else -c

    def axis_means(self) -> tuple[float, float]:
        return float(self.h.mean()), float(self.v.mean())


class TwoForm:
    """Function on faces, read on the anticlockwise orientation; psi(-f) = -psi(f)."""

    __slots__ = ("lattice", "values")

    def __init__(self, lattice: TorusLattice, values: np.ndarray):
        n = lattice.n
        self.lattice = lattice
        self.values = np.asarray(values, dtype=float).reshape(n, n)

    def face_value(self, f: OrientedFace) -> float:
        ix, iy = self.lattice.wrap(f.anchor)
        val = float(self.values[ix, iy])
        return val if f.anticlockwise else -val

    def boundary(self) -> EdgeField:
        """delta psi(e) = psi(f+(e)) - psi(f-(e)); divergence-free by construction."""
        p = self.values
        h = p - np.roll(p, 1, axis=1)  # right edge at x: f+ anchored x, f- at x - e2
        v = np.roll(p, 1, axis=0) - p  # up edge at x: f+ anchored x - e1, f- at x
        return EdgeField(self.lattice, h, v)


def two_form_boundary(psi: TwoForm) -> EdgeField:
    return psi.boundary()


def gradient(lattice: TorusLattice, f: np.ndarray) -> EdgeField:
    """Discrete gradient (nabla f)(x, y) = f(y) - f(x) of a vertex function."""
    f = np.asarray(f, dtype=float).reshape(lattice.n, lattice.n)
    return EdgeField(lattice, np.roll(f, -1, axis=0) - f, np.roll(f, -1, axis=1) - f)


def divergence(phi: EdgeField, vertex) -> float:
    return phi.divergence(vertex)


def face_circulation(phi: EdgeField, f: OrientedFace) -> float:
    return phi.face_circulation(f)


def solve_poisson(lattice: TorusLattice, rhs: np.ndarray) -> np.ndarray:
    """Solve (graph Laplacian) f = rhs on the torus, zero-mean normalization.

    rhs must have zero mean (it is projected out of the k = 0 mode).
    """
    n = lattice.n
    rhs = np.asarray(rhs, dtype=float).reshape(n, n)
    k = np.arange(n)
    lam = (2.0 * np.cos(2.0 * np.pi * k / n) - 2.0)[:, None] + (
        2.0 * np.cos(2.0 * np.pi * k / n) - 2.0
    )[None, :]
    lam[0, 0] = 1.0
    fhat = np.fft.fft2(rhs) / lam
    fhat[0, 0] = 0.0
    return np.real(np.fft.ifft2(fhat))


class HodgeParts(NamedTuple):
    grad: EdgeField
    circ: EdgeField
    harm: EdgeField
    potential: np.ndarray


def hodge_decompose(phi: EdgeField, validate: bool = True) -> HodgeParts:
    """Split phi into orthogonal gradient + circulation + harmonic parts.

    The harmonic coefficients are the axis means of phi, the gradient part
    is nabla f with f solving the Poisson equation for div(phi), and the
    circulation part is the remainder, validated to be divergence-free
    with zero axis means.
    """
    lat = phi.lattice
    c1, c2 = phi.axis_means()
    harm = EdgeField(lat, np.full((lat.n, lat.n), c1), np.full((lat.n, lat.n), c2))
    f = solve_poisson(lat, phi.divergence_grid())
    grad = gradient(lat, f)
    circ = phi - grad - harm
    if validate:
        scale = max(phi.max_abs(), 1e-300)
        resid = max(
            np.abs(circ.divergence_grid()).max() / scale,
            abs(circ.h.mean()) / scale,
            abs(circ.v.mean()) / scale,
        )
        if resid > 1e-9:
            raise RuntimeError(f"Hodge remainder failed validation, residual {resid:.3e}")
    return HodgeParts(grad, circ, harm, f)


# -- continuum vector fields and their discretization ------------------------


@dataclass
class VectorField:
    """Smooth vector field on the unit torus with optional analytic derivatives.

    g1, g2 take vectorized (u1, u2) arrays. When div/curl_perp are absent,
    consumers fall back to spectral differentiation of grid samples.
    curl_perp is the scalar -d(g1)/du2 + d(g2)/du1. `potential` marks exact
    gradient fields (g = nabla potential).
    """

    g1: Callable
    g2: Callable
    div: Optional[Callable] = None
    curl_perp: Optional[Callable] = None
    potential: Optional[Callable] = None
    name: str = "field"

    def __call__(self, u1, u2):
        return self.g1(u1, u2), self.g2(u1, u2)

    def sup_norm(self, samples: int = 256) -> float:
        """max over components of |G_i| on a sampling grid."""
        u = np.arange(samples) / samples
        u1, u2 = np.meshgrid(u, u, indexing="ij")
        return float(max(np.abs(self.g1(u1, u2)).max(), np.abs(self.g2(u1, u2)).max()))


def constant_field(ex: float, ey: float, name: str = "const") -> VectorField:
    zero = lambda u1, u2: np.zeros_like(np.asarray(u1, dtype=float))
    return VectorField(
        g1=lambda u1, u2: np.full_like(np.asarray(u1, dtype=float), ex),
        g2=lambda u1, u2: np.full_like(np.asarray(u1, dtype=float), ey),
        div=zero,
        curl_perp=zero,
        name=name,
    )


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(6)


def discretize_field(field: VectorField, lattice: TorusLattice) -> EdgeField:
    """Line integrals of the field along every lattice edge (canonical orientation).

    Exact gradient fields use the potential difference directly (fundamental
    theorem of calculus); everything else gets 6-point Gauss-Legendre per
    segment, which keeps the quadrature error below 1e-12 for the Fourier
    frequencies in use.
    """
    n = lattice.n
    u = np.arange(n) / n
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    if field.potential is not None:
        f = field.potential(u1, u2)
        return EdgeField(lattice, np.roll(f, -1, axis=0) - f, np.roll(f, -1, axis=1) - f)
    half = 0.5 / n
    offsets = half * (_GAUSS_NODES + 1.0)  # quadrature abscissae in [0, 1/N)
    h = np.zeros((n, n))
    v = np.zeros((n, n))
    for off, w in zip(offsets, _GAUSS_WEIGHTS):
        h += w * field.g1(u1 + off, u2)
        v += w * field.g2(u1, u2 + off)
    return EdgeField(lattice, h * half, v * half)


# -- Fourier test modes and dual Sobolev norms --------------------------------


def _lex_positive(z: tuple[int, int]) -> bool:
    return z[0] > 0 or (z[0] == 0 and z[1] > 0)


def basis_scalar(z: tuple[int, int]) -> Callable:
    """Real Fourier basis h_z: 1, sqrt(2) cos(2 pi z.u), or sqrt(2) sin(2 pi z.u)."""
    z1, z2 = z
    if z1 == 0 and z2 == 0:
        return lambda u1, u2: np.ones_like(np.asarray(u1, dtype=float))
    if _lex_positive(z):
        return lambda u1, u2: math.sqrt(2.0) * np.cos(2.0 * np.pi * (z1 * u1 + z2 * u2))
    return lambda u1, u2: math.sqrt(2.0) * np.sin(2.0 * np.pi * (z1 * u1 + z2 * u2))


def basis_scalar_derivative(z: tuple[int, int], axis: int) -> Callable:
    z1, z2 = z
    zi = (z1, z2)[axis]
    if z1 == 0 and z2 == 0:
        return lambda u1, u2: np.zeros_like(np.asarray(u1, dtype=float))
    c = 2.0 * np.pi * zi * math.sqrt(2.0)
    if _lex_positive(z):
        return lambda u1, u2: -c * np.sin(2.0 * np.pi * (z1 * u1 + z2 * u2))
    return lambda u1, u2: c * np.cos(2.0 * np.pi * (z1 * u1 + z2 * u2))


@dataclass(frozen=True)
class FourierMode:
    """Component index j in {1, 2} and integer frequency pair z."""

    j: int
    z: tuple[int, int]

    def __post_init__(self):
        if self.j not in (1, 2):
            raise ValueError("component index must be 1 or 2")

    @property
    def gamma(self) -> float:
        return 1.0 + 4.0 * np.pi**2 * (self.z[0] ** 2 + self.z[1] ** 2)

    def vector_field(self) -> VectorField:
        """I^{j,z}: h_z in component j, zero in the other."""
        hz = basis_scalar(self.z)
        zero = lambda u1, u2: np.zeros_like(np.asarray(u1, dtype=float))
        d1 = basis_scalar_derivative(self.z, 0)
        d2 = basis_scalar_derivative(self.z, 1)
        if self.j == 1:
            return VectorField(hz, zero, div=d1,
                               curl_perp=lambda u1, u2: -d2(u1, u2),
                               name=f"I(1,{self.z[0]},{self.z[1]})")
        return VectorField(zero, hz, div=d2, curl_perp=d1,
                           name=f"I(2,{self.z[0]},{self.z[1]})")


def modes_up_to(z_max: int):
    """All FourierModes with |z|_inf <= z_max, both components."""
    out = []
    for j in (1, 2):
        for z1 in range(-z_max, z_max + 1):
            for z2 in range(-z_max, z_max + 1):
                out.append(FourierMode(j, (z1, z2)))
    return out


MIN_DUAL_EXPONENT = 2.0  # convergence of the defining sum needs k > d/2 + 1 = 2


def sobolev_dual_norm(pairings: dict, k: float, z_max: int) -> tuple[float, float]:
    """Truncated squared dual norm sum_{j,|z|<=Z} gamma_z^(-k) pairing^2.

    `pairings` maps FourierMode (or (j, z) tuples) to the pairing values;
    every mode with |z|_inf <= z_max must be present. Returns the truncated
    sum and the contribution of the outermost shell |z|_inf = z_max as a
    truncation diagnostic. Exponents k <= 2 are rejected: the defining sum
    is only guaranteed to converge for k > k* = 2.
    """
    if k <= MIN_DUAL_EXPONENT:
        raise ValueError(
            f"dual-norm exponent k = {k} rejected: need k > k* = {MIN_DUAL_EXPONENT}"
        )

    def lookup(mode: FourierMode) -> float:
        if mode in pairings:
            return float(pairings[mode])
        key = (mode.j, mode.z)
        if key in pairings:
            return float(pairings[key])
        raise KeyError(f"missing pairing for {mode}")

    total = 0.0
    shell = 0.0
    for mode in modes_up_to(z_max):
        term = lookup(mode) ** 2 / mode.gamma**k
        total += term
        if max(abs(mode.z[0]), abs(mode.z[1])) == z_max:
            shell += term
    return total, shell


# -- file format --------------------------------------------------------------

_DIRECTION_NAMES = {0: "right", 1: "up"}
_DIRECTION_CODES = {"right": 0, "up": 1}


def write_edge_field_csv(field: EdgeField, path) -> None:
    """CSV rows (x_index, y_index, direction, value) on the canonical orientation."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_index", "y_index", "direction", "value"])
        n = field.lattice.n
        for ix in range(n):
            for iy in range(n):
                w.writerow([ix, iy, "right", repr(float(field.h[ix, iy]))])
                w.writerow([ix, iy, "up", repr(float(field.v[ix, iy]))])


def read_edge_field_csv(lattice: TorusLattice, path) -> EdgeField:
    field = EdgeField.zeros(lattice)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ix, iy = int(row["x_index"]), int(row["y_index"])
            axis = _DIRECTION_CODES[row["direction"].strip()]
            (field.h if axis == 0 else field.v)[ix, iy] = float(row["value"])
    return field

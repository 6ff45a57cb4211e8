"""Particle configurations and the rotation-augmented exclusion rates.

A particle at the tail of an edge jumps to an empty head at base rate 1.
Each of the two faces flanking the edge modifies the rate by +-alpha when
it is *activated*: it holds exactly two particles at opposite corners.
The activated face to the left of the jump direction adds alpha, the one
to the right subtracts alpha; an optional external field multiplies the
result by exp(H_N(e)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .torus import DirectedEdge, OrientedFace, TorusLattice


class Configuration:
    """Occupation numbers eta(x) in {0,1}, one per vertex.

    Stored flat in row-major order over (x_index, y_index): the bit of
    vertex (ix, iy) sits at position ix*N + iy.
    """

    __slots__ = ("lattice", "occ")

    def __init__(self, lattice: TorusLattice, occ: np.ndarray):
        occ = np.ascontiguousarray(occ, dtype=np.uint8).ravel()
        if occ.size != lattice.n_vertices:
            raise ValueError(f"need {lattice.n_vertices} occupation numbers, got {occ.size}")
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupation numbers must be 0 or 1")
        self.lattice = lattice
        self.occ = occ

    @classmethod
    def empty(cls, lattice: TorusLattice) -> "Configuration":
        return cls(lattice, np.zeros(lattice.n_vertices, dtype=np.uint8))

    @classmethod
    def full(cls, lattice: TorusLattice) -> "Configuration":
        return cls(lattice, np.ones(lattice.n_vertices, dtype=np.uint8))

    @classmethod
    def from_sites(cls, lattice: TorusLattice, occupied) -> "Configuration":
        occ = np.zeros(lattice.n_vertices, dtype=np.uint8)
        for v in occupied:
            occ[lattice.flat(v)] = 1
        return cls(lattice, occ)

    @classmethod
    def from_bit_index(cls, lattice: TorusLattice, code: int) -> "Configuration":
        """Configuration number `code`: bit k of code is the occupation of flat site k."""
        occ = (code >> np.arange(lattice.n_vertices)) & 1
        return cls(lattice, occ.astype(np.uint8))

    def __getitem__(self, vertex) -> int:
        return int(self.occ[self.lattice.flat(vertex)])

    def particle_count(self) -> int:
        return int(self.occ.sum())

    def copy(self) -> "Configuration":
        return Configuration(self.lattice, self.occ.copy())

    def translate(self, z) -> "Configuration":
        """(tau_z eta)(x) = eta(x - z)."""
        grid = self.occ.reshape(self.lattice.n, self.lattice.n)
        return Configuration(self.lattice, np.roll(grid, shift=z, axis=(0, 1)).ravel())

    def to_bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.occ)

    @classmethod
    def from_bitstring(cls, lattice: TorusLattice, bits: str) -> "Configuration":
        return cls(lattice, np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0"))

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and np.array_equal(self.occ, other.occ)

    def __hash__(self):
        return hash(self.occ.tobytes())


@dataclass(frozen=True)
class ModelParams:
    """Rotation strength alpha (|alpha| < 1) and optional external field.

    `field` holds the discretized field H_N on directed edges (an EdgeField
    from rotsep.fields); rates get the multiplier exp(H_N(e)).
    """

    alpha: float = 0.0
    field: Optional[object] = None

    def __post_init__(self):
        if not abs(self.alpha) < 1:
            raise ValueError(f"|alpha| must be < 1, got {self.alpha}")


class CurrentParts(NamedTuple):
    total: float
    grad_part: float
    circ_part: float


def _face_activation(occ: np.ndarray, corners) -> int:
    """1 if the face holds exactly two particles at opposite corners."""
    o0, o1, o2, o3 = (int(occ[c]) for c in corners)
    if o0 == 1 and o2 == 1 and o1 == 0 and o3 == 0:
        return 1
    if o1 == 1 and o3 == 1 and o0 == 0 and o2 == 0:
        return 1
    return 0


def g_value(config: Configuration, face: OrientedFace, params: ModelParams) -> float:
    """Rotation weight of a face: alpha when activated, else 0.

    Depends only on the unoriented face, i.e. on the four occupation
    numbers at its corners.
    """
    lat = config.lattice
    corners = lat.face_corner_table[lat.flat(face.anchor)]
    return params.alpha * _face_activation(config.occ, corners)


def rotation_coefficient(config: Configuration, e: DirectedEdge) -> int:
    """Integer coefficient of alpha in the jump rate across e (in {-1, 0, 1})."""
    lat = config.lattice
    fplus, fminus = lat.flank_anchor_tables
    v, d = lat.flat(e.tail), e.direction
    corners = lat.face_corner_table
    return _face_activation(config.occ, corners[fplus[v, d]]) - _face_activation(
        config.occ, corners[fminus[v, d]]
    )


def jump_rate(config: Configuration, e: DirectedEdge, params: ModelParams) -> float:
    """Rate at which the particle at e.tail jumps to e.head.

    Zero unless eta(tail) = 1 and eta(head) = 0; otherwise
    1 + g(left face) - g(right face), times exp(H_N(e)) under a field.
    """
    lat = config.lattice
    occ = config.occ
    if occ[lat.flat(e.tail)] == 0 or occ[lat.flat(e.head)] == 1:
        return 0.0
    rate = 1.0 + params.alpha * rotation_coefficient(config, e)
    if params.field is not None:
        rate *= np.exp(params.field.edge_value(e))
    assert rate >= 0.0, f"negative rate {rate} on {e}"
    return rate


def instantaneous_current(
    config: Configuration, e: DirectedEdge, params: ModelParams
) -> CurrentParts:
    """Net jump rate across e and its gradient/circulation split.

    total = c(tail->head) - c(head->tail); grad_part = eta(tail) - eta(head);
    circ_part = g(left face) - g(right face). The split is exact for the
    unperturbed model; a params with a field set is rejected.
    """
    if params.field is not None:
        raise ValueError("current decomposition is only defined without an external field")
    lat = config.lattice
    total = jump_rate(config, e, params) - jump_rate(config, lat.reverse(e), params)
    grad = float(config.occ[lat.flat(e.tail)]) - float(config.occ[lat.flat(e.head)])
    fplus, fminus = lat.adjacent_faces(e)
    circ = g_value(config, fplus, params) - g_value(config, fminus, params)
    return CurrentParts(total, grad, circ)


def swap(config: Configuration, e: DirectedEdge) -> Configuration:
    """eta^{x,y}: exchange the occupation numbers at the endpoints of e."""
    lat = config.lattice
    occ = config.occ.copy()
    i, j = lat.flat(e.tail), lat.flat(e.head)
    occ[i], occ[j] = occ[j], occ[i]
    return Configuration(lat, occ)


def all_configurations(lattice: TorusLattice):
    """Every configuration of the lattice, as bit patterns of 0..2^(N^2)-1."""
    for code in range(1 << lattice.n_vertices):
        yield Configuration.from_bit_index(lattice, code)


def all_occupations_matrix(n_sites: int) -> np.ndarray:
    """uint8 (2^n_sites, n_sites): row k is the bit pattern of k."""
    codes = np.arange(1 << n_sites, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_sites)) & 1).astype(np.uint8)

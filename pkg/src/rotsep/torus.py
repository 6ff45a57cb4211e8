"""Geometry of the periodic N x N square lattice with mesh 1/N.

Vertices are integer pairs (ix, iy) in {0..N-1}^2; the physical embedding
u = (ix/N, iy/N) is applied only where continuum functions are evaluated.
Directed edges join nearest neighbours, unoriented faces are unit squares
identified by their lower-left anchor, and each oriented face is an
elementary 4-cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Direction codes for directed edges out of a vertex.
RIGHT, UP, LEFT, DOWN = 0, 1, 2, 3
DIRECTION_VECTORS = ((1, 0), (0, 1), (-1, 0), (0, -1))
OPPOSITE = (LEFT, DOWN, RIGHT, UP)
AXIS_OF = (0, 1, 0, 1)  # axis of the undirected edge under a direction code


@dataclass(frozen=True)
class DirectedEdge:
    """Ordered pair of nearest-neighbour vertices: tail -> head."""

    tail: tuple[int, int]
    head: tuple[int, int]
    direction: int


@dataclass(frozen=True)
class OrientedFace:
    """Unit square anchored at its lower-left corner, plus a traversal sense."""

    anchor: tuple[int, int]
    anticlockwise: bool

    def __neg__(self) -> "OrientedFace":
        return OrientedFace(self.anchor, not self.anticlockwise)


class TorusLattice:
    """Immutable geometry tables for the N x N discrete torus (N >= 3).

    N = 2 is rejected: opposite jumps out of a vertex would share both
    endpoints and the edge set would degenerate.
    """

    def __init__(self, n: int):
        if n < 3:
            raise ValueError(f"lattice side must be >= 3, got {n}")
        self.n = int(n)

    # -- counts ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.n * self.n

    @property
    def n_undirected_edges(self) -> int:
        return 2 * self.n * self.n

    @property
    def n_directed_edges(self) -> int:
        return 4 * self.n * self.n

    @property
    def n_faces(self) -> int:
        return self.n * self.n

    # -- vertex / index helpers ------------------------------------------

    def wrap(self, vertex) -> tuple[int, int]:
        return (vertex[0] % self.n, vertex[1] % self.n)

    def flat(self, vertex) -> int:
        ix, iy = self.wrap(vertex)
        return ix * self.n + iy

    def unflat(self, idx: int) -> tuple[int, int]:
        return (idx // self.n, idx % self.n)

    def shift(self, vertex, step) -> tuple[int, int]:
        return self.wrap((vertex[0] + step[0], vertex[1] + step[1]))

    def move(self, vertex, direction: int) -> tuple[int, int]:
        return self.shift(vertex, DIRECTION_VECTORS[direction])

    # -- edges ------------------------------------------------------------

    def directed_edge(self, tail, direction: int) -> DirectedEdge:
        tail = self.wrap(tail)
        return DirectedEdge(tail, self.move(tail, direction), direction)

    def reverse(self, e: DirectedEdge) -> DirectedEdge:
        return DirectedEdge(e.head, e.tail, OPPOSITE[e.direction])

    def directed_edges(self):
        for ix in range(self.n):
            for iy in range(self.n):
                for d in range(4):
                    yield self.directed_edge((ix, iy), d)

    def canonical_edges(self):
        """Undirected edges on the canonical orientation (rightward, upward)."""
        for ix in range(self.n):
            for iy in range(self.n):
                yield self.directed_edge((ix, iy), RIGHT)
                yield self.directed_edge((ix, iy), UP)

    def edge_index(self, e: DirectedEdge) -> int:
        """Directed-edge id: 4 * flat(tail) + direction."""
        return 4 * self.flat(e.tail) + e.direction

    def edge_from_index(self, idx: int) -> DirectedEdge:
        return self.directed_edge(self.unflat(idx // 4), idx % 4)

    def canonical_index(self, e: DirectedEdge) -> tuple[int, int]:
        """(undirected edge id, sign of e against the canonical orientation).

        Id is 2 * flat(v) + axis for the edge from v along +axis.
        """
        if e.direction in (RIGHT, UP):
            return 2 * self.flat(e.tail) + e.direction, +1
        return 2 * self.flat(e.head) + AXIS_OF[e.direction], -1

    # -- faces --------------------------------------------------------------

    def face(self, anchor, anticlockwise: bool = True) -> OrientedFace:
        return OrientedFace(self.wrap(anchor), anticlockwise)

    def faces(self, anticlockwise: bool = True):
        for ix in range(self.n):
            for iy in range(self.n):
                yield OrientedFace((ix, iy), anticlockwise)

    def face_vertices(self, f: OrientedFace) -> tuple[tuple[int, int], ...]:
        """Corners in traversal order, starting at the anchor."""
        a = f.anchor
        ring = (a, self.shift(a, (1, 0)), self.shift(a, (1, 1)), self.shift(a, (0, 1)))
        if f.anticlockwise:
            return ring
        return (ring[0], ring[3], ring[2], ring[1])

    def face_edges(self, f: OrientedFace) -> tuple[DirectedEdge, ...]:
        """The four directed edges traversed by the oriented 4-cycle of f."""
        vs = self.face_vertices(f)
        edges = []
        for i in range(4):
            tail, head = vs[i], vs[(i + 1) % 4]
            delta = ((head[0] - tail[0]) % self.n, (head[1] - tail[1]) % self.n)
            direction = {(1, 0): RIGHT, (0, 1): UP,
                         (self.n - 1, 0): LEFT, (0, self.n - 1): DOWN}[delta]
            edges.append(DirectedEdge(tail, head, direction))
        return tuple(edges)

    def adjacent_faces(self, e: DirectedEdge) -> tuple[OrientedFace, OrientedFace]:
        """The two anticlockwise faces flanking e.

        The first contains e with its orientation (the face to the left of
        the direction of travel), the second contains the reversed edge.
        """
        x = e.tail
        if e.direction == RIGHT:
            return self.face(x), self.face(self.shift(x, (0, -1)))
        if e.direction == UP:
            return self.face(self.shift(x, (-1, 0))), self.face(x)
        if e.direction == LEFT:
            return self.face(self.shift(x, (-1, -1))), self.face(self.shift(x, (-1, 0)))
        return self.face(self.shift(x, (0, -1))), self.face(self.shift(x, (-1, -1)))

    # -- translations ------------------------------------------------------

    def translate_vertex(self, vertex, z) -> tuple[int, int]:
        return self.shift(vertex, z)

    def translate_edge(self, e: DirectedEdge, z) -> DirectedEdge:
        return self.directed_edge(self.shift(e.tail, z), e.direction)

    def translate_face(self, f: OrientedFace, z) -> OrientedFace:
        return OrientedFace(self.shift(f.anchor, z), f.anticlockwise)

    # -- integer tables for array code --------------------------------------

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """int32 (N^2, 4): flat index of the head of (v, direction)."""
        n = self.n
        ix, iy = np.divmod(np.arange(n * n, dtype=np.int64), n)
        table = np.empty((n * n, 4), dtype=np.int32)
        table[:, RIGHT] = ((ix + 1) % n) * n + iy
        table[:, UP] = ix * n + (iy + 1) % n
        table[:, LEFT] = ((ix - 1) % n) * n + iy
        table[:, DOWN] = ix * n + (iy - 1) % n
        return table

    @cached_property
    def face_corner_table(self) -> np.ndarray:
        """int32 (N^2, 4): flat corners (a, a+e1, a+e1+e2, a+e2) per anchor."""
        nbr = self.neighbor_table
        anchors = np.arange(self.n_faces, dtype=np.int32)
        return np.stack(
            [anchors, nbr[anchors, RIGHT], nbr[nbr[anchors, RIGHT], UP], nbr[anchors, UP]],
            axis=1,
        )

    @cached_property
    def flank_anchor_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """int32 (N^2, 4) pair: anchors of the left/right flanking faces of (v, d)."""
        nbr = self.neighbor_table
        v = np.arange(self.n_vertices, dtype=np.int32)
        plus = np.empty((self.n_vertices, 4), dtype=np.int32)
        minus = np.empty((self.n_vertices, 4), dtype=np.int32)
        plus[:, RIGHT] = v
        minus[:, RIGHT] = nbr[v, DOWN]
        plus[:, UP] = nbr[v, LEFT]
        minus[:, UP] = v
        plus[:, LEFT] = nbr[nbr[v, LEFT], DOWN]
        minus[:, LEFT] = nbr[v, LEFT]
        plus[:, DOWN] = nbr[v, DOWN]
        minus[:, DOWN] = nbr[nbr[v, LEFT], DOWN]
        return plus, minus

    @cached_property
    def affected_edge_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed edges whose rate stencil touches a given undirected edge.

        Returns (table, counts): int32 (2N^2, K) padded with -1, and the
        number of valid entries per undirected edge id. The stencil of a
        directed edge is the 6-vertex union of its two flanking faces, so
        the affected set of {x, y} is every directed edge of every face
        containing x or y.
        """
        corners = self.face_corner_table
        nbr = self.neighbor_table

        # faces containing each vertex: anchors v, v-e1, v-e2, v-e1-e2
        v = np.arange(self.n_vertices, dtype=np.int32)
        faces_of = np.stack(
            [v, nbr[v, LEFT], nbr[v, DOWN], nbr[nbr[v, LEFT], DOWN]], axis=1
        )

        def face_directed_edges(anchor: int) -> list[int]:
            c = corners[anchor]
            und = [(c[0], RIGHT), (c[1], UP), (c[3], RIGHT), (c[0], UP)]
            out = []
            for tail, d in und:
                out.append(4 * int(tail) + d)
                out.append(4 * int(nbr[tail, d]) + OPPOSITE[d])
            return out

        edges_of_vertex = [
            sorted({e for a in faces_of[i] for e in face_directed_edges(a)})
            for i in range(self.n_vertices)
        ]

        lists = []
        for i in range(self.n_vertices):
            for axis in (0, 1):
                j = nbr[i, axis]
                lists.append(sorted(set(edges_of_vertex[i]) | set(edges_of_vertex[j])))
        width = max(len(l) for l in lists)
        table = np.full((self.n_undirected_edges, width), -1, dtype=np.int32)
        counts = np.empty(self.n_undirected_edges, dtype=np.int32)
        for row, l in enumerate(lists):
            counts[row] = len(l)
            table[row, : len(l)] = l
        return table, counts

    @cached_property
    def face_edge_ids(self) -> np.ndarray:
        """int32 (N^2, 8): both directed versions of the 4 edges of each face."""
        corners = self.face_corner_table
        nbr = self.neighbor_table
        out = np.empty((self.n_faces, 8), dtype=np.int32)
        for a in range(self.n_faces):
            c = corners[a]
            und = [(int(c[0]), RIGHT), (int(c[1]), UP), (int(c[3]), RIGHT), (int(c[0]), UP)]
            ids = []
            for tail, d in und:
                ids.append(4 * tail + d)
                ids.append(4 * int(nbr[tail, d]) + OPPOSITE[d])
            out[a] = ids
        return out

    @cached_property
    def incident_edge_table(self) -> np.ndarray:
        """int32 (2N^2, 14): directed edges with an endpoint on the undirected edge."""
        nbr = self.neighbor_table
        out = np.empty((self.n_undirected_edges, 14), dtype=np.int32)
        for v in range(self.n_vertices):
            for axis in (0, 1):
                w = int(nbr[v, axis])
                ids = set()
                for s in (v, w):
                    for d in range(4):
                        ids.add(4 * s + d)
                        ids.add(4 * int(nbr[s, d]) + OPPOSITE[d])
                ids = sorted(ids)
                assert len(ids) == 14
                out[2 * v + axis] = ids
        return out

    @cached_property
    def affected_face_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Faces whose activation can change when the endpoints of an edge swap.

        Returns (table, counts): int32 (2N^2, K) of face anchors containing
        either endpoint of the undirected edge, padded with -1.
        """
        nbr = self.neighbor_table
        v = np.arange(self.n_vertices, dtype=np.int32)
        faces_of = np.stack(
            [v, nbr[v, LEFT], nbr[v, DOWN], nbr[nbr[v, LEFT], DOWN]], axis=1
        )
        lists = []
        for i in range(self.n_vertices):
            for axis in (0, 1):
                j = int(nbr[i, axis])
                lists.append(sorted(set(faces_of[i].tolist()) | set(faces_of[j].tolist())))
        width = max(len(l) for l in lists)
        table = np.full((self.n_undirected_edges, width), -1, dtype=np.int32)
        counts = np.empty(self.n_undirected_edges, dtype=np.int32)
        for row, l in enumerate(lists):
            counts[row] = len(l)
            table[row, : len(l)] = l
        return table, counts

    def vertex_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates (u1, u2) of every vertex, flat order."""
        ix, iy = np.divmod(np.arange(self.n_vertices), self.n)
        return ix / self.n, iy / self.n

    def __repr__(self) -> str:
        return f"TorusLattice(n={self.n})"

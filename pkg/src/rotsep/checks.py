"""Brute-force finite verification of the model's exact algebraic identities.

Rates are linear in the rotation strength: c = s + r*alpha with integer
s, r. Working in that coefficient space keeps every enumeration exact;
reported violations are evaluated at rational alpha, so "invariant" is a
finite exact statement, not a statistical one. Each check has a documented
rate mutation that serves as its negative control.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .fields import EdgeField, hodge_decompose
from .model import all_occupations_matrix
from .torus import OPPOSITE, TorusLattice

# Negative-control rate corruptions, by name.
MUTATIONS = {
    "diag_double": "activation weight of the (anchor, anchor+e1+e2) diagonal is 2*alpha",
}


def _activation_weights(occ: np.ndarray, corners: np.ndarray, mutation: Optional[str]) -> np.ndarray:
    """Integer alpha-coefficients of g per face: (n_configs, n_faces).

    occ is (n_configs, n_sites) with entries 0/1; corners the face-corner
    table. A mutation replaces one activation weight per MUTATIONS.
    """
    o0 = occ[:, corners[:, 0]]
    o1 = occ[:, corners[:, 1]]
    o2 = occ[:, corners[:, 2]]
    o3 = occ[:, corners[:, 3]]
    diag_a = (o0 == 1) & (o2 == 1) & (o1 == 0) & (o3 == 0)
    diag_b = (o1 == 1) & (o3 == 1) & (o0 == 0) & (o2 == 0)
    w_a = 2 if mutation == "diag_double" else 1
    return w_a * diag_a.astype(np.int64) + diag_b.astype(np.int64)


def _rate_coefficients(lattice: TorusLattice, occ: np.ndarray, mutation: Optional[str]):
    """(sep, rot): integer parts of c = sep + rot*alpha for every directed edge.

    Shapes (n_configs, 4 N^2), directed edge id 4*tail + direction.
    """
    nbr = lattice.neighbor_table
    fplus, fminus = lattice.flank_anchor_tables
    act = _activation_weights(occ, lattice.face_corner_table, mutation)
    n_e = lattice.n_directed_edges
    sep = np.empty((occ.shape[0], n_e), dtype=np.int64)
    rot = np.empty((occ.shape[0], n_e), dtype=np.int64)
    for v in range(lattice.n_vertices):
        for d in range(4):
            e = 4 * v + d
            w = nbr[v, d]
            tail = occ[:, v].astype(np.int64)
            sep[:, e] = tail * (1 - occ[:, w])
            rot[:, e] = tail * (act[:, fplus[v, d]] - act[:, fminus[v, d]])
    return sep, rot


@dataclass
class CheckReport:
    name: str
    instances: int
    max_violation: float
    tolerance: float
    runtime_s: float
    passed: bool = field(init=False)
    detail: str = ""

    def __post_init__(self):
        self.passed = self.max_violation <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}  {self.name:<34} instances={self.instances:<7} "
            f"max_violation={self.max_violation:.3e} tol={self.tolerance:.1e} "
            f"({self.runtime_s:.2f}s){'  ' + self.detail if self.detail else ''}"
        )


def verify_invariance(n: int, alpha: Fraction, mutation: Optional[str] = None) -> CheckReport:
    """Edgewise balance: sum_e c_{x,y}(eta) = sum_e c_{y,x}(eta^{x,y}) for all eta.

    Exhaustive over the 2^(N^2) configurations; exact in integer coefficient
    space, evaluated at the given rational alpha.
    """
    t0 = time.perf_counter()
    lat = TorusLattice(n)
    occ = all_occupations_matrix(lat.n_vertices)
    nbr = lat.neighbor_table
    fplus, fminus = lat.flank_anchor_tables
    corners = lat.face_corner_table

    sep, rot = _rate_coefficients(lat, occ, mutation)
    lhs_a = sep.sum(axis=1)
    lhs_b = rot.sum(axis=1)

    # right-hand side: c_{y,x}(eta^{x,y}) summed over directed edges (x, y)
    rhs_a = np.zeros_like(lhs_a)
    rhs_b = np.zeros_like(lhs_b)

    def swapped_activation(face: int, x: int, y: int) -> np.ndarray:
        cols = []
        for c in corners[face]:
            c = int(c)
            cols.append(y if c == x else x if c == y else c)
        o0, o1, o2, o3 = (occ[:, c] for c in cols)
        diag_a = (o0 == 1) & (o2 == 1) & (o1 == 0) & (o3 == 0)
        diag_b = (o1 == 1) & (o3 == 1) & (o0 == 0) & (o2 == 0)
        w_a = 2 if mutation == "diag_double" else 1
        return w_a * diag_a.astype(np.int64) + diag_b.astype(np.int64)

    for v in range(lat.n_vertices):
        for d in range(4):
            w = int(nbr[v, d])
            # eta^{x,y}(y) = eta(x); f+-(y,x) = f-+(x,y)
            tail = occ[:, v].astype(np.int64)
            rhs_a += tail * (1 - occ[:, w])
            rhs_b += tail * (
                swapped_activation(int(fminus[v, d]), v, w)
                - swapped_activation(int(fplus[v, d]), v, w)
            )

    worst = _exact_max(lhs_a - rhs_a, lhs_b - rhs_b, alpha)
    return CheckReport(
        name=f"invariance(N={n}, alpha={alpha})",
        instances=occ.shape[0],
        max_violation=float(worst),
        tolerance=0.0,
        runtime_s=time.perf_counter() - t0,
        detail="" if mutation is None else f"mutation={mutation}",
    )


def _exact_max(diff_a: np.ndarray, diff_b: np.ndarray, alpha: Fraction) -> Fraction:
    """Exact max of |diff_a + alpha*diff_b| over integer arrays, as a Fraction."""
    p, q = alpha.numerator, alpha.denominator
    vals = np.abs(np.asarray(diff_a, dtype=np.int64) * q + np.asarray(diff_b, dtype=np.int64) * p)
    return Fraction(int(vals.max()), q) if vals.size else Fraction(0)


_FACE_ACW_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))
_FACE_CW_EDGES = ((0, 3), (3, 2), (2, 1), (1, 0))


def _local_g_coeff(pattern: tuple, mutation: Optional[str]) -> int:
    """alpha-coefficient of g for the 4 corner occupations (a, a+e1, a+e1+e2, a+e2)."""
    if pattern[0] == 1 and pattern[2] == 1 and pattern[1] == 0 and pattern[3] == 0:
        return 2 if mutation == "diag_double" else 1
    if pattern[1] == 1 and pattern[3] == 1 and pattern[0] == 0 and pattern[2] == 0:
        return 1
    return 0


def verify_face_identity(alpha: Fraction, mutation: Optional[str] = None) -> CheckReport:
    """Per-face balance over the 16 corner patterns.

    sum over the anticlockwise edges of eta(x)[g(eta) + g(eta^{x,y})]
    equals the same sum over the clockwise edges; both diagonal patterns
    give per-side coefficient 2 (value 2*alpha).
    """
    t0 = time.perf_counter()
    worst = Fraction(0)
    diag_fail = False
    for pattern in itertools.product((0, 1), repeat=4):
        def side(edges) -> int:
            total = 0
            for i, j in edges:
                if pattern[i] == 1:
                    swapped = list(pattern)
                    swapped[i], swapped[j] = swapped[j], swapped[i]
                    total += _local_g_coeff(pattern, mutation) + _local_g_coeff(
                        tuple(swapped), mutation
                    )
            return total

        acw, cw = side(_FACE_ACW_EDGES), side(_FACE_CW_EDGES)
        worst = max(worst, abs(Fraction(alpha) * (acw - cw)))
        if pattern in ((1, 0, 1, 0), (0, 1, 0, 1)) and (acw != 2 or cw != 2):
            diag_fail = True
    violation = float(worst) if not diag_fail else max(float(worst), 1.0)
    return CheckReport(
        name=f"face-identity(alpha={alpha})",
        instances=16,
        max_violation=violation,
        tolerance=0.0,
        runtime_s=time.perf_counter() - t0,
        detail="" if mutation is None else f"mutation={mutation}",
    )


def verify_current_structure(
    n: int,
    alpha: Fraction,
    mutation: Optional[str] = None,
    hodge_tol: float = 1e-10,
    hodge: bool = True,
) -> CheckReport:
    """Split of the instantaneous current, exhaustively on the N-torus.

    For every configuration: (i) j = j_grad + j_circ with j_grad(x,y) =
    eta(x) - eta(y) and j_circ = g(left face) - g(right face) from the
    canonical g; (ii) the circulation part is divergence-free at every
    vertex; (iii) the axis sums of j vanish; (iv) the Hodge decomposition
    of j (float path) has zero harmonic part.
    """
    t0 = time.perf_counter()
    lat = TorusLattice(n)
    occ = all_occupations_matrix(lat.n_vertices)
    nbr = lat.neighbor_table
    fplus, fminus = lat.flank_anchor_tables
    sep, rot = _rate_coefficients(lat, occ, mutation)
    act_ref = _activation_weights(occ, lat.face_corner_table, None)

    n_cfg = occ.shape[0]
    worst = Fraction(0)

    # j on canonical edges: id 2v + axis, coefficient pairs (int, int)
    j_sep = np.empty((n_cfg, lat.n_undirected_edges), dtype=np.int64)
    j_rot = np.empty_like(j_sep)
    circ_ref = np.empty_like(j_sep)
    grad_ref = np.empty_like(j_sep)
    for v in range(lat.n_vertices):
        for axis in (0, 1):
            e = 4 * v + axis
            w = int(nbr[v, axis])
            erev = 4 * w + OPPOSITE[axis]
            c = 2 * v + axis
            j_sep[:, c] = sep[:, e] - sep[:, erev]
            j_rot[:, c] = rot[:, e] - rot[:, erev]
            grad_ref[:, c] = occ[:, v].astype(np.int64) - occ[:, w]
            circ_ref[:, c] = act_ref[:, fplus[v, axis]] - act_ref[:, fminus[v, axis]]

    # (i) decomposition against the canonical h, g
    worst = max(worst, _exact_max(j_sep - grad_ref, j_rot - circ_ref, alpha))

    # (ii) divergence of the circulation part at every vertex (alpha coefficient)
    div = np.zeros((n_cfg, lat.n_vertices), dtype=np.int64)
    for v in range(lat.n_vertices):
        div[:, v] += circ_ref[:, 2 * v] + circ_ref[:, 2 * v + 1]
        div[:, int(nbr[v, 0])] -= circ_ref[:, 2 * v]
        div[:, int(nbr[v, 1])] -= circ_ref[:, 2 * v + 1]
    worst = max(worst, _exact_max(np.zeros(1, dtype=np.int64),
                                  np.abs(div).max(keepdims=True), alpha))

    # (iii) axis sums of the full current
    for axis in (0, 1):
        cols = np.arange(lat.n_vertices) * 2 + axis
        worst = max(
            worst, _exact_max(j_sep[:, cols].sum(axis=1), j_rot[:, cols].sum(axis=1), alpha)
        )

    # (iv) zero harmonic component of the float-valued current field
    harm_worst = 0.0
    if hodge:
        j_float = j_sep.astype(float) + float(alpha) * j_rot.astype(float)
        for row in range(n_cfg):
            f = EdgeField.from_flat_canonical(lat, j_float[row])
            harm_worst = max(harm_worst, hodge_decompose(f).harm.max_abs())
    worst_f = max(float(worst), harm_worst if harm_worst > hodge_tol else 0.0)

    return CheckReport(
        name=f"current-structure(N={n}, alpha={alpha})",
        instances=n_cfg,
        max_violation=worst_f,
        tolerance=0.0,
        runtime_s=time.perf_counter() - t0,
        detail=f"max|harmonic|={harm_worst:.2e}"
        + ("" if mutation is None else f" mutation={mutation}"),
    )


# -- grandcanonical expectations ----------------------------------------------


def grandcanonical_expectation(local_fn: Callable, window: list, rho) -> object:
    """Exact E_{nu_rho}[local_fn] over all occupation patterns of the window.

    local_fn receives a dict {site: occupation}. Exact when rho and the
    function values are Fractions. Windows beyond 20 sites are refused.
    """
    if len(window) > 20:
        raise ValueError(f"window of {len(window)} sites is too large to enumerate")
    total = 0
    for bits in itertools.product((0, 1), repeat=len(window)):
        weight = 1
        for b in bits:
            weight = weight * (rho if b else (1 - rho))
        total += weight * local_fn(dict(zip(window, bits)))
    return total


def _face_g(eta: dict, corners: tuple, alpha, mutation: Optional[str] = None):
    pattern = tuple(eta[c] for c in corners)
    return _local_g_coeff(pattern, mutation) * alpha


def expected_g(rho, alpha, mutation: Optional[str] = None):
    """E[g] on a single face; closed form is 2*alpha*(rho(1-rho))^2."""
    window = [(0, 0), (1, 0), (1, 1), (0, 1)]
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    return grandcanonical_expectation(
        lambda eta: _face_g(eta, corners, alpha, mutation), window, rho
    )


def squared_difference_expectation(rho):
    """E[(eta(x) - eta(y))^2] on one edge; closed form 2*rho*(1-rho)."""
    return grandcanonical_expectation(
        lambda eta: (eta[(0, 0)] - eta[(0, 1)]) ** 2, [(0, 0), (0, 1)], rho
    )


def mixed_edge_expectation(rho, alpha, mutation: Optional[str] = None):
    """E[(eta(x)-eta(y)) (g(left face) - g(right face))] across a vertical edge.

    Six-site window: the edge (0,0)->(0,1) plus its two flanking faces
    (anchors (-1,0) and (0,0)).
    """
    window = [(-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    left = ((-1, 0), (0, 0), (0, 1), (-1, 1))
    right = ((0, 0), (1, 0), (1, 1), (0, 1))

    def fn(eta):
        return (eta[(0, 0)] - eta[(0, 1)]) * (
            _face_g(eta, left, alpha, mutation) - _face_g(eta, right, alpha, mutation)
        )

    return grandcanonical_expectation(fn, window, rho)


def coefficients_check(alpha: Fraction, mutation: Optional[str] = None) -> CheckReport:
    """Exact coefficient identities behind the hydrodynamic limits.

    Enumerated E[g] against 2*alpha*(rho(1-rho))^2 on nine rational
    densities, E[(eta(x)-eta(y))^2] = 2 rho(1-rho), the vanishing mixed
    edge-face expectation, and the exact mobility/free-energy identity
    sigma(rho) * f''(rho) = identity matrix.
    """
    t0 = time.perf_counter()
    worst = Fraction(0)
    count = 0
    for num in range(1, 10):
        rho = Fraction(num, 10)
        worst = max(worst, abs(expected_g(rho, alpha, mutation)
                                - 2 * alpha * (rho * (1 - rho)) ** 2))
        worst = max(worst, abs(squared_difference_expectation(rho) - 2 * rho * (1 - rho)))
        worst = max(worst, abs(mixed_edge_expectation(rho, alpha, mutation)))
        # Einstein gap: sigma f'' = rho(1-rho) / (rho(1-rho)) = 1, exactly
        worst = max(worst, abs(rho * (1 - rho) * (1 / (rho * (1 - rho))) - 1))
        count += 4
    return CheckReport(
        name=f"coefficients(alpha={alpha})",
        instances=count,
        max_violation=float(worst),
        tolerance=0.0,
        runtime_s=time.perf_counter() - t0,
        detail="" if mutation is None else f"mutation={mutation}",
    )


# -- Dirichlet form vs quadratic form -----------------------------------------


def dirichlet_identity(
    n: int,
    rho: float,
    density_fn: Callable,
    alpha: float,
    mutation: Optional[str] = None,
    label: str = "",
) -> CheckReport:
    """-<L sqrt(f), sqrt(f)>_{nu_rho} against the quadratic form, by enumeration.

    density_fn maps a Configuration bit pattern (uint8 vector) to a positive
    value; it is normalized internally to E_{nu_rho}[f] = 1.
    """
    t0 = time.perf_counter()
    lat = TorusLattice(n)
    occ = all_occupations_matrix(lat.n_vertices)
    n_cfg = occ.shape[0]
    counts = occ.sum(axis=1)
    nu = rho**counts * (1.0 - rho) ** (lat.n_vertices - counts)

    f_vals = np.array([float(density_fn(occ[i])) for i in range(n_cfg)])
    if np.any(f_vals < 0):
        raise ValueError("density_fn must be nonnegative")
    f_vals = f_vals / float(np.sum(nu * f_vals))
    sqrt_f = np.sqrt(f_vals)

    sep, rot = _rate_coefficients(lat, occ, mutation)
    rates = sep.astype(float) + float(alpha) * rot.astype(float)

    codes = np.arange(n_cfg, dtype=np.int64)
    lhs = 0.0
    rhs = 0.0
    nbr = lat.neighbor_table
    for v in range(lat.n_vertices):
        for d in range(4):
            w = int(nbr[v, d])
            bits_v = (codes >> v) & 1
            bits_w = (codes >> w) & 1
            swapped = np.where(bits_v != bits_w, codes ^ ((1 << v) | (1 << w)), codes)
            delta = sqrt_f[swapped] - sqrt_f
            c = rates[:, 4 * v + d]
            lhs -= float(np.sum(nu * sqrt_f * c * delta))
            rhs += 0.5 * float(np.sum(nu * c * delta**2))

    name = f"dirichlet(N={n}, rho={rho}, alpha={alpha}"
    name += f", f={label})" if label else ")"
    return CheckReport(
        name=name,
        instances=n_cfg,
        max_violation=abs(lhs - rhs),
        tolerance=1e-12,
        runtime_s=time.perf_counter() - t0,
        detail="" if mutation is None else f"mutation={mutation}",
    )


# -- detailed balance (demonstration, not a pass/fail gate) -------------------


def detailed_balance_witness(n: int, alpha: float):
    """A configuration and edge violating detailed balance when alpha != 0.

    Returns (config bits, edge ids, flow difference) or None if no witness
    exists (alpha = 0).
    """
    lat = TorusLattice(n)
    occ = all_occupations_matrix(lat.n_vertices)
    sep, rot = _rate_coefficients(lat, occ, None)
    rates = sep.astype(float) + alpha * rot.astype(float)
    counts = occ.sum(axis=1)
    rho = 0.5
    nu = rho**counts * (1 - rho) ** (lat.n_vertices - counts)
    codes = np.arange(occ.shape[0], dtype=np.int64)
    nbr = lat.neighbor_table
    for v in range(lat.n_vertices):
        for d in range(4):
            w = int(nbr[v, d])
            bits_v = (codes >> v) & 1
            bits_w = (codes >> w) & 1
            swapped = np.where(bits_v != bits_w, codes ^ ((1 << v) | (1 << w)), codes)
            rev = rates[swapped, 4 * w + OPPOSITE[d]]
            gap = np.abs(nu * rates[:, 4 * v + d] - nu[swapped] * rev)
            i = int(gap.argmax())
            if gap[i] > 1e-12:
                return occ[i].copy(), (v, d), float(gap[i])
    return None


# -- standard density functions for the Dirichlet check -----------------------


def density_constant(bits: np.ndarray) -> float:
    return 1.0


def density_exp_particles(beta: float) -> Callable:
    def fn(bits: np.ndarray) -> float:
        return math.exp(beta * float(bits.sum()))

    return fn


def density_config_hash(bits: np.ndarray) -> float:
    # positive weight with no lattice symmetry: sensitive to any rate corruption
    h = 0
    for b in bits:
        h = (h * 31 + int(b) + 7) % 1000003
    return 1.0 + (h % 97) / 97.0


DIRICHLET_DENSITIES = (
    ("constant", density_constant),
    ("exp_particles_0.3", density_exp_particles(0.3)),
    ("config_hash", density_config_hash),
)

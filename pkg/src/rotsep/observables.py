"""Empirical pairings, current functionals and martingale diagnostics.

The integrated current field pairs the signed crossing counters with a
discretized test field; the empirical measure pairs occupations with a
scalar test function. Box densities and the quadrant identity kernels
reproduce the local-averaging objects entering the replacement step, with
their deliberately asymmetric half-open rectangles kept verbatim.

Martingale diagnostics replay the full event log: between events the
instantaneous current is constant, so the compensator and quadratic
variation integrals are evaluated exactly, with the per-edge sums updated
incrementally around each jump.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
from numba import njit

from .fields import EdgeField
from .model import Configuration
from .simulate import Trajectory, _edge_rate, _face_state


def empirical_pairing(config: Configuration, f: Callable) -> float:
    """pi^N(f) = N^-2 sum_x eta(x) f(x/N)."""
    lat = config.lattice
    u1, u2 = lat.vertex_coords()
    vals = np.asarray(f(u1, u2), dtype=float)
    if vals.ndim == 0:
        vals = np.full(lat.n_vertices, float(vals))
    return float(np.sum(config.occ * vals)) / lat.n_vertices


def current_functional(traj: Trajectory, field: EdgeField, t: float) -> float:
    """J^N_t(G) = N^-2 sum over undirected edges of G_N(e) J_e(t)."""
    crossings = traj.crossings_at(t)
    return float(field.flat_canonical() @ crossings) / traj.lattice.n_vertices


def box_density(config: Configuration, x, p: int, q: int, side: int) -> float:
    """Particle density in the side^2 box with corner x in quadrant (p, q).

    The box excludes the corner vertex itself: axis offsets run over
    1..side in the direction of p (or q).
    """
    if side < 1:
        raise ValueError("box side must be >= 1")
    if p not in (1, -1) or q not in (1, -1):
        raise ValueError("quadrant indices must be +-1")
    lat = config.lattice
    ax, ay = lat.wrap(x)
    grid = config.occ.reshape(lat.n, lat.n)
    ix = (ax + p * np.arange(1, side + 1)) % lat.n
    iy = (ay + q * np.arange(1, side + 1)) % lat.n
    return float(grid[np.ix_(ix, iy)].sum()) / side**2


def kernel_pairing(config: Configuration, u, eps: float, p: int, q: int) -> float:
    """pi^N applied to the quadrant identity kernel of width eps at u.

    u must sit on the lattice and eps must be a positive multiple of 1/N;
    the four (p, q) rectangles keep the exact half-open conventions:
    (+1, +1) uses [u1, u1+eps) x [u2, u2+eps), the senses flip with p and
    q, and only the (-1, -1) kernel is open on the first axis at the
    corner, i.e. (u1-eps, u1) x (u2-eps, u2].
    """
    if p not in (1, -1) or q not in (1, -1):
        raise ValueError("quadrant indices must be +-1")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    lat = config.lattice
    n = lat.n
    ax, ay = float(u[0]) * n, float(u[1]) * n
    if abs(ax - round(ax)) > 1e-9 or abs(ay - round(ay)) > 1e-9:
        raise ValueError("kernel corner must be a lattice point")
    m = eps * n
    if abs(m - round(m)) > 1e-9 or round(m) < 1:
        raise ValueError("eps must be a positive multiple of 1/N")
    m = int(round(m))
    ax, ay = int(round(ax)) % n, int(round(ay)) % n

    def offsets(sense: int, closed_at_corner: bool) -> np.ndarray:
        if sense == 1:
            return np.arange(0, m)
        return -np.arange(0 if closed_at_corner else 1, m)

    off1 = offsets(p, closed_at_corner=(p, q) != (-1, -1))
    off2 = offsets(q, closed_at_corner=True)
    grid = config.occ.reshape(n, n)
    count = grid[np.ix_((ax + off1) % n, (ay + off2) % n)].sum()
    return float(count) / (eps * eps * n * n)


class MartingaleSeries(NamedTuple):
    times: np.ndarray
    current: np.ndarray  # J^N_t(G)
    compensator: np.ndarray  # time integral of the instantaneous-current pairing
    quadratic_variation: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.current - self.compensator


@njit(cache=True, nogil=True)
def _replay(
    occ,
    acts,
    event_times,
    event_edges,
    eval_times,
    g_flat,  # per undirected edge id
    nbr,
    corners,
    fplus,
    fminus,
    exph,
    alpha,
    incident_edges,
    face_edges,
    face_table,
    face_counts,
    out_current,
    out_comp,
    out_qv,
):
    n_vertices = occ.shape[0]
    n_und = 2 * n_vertices
    for f in range(acts.shape[0]):
        acts[f] = _face_state(occ, corners, f)

    # per-undirected-edge contributions to the two integrands
    jg = np.zeros(n_und)
    qg = np.zeros(n_und)
    s_sum = 0.0
    q_sum = 0.0
    for ue in range(n_und):
        v = ue >> 1
        axis = ue & 1
        fwd = 4 * v + axis
        w = nbr[v, axis]
        rev = 4 * w + (axis + 2)
        cf = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, fwd)
        cb = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, rev)
        jg[ue] = (cf - cb) * g_flat[ue]
        qg[ue] = (cf + cb) * g_flat[ue] * g_flat[ue]
        s_sum += jg[ue]
        q_sum += qg[ue]

    inv_n2 = 1.0 / n_vertices
    t_prev = 0.0
    comp = 0.0
    qv = 0.0
    current = 0.0
    k_eval = 0
    n_eval = eval_times.shape[0]
    n_events = event_times.shape[0]

    for i in range(n_events + 1):
        t_next = event_times[i] if i < n_events else np.inf
        while k_eval < n_eval and eval_times[k_eval] <= t_next:
            dt = eval_times[k_eval] - t_prev
            out_current[k_eval] = current
            out_comp[k_eval] = comp + dt * s_sum
            out_qv[k_eval] = (qv + dt * q_sum) * inv_n2
            k_eval += 1
        if i == n_events:
            break
        dt = t_next - t_prev
        comp += dt * s_sum
        qv += dt * q_sum
        t_prev = t_next

        eid = event_edges[i]
        v = eid >> 2
        d = eid & 3
        w = nbr[v, d]
        occ[v] = 0
        occ[w] = 1
        if d == 0:
            ue = 2 * v
            current += g_flat[ue] * inv_n2
        elif d == 1:
            ue = 2 * v + 1
            current += g_flat[ue] * inv_n2
        elif d == 2:
            ue = 2 * w
            current -= g_flat[ue] * inv_n2
        else:
            ue = 2 * w + 1
            current -= g_flat[ue] * inv_n2

        for k in range(face_counts[ue]):
            f = face_table[ue, k]
            new_state = _face_state(occ, corners, f)
            if new_state != acts[f]:
                acts[f] = new_state
                for m in range(8):
                    a = face_edges[f, m]
                    s_sum, q_sum = _refresh_edge(
                        occ, acts, nbr, fplus, fminus, exph, alpha,
                        g_flat, jg, qg, s_sum, q_sum, a,
                    )
        for k in range(14):
            a = incident_edges[ue, k]
            s_sum, q_sum = _refresh_edge(
                occ, acts, nbr, fplus, fminus, exph, alpha,
                g_flat, jg, qg, s_sum, q_sum, a,
            )


@njit(cache=True, nogil=True, inline="always")
def _refresh_edge(occ, acts, nbr, fplus, fminus, exph, alpha, g_flat, jg, qg, s_sum, q_sum, a):
    v = a >> 2
    d = a & 3
    if d == 0:
        ue = 2 * v
    elif d == 1:
        ue = 2 * v + 1
    elif d == 2:
        ue = 2 * nbr[v, d]
    else:
        ue = 2 * nbr[v, d] + 1
    uv = ue >> 1
    axis = ue & 1
    fwd = 4 * uv + axis
    w = nbr[uv, axis]
    rev = 4 * w + (axis + 2)
    cf = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, fwd)
    cb = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, rev)
    new_j = (cf - cb) * g_flat[ue]
    new_q = (cf + cb) * g_flat[ue] * g_flat[ue]
    s_sum += new_j - jg[ue]
    q_sum += new_q - qg[ue]
    jg[ue] = new_j
    qg[ue] = new_q
    return s_sum, q_sum


def martingale_series(traj: Trajectory, field: EdgeField, times=None) -> MartingaleSeries:
    """Exact J_t(G), compensator and quadratic variation along one trajectory.

    Needs the event log (record_events=True). The compensator is
    int_0^t sum over undirected edges of j(e) G_N(e) ds and the quadratic
    variation N^-2 int_0^t sum (c_f + c_b) G_N(e)^2 ds, both piecewise
    constant between events.
    """
    if traj.event_times is None:
        raise ValueError("trajectory has no event log; run with record_events=True")
    lat = traj.lattice
    eval_times = np.asarray(traj.snapshot_times if times is None else times, dtype=float)
    occ = traj.snapshots[0].copy()
    acts = np.zeros(lat.n_faces)
    exph = traj.exph if traj.exph is not None else np.ones(lat.n_directed_edges)
    fplus, fminus = lat.flank_anchor_tables
    face_table, face_counts = lat.affected_face_table
    out_current = np.zeros(eval_times.shape[0])
    out_comp = np.zeros(eval_times.shape[0])
    out_qv = np.zeros(eval_times.shape[0])
    _replay(
        occ, acts, traj.event_times, traj.event_edges, eval_times,
        field.flat_canonical(),
        lat.neighbor_table, lat.face_corner_table, fplus, fminus, exph,
        float(traj.alpha),
        lat.incident_edge_table, lat.face_edge_ids, face_table, face_counts,
        out_current, out_comp, out_qv,
    )
    return MartingaleSeries(eval_times, out_current, out_comp, out_qv)


def martingale_residual(traj: Trajectory, field: EdgeField, t: float) -> float:
    """M^N_G(t) = J^N_t(G) minus its compensator, evaluated exactly."""
    series = martingale_series(traj, field, times=np.array([t]))
    return float(series.residual[0])


def quadratic_variation(traj: Trajectory, field: EdgeField, t: float) -> float:
    series = martingale_series(traj, field, times=np.array([t]))
    return float(series.quadratic_variation[0])

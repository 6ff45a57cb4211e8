"""Exact continuous-time simulation of the process with rates N^2 c_{x,y}.

Event selection is exact Gillespie over the per-edge rate table: holding
times are exponential in the current total rate and the jumping edge is
drawn through a binary-indexed (Fenwick) cumulative tree, O(log N^2) per
event. A jump can change the rates of the 14 directed edges meeting the
swapped pair plus the 8 edges of any flanking face whose activation
flipped; face activations are cached and only those edges are refreshed.
The tree is rebuilt periodically to stop float drift. Time is macroscopic
throughout: holding times are drawn with the N^2-scaled total rate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .fields import EdgeField, VectorField, discretize_field
from .model import Configuration
from .rng import RNG_NAME, stream_key, trajectory_stream
from .torus import TorusLattice

STATUS_DONE = 0
STATUS_NEED_UNIFORMS = 1
STATUS_LOG_FULL = 2

_UNIFORM_BUFFER = 1 << 19
_REBUILD_EVERY = 1 << 20
_ENSEMBLE_WORKERS = 2


@njit(cache=True, nogil=True, inline="always")
def _face_state(occ, corners, f):
    o0 = occ[corners[f, 0]]
    o1 = occ[corners[f, 1]]
    o2 = occ[corners[f, 2]]
    o3 = occ[corners[f, 3]]
    if o0 == 1 and o2 == 1 and o1 == 0 and o3 == 0:
        return 1.0
    if o1 == 1 and o3 == 1 and o0 == 0 and o2 == 0:
        return 1.0
    return 0.0


@njit(cache=True, nogil=True, inline="always")
def _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, eid):
    v = eid >> 2
    d = eid & 3
    w = nbr[v, d]
    if occ[v] == 0 or occ[w] == 1:
        return 0.0
    rot = acts[fplus[v, d]] - acts[fminus[v, d]]
    return (1.0 + alpha * rot) * exph[eid]


@njit(cache=True, nogil=True)
def _fenwick_build(rates, tree):
    n = rates.shape[0]
    tree[0] = 0.0
    for i in range(1, n + 1):
        tree[i] = rates[i - 1]
    for i in range(1, n + 1):
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(cache=True, nogil=True, inline="always")
def _fenwick_add(tree, i, delta):
    n = tree.shape[0] - 1
    j = i
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True, nogil=True, inline="always")
def _fenwick_find(tree, top_pow, target):
    """Largest 0-based index with prefix sum <= target (selects that edge)."""
    n = tree.shape[0] - 1
    idx = 0
    bit = top_pow
    rem = target
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] <= rem:
            idx = nxt
            rem -= tree[nxt]
        bit >>= 1
    return idx


@njit(cache=True, nogil=True)
def _recompute_rates(occ, acts, nbr, corners, fplus, fminus, exph, alpha, rates, tree):
    for f in range(acts.shape[0]):
        acts[f] = _face_state(occ, corners, f)
    total = 0.0
    for eid in range(rates.shape[0]):
        r = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, eid)
        rates[eid] = r
        total += r
    _fenwick_build(rates, tree)
    return total


@njit(cache=True, nogil=True)
def _advance(
    occ,
    acts,
    rates,
    tree,
    scalars,  # [t, total_rate]
    t_stop,
    nsq,
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
    cross,
    uniforms,
    counters,  # [uniform position, events, events since rebuild]
    log_enabled,
    log_times,
    log_edges,
    log_state,  # [log position]
    top_pow,
    rebuild_every,
):
    n_uni = uniforms.shape[0]
    n_edges = rates.shape[0]
    log_cap = log_times.shape[0]
    t = scalars[0]
    total = scalars[1]
    upos = counters[0]
    log_pos = log_state[0]
    status = STATUS_DONE
    while True:
        if total <= 0.0:
            # absorbing (empty or full lattice) or float drift: rebuild to be sure
            total = _recompute_rates(
                occ, acts, nbr, corners, fplus, fminus, exph, alpha, rates, tree
            )
            counters[2] = 0
            if total <= 0.0:
                t = t_stop
                break
        if upos + 2 > n_uni:
            status = STATUS_NEED_UNIFORMS
            break
        if log_enabled and log_pos >= log_cap:
            status = STATUS_LOG_FULL
            break
        dt = -np.log1p(-uniforms[upos]) / (nsq * total)
        if t + dt > t_stop:
            # no jump before the stop; memorylessness lets the next call redraw
            upos += 1
            t = t_stop
            break
        upos += 1
        target = uniforms[upos] * total
        upos += 1
        eid = _fenwick_find(tree, top_pow, target)
        if eid >= n_edges or rates[eid] <= 0.0:
            # float boundary artifact: walk to the nearest positive rate
            k = min(eid, n_edges - 1)
            while k >= 0 and rates[k] <= 0.0:
                k -= 1
            if k < 0:
                k = eid + 1
                while k < n_edges and rates[k] <= 0.0:
                    k += 1
            eid = k
        v = eid >> 2
        d = eid & 3
        w = nbr[v, d]
        if occ[v] != 1 or occ[w] != 0:
            # cannot happen for a positive-rate edge; fail loudly
            status = -1
            break
        t += dt
        occ[v] = 0
        occ[w] = 1
        if d == 0:
            cross[2 * v] += 1
            ue = 2 * v
        elif d == 1:
            cross[2 * v + 1] += 1
            ue = 2 * v + 1
        elif d == 2:
            cross[2 * w] -= 1
            ue = 2 * w
        else:
            cross[2 * w + 1] -= 1
            ue = 2 * w + 1
        if log_enabled:
            log_times[log_pos] = t
            log_edges[log_pos] = eid
            log_pos += 1
        for k in range(face_counts[ue]):
            f = face_table[ue, k]
            new_state = _face_state(occ, corners, f)
            if new_state != acts[f]:
                acts[f] = new_state
                for m in range(8):
                    a = face_edges[f, m]
                    r_new = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, a)
                    delta = r_new - rates[a]
                    if delta != 0.0:
                        rates[a] = r_new
                        _fenwick_add(tree, a + 1, delta)
                        total += delta
        for k in range(14):
            a = incident_edges[ue, k]
            r_new = _edge_rate(occ, acts, nbr, fplus, fminus, exph, alpha, a)
            delta = r_new - rates[a]
            if delta != 0.0:
                rates[a] = r_new
                _fenwick_add(tree, a + 1, delta)
                total += delta
        counters[1] += 1
        counters[2] += 1
        if counters[2] >= rebuild_every:
            total = _recompute_rates(
                occ, acts, nbr, corners, fplus, fminus, exph, alpha, rates, tree
            )
            counters[2] = 0
    scalars[0] = t
    scalars[1] = total
    counters[0] = upos
    log_state[0] = log_pos
    return status


# -- configuration and results -------------------------------------------------


@dataclass
class SimConfig:
    """One ensemble's worth of simulation parameters (diffusive time scale)."""

    n: int
    t_end: float
    alpha: float = 0.0
    profile: Callable = None  # density profile on the unit torus, values in [0, 1]
    seed: int = 0
    snapshot_times: tuple = ()
    ensemble_size: int = 1
    field: Optional[VectorField] = None  # external field; rates gain exp(H_N(e))
    record_events: bool = False
    profile_name: str = ""
    field_name: str = ""

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("lattice side must be >= 3")
        if not abs(self.alpha) < 1:
            raise ValueError("|alpha| must be < 1")
        if self.profile is None:
            raise ValueError("an initial density profile is required")
        times = tuple(float(s) for s in self.snapshot_times)
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be sorted")
        if times and (times[0] < 0.0 or times[-1] > self.t_end + 1e-12):
            raise ValueError("snapshot times must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times", times)

    def describe(self) -> dict:
        return {
            "n": self.n,
            "t_end": self.t_end,
            "alpha": self.alpha,
            "seed": self.seed,
            "snapshot_times": list(self.snapshot_times),
            "ensemble_size": self.ensemble_size,
            "profile": self.profile_name or getattr(self.profile, "__name__", "<callable>"),
            "field": self.field_name or (self.field.name if self.field is not None else None),
            "record_events": self.record_events,
            "rng": RNG_NAME,
        }


@dataclass
class Trajectory:
    """Snapshots, signed edge-crossing counters and provenance for one run."""

    lattice: TorusLattice
    alpha: float
    seed: int
    trajectory_index: int
    snapshot_times: np.ndarray  # (S,), always starting at 0.0
    snapshots: np.ndarray  # uint8 (S, N^2)
    crossings: np.ndarray  # int64 (S, 2 N^2), canonical orientation
    n_events: int
    exph: Optional[np.ndarray] = None  # per-directed-edge rate multiplier, field runs
    event_times: Optional[np.ndarray] = None
    event_edges: Optional[np.ndarray] = None
    rng_name: str = RNG_NAME

    def config_at(self, index: int) -> Configuration:
        return Configuration(self.lattice, self.snapshots[index])

    def time_index(self, t: float) -> int:
        hits = np.nonzero(np.isclose(self.snapshot_times, t, rtol=0.0, atol=1e-12))[0]
        if hits.size == 0:
            raise KeyError(f"time {t} was not recorded (have {self.snapshot_times})")
        return int(hits[0])

    def crossings_at(self, t: float) -> np.ndarray:
        return self.crossings[self.time_index(t)]

    def conservation_violation(self) -> int:
        """Max |eta_t - eta_s + div(J(t) - J(s))| over vertices and snapshot pairs."""
        n = self.lattice.n
        worst = 0
        for k in range(1, len(self.snapshot_times)):
            d_eta = self.snapshots[k].astype(np.int64) - self.snapshots[k - 1].astype(np.int64)
            dj = self.crossings[k] - self.crossings[k - 1]
            jr = dj[0::2].reshape(n, n)
            ju = dj[1::2].reshape(n, n)
            div = jr - np.roll(jr, 1, axis=0) + ju - np.roll(ju, 1, axis=1)
            worst = max(worst, int(np.abs(d_eta.reshape(n, n) + div).max()))
        return worst


def sample_initial(profile: Callable, lattice: TorusLattice, rng: np.random.Generator) -> Configuration:
    """Independent Bernoulli(rho*(x)) occupation at every vertex."""
    u1, u2 = lattice.vertex_coords()
    p = np.asarray(profile(u1, u2), dtype=float)
    if p.ndim == 0:
        p = np.full(lattice.n_vertices, float(p))
    p = p.ravel()
    if p.size != lattice.n_vertices:
        raise ValueError("profile must evaluate on the full vertex set")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("density profile must take values in [0, 1]")
    return Configuration(lattice, (rng.random(lattice.n_vertices) < p).astype(np.uint8))


def exp_field_table(lattice: TorusLattice, field) -> np.ndarray:
    """exp(H_N(e)) per directed edge id; identity when no field is set."""
    exph = np.ones(lattice.n_directed_edges)
    if field is None:
        return exph
    hn = field if isinstance(field, EdgeField) else discretize_field(field, lattice)
    flat = hn.flat_canonical()
    nbr = lattice.neighbor_table
    v = np.arange(lattice.n_vertices)
    exph[4 * v + 0] = np.exp(flat[2 * v + 0])
    exph[4 * v + 1] = np.exp(flat[2 * v + 1])
    exph[4 * nbr[v, 0] + 2] = np.exp(-flat[2 * v + 0])
    exph[4 * nbr[v, 1] + 3] = np.exp(-flat[2 * v + 1])
    return exph


def _top_power_of_two(n: int) -> int:
    p = 1
    while 2 * p <= n:
        p *= 2
    return p


def run_trajectory(cfg: SimConfig, seed_offset: int = 0) -> Trajectory:
    """One statistically exact trajectory; bit-reproducible given (cfg, seed_offset)."""
    lattice = TorusLattice(cfg.n)
    rng = trajectory_stream(cfg.seed, seed_offset)
    occ = sample_initial(cfg.profile, lattice, rng).occ.copy()

    nbr = lattice.neighbor_table
    corners = lattice.face_corner_table
    fplus, fminus = lattice.flank_anchor_tables
    incident_edges = lattice.incident_edge_table
    face_edge_ids = lattice.face_edge_ids
    face_table, face_counts = lattice.affected_face_table
    exph = exp_field_table(lattice, cfg.field)
    alpha = float(cfg.alpha)
    nsq = float(cfg.n * cfg.n)

    n_edges = lattice.n_directed_edges
    acts = np.zeros(lattice.n_faces)
    rates = np.zeros(n_edges)
    tree = np.zeros(n_edges + 1)
    total = _recompute_rates(occ, acts, nbr, corners, fplus, fminus, exph, alpha, rates, tree)

    scalars = np.array([0.0, total])
    counters = np.array([0, 0, 0], dtype=np.int64)
    cross = np.zeros(lattice.n_undirected_edges, dtype=np.int64)
    uniforms = rng.random(_UNIFORM_BUFFER)

    if cfg.record_events:
        log_cap = 1 << 16
        log_times = np.zeros(log_cap)
        log_edges = np.zeros(log_cap, dtype=np.int32)
    else:
        log_times = np.zeros(0)
        log_edges = np.zeros(0, dtype=np.int32)
    log_state = np.array([0], dtype=np.int64)

    stops = list(cfg.snapshot_times)
    if not stops or stops[0] != 0.0:
        stops = [0.0] + stops
    if stops[-1] < cfg.t_end:
        stops.append(float(cfg.t_end))
    times_out = [0.0]
    snaps = [occ.copy()]
    crossings = [cross.copy()]

    top_pow = _top_power_of_two(n_edges)
    for stop in stops[1:]:
        while True:
            status = _advance(
                occ, acts, rates, tree, scalars, float(stop), nsq,
                nbr, corners, fplus, fminus, exph, alpha,
                incident_edges, face_edge_ids, face_table, face_counts,
                cross, uniforms, counters,
                cfg.record_events, log_times, log_edges, log_state,
                top_pow, _REBUILD_EVERY,
            )
            if status == STATUS_NEED_UNIFORMS:
                uniforms[:] = rng.random(_UNIFORM_BUFFER)
                counters[0] = 0
            elif status == STATUS_LOG_FULL:
                log_times = np.concatenate([log_times, np.zeros(log_times.shape[0])])
                log_edges = np.concatenate(
                    [log_edges, np.zeros(log_edges.shape[0], dtype=np.int32)]
                )
            elif status == STATUS_DONE:
                break
            else:
                raise AssertionError("selected edge violated the exclusion rule")
        times_out.append(float(stop))
        snaps.append(occ.copy())
        crossings.append(cross.copy())

    n_logged = int(log_state[0])
    return Trajectory(
        lattice=lattice,
        alpha=alpha,
        seed=stream_key(cfg.seed, seed_offset),
        trajectory_index=seed_offset,
        snapshot_times=np.array(times_out),
        snapshots=np.array(snaps, dtype=np.uint8),
        crossings=np.array(crossings, dtype=np.int64),
        n_events=int(counters[1]),
        exph=exph if cfg.field is not None else None,
        event_times=log_times[:n_logged].copy() if cfg.record_events else None,
        event_edges=log_edges[:n_logged].copy() if cfg.record_events else None,
    )


def run_ensemble(cfg: SimConfig, workers: int = _ENSEMBLE_WORKERS) -> list:
    """Independent trajectories 0..ensemble_size-1 (streams keyed seed XOR index).

    Trajectories are embarrassingly parallel; the kernel releases the GIL,
    so a small thread pool runs them concurrently. Results are ordered by
    trajectory index and bit-identical to a sequential run.
    """
    if cfg.ensemble_size == 1 or workers <= 1:
        return [run_trajectory(cfg, i) for i in range(cfg.ensemble_size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: run_trajectory(cfg, i), range(cfg.ensemble_size)))

import math

import numpy as np
import pytest

from rotsep.fields import EdgeField, FourierMode, discretize_field, gradient, modes_up_to, sobolev_dual_norm
from rotsep.model import Configuration
from rotsep.observables import (
    box_density,
    current_functional,
    empirical_pairing,
    kernel_pairing,
    martingale_residual,
    martingale_series,
    quadratic_variation,
)
from rotsep.simulate import SimConfig, run_ensemble, run_trajectory
from rotsep.torus import TorusLattice


def uniform(c):
    return lambda u1, u2: np.full_like(np.asarray(u1, float), c)


def random_config(lat, seed, density=0.5):
    rng = np.random.default_rng(seed)
    return Configuration(lat, (rng.random(lat.n_vertices) < density).astype(np.uint8))


# -- empirical measure -----------------------------------------------------------


def test_empirical_pairing_constant_function():
    lat = TorusLattice(8)
    cfg = random_config(lat, 1)
    assert empirical_pairing(cfg, uniform(1.0)) == cfg.particle_count() / 64


def test_empirical_pairing_empty_configuration():
    lat = TorusLattice(8)
    cfg = Configuration.empty(lat)
    assert empirical_pairing(cfg, lambda u1, u2: np.cos(2 * np.pi * u1)) == 0.0


def test_empirical_pairing_full_lattice_trig_sum():
    # oracle: the full-period cosine sum on the uniform grid vanishes
    lat = TorusLattice(16)
    full = Configuration.full(lat)
    h10 = lambda u1, u2: np.sqrt(2.0) * np.cos(2 * np.pi * u1)
    oracle = math.sqrt(2.0) * sum(math.cos(2 * math.pi * i / 16) for i in range(16)) * 16 / 256
    assert abs(oracle) < 1e-12
    assert abs(empirical_pairing(full, h10)) < 1e-12


# -- current functional ----------------------------------------------------------


@pytest.fixture(scope="module")
def sample_traj():
    cfg = SimConfig(n=12, t_end=0.06, alpha=0.5, profile=uniform(0.5), seed=31,
                    snapshot_times=(0.03, 0.06), record_events=True)
    return run_trajectory(cfg, 0)


def test_current_functional_zero_at_time_zero(sample_traj):
    g = discretize_field(FourierMode(2, (-1, 0)).vector_field(), sample_traj.lattice)
    assert current_functional(sample_traj, g, 0.0) == 0.0


def test_current_functional_continuity_identity(sample_traj):
    # gradient test fields make the current functional a pure density increment
    lat = sample_traj.lattice
    rng = np.random.default_rng(5)
    for _ in range(3):
        f_lattice = rng.normal(size=(lat.n, lat.n))
        g = gradient(lat, f_lattice)
        f = lambda u1, u2: f_lattice[(u1 * lat.n).astype(int), (u2 * lat.n).astype(int)]
        for t in (0.03, 0.06):
            lhs = current_functional(sample_traj, g, t)
            rhs = empirical_pairing(sample_traj.config_at(sample_traj.time_index(t)), f) - \
                empirical_pairing(sample_traj.config_at(0), f)
            assert lhs == pytest.approx(rhs, abs=1e-12)


def test_current_functional_orientation_invariance(sample_traj):
    # the pairing is a product of two antisymmetric factors: flipping the
    # stored orientation of every edge leaves it unchanged
    lat = sample_traj.lattice
    g = discretize_field(FourierMode(1, (1, 1)).vector_field(), lat)
    value = current_functional(sample_traj, g, 0.06)
    flipped = EdgeField(lat, -g.h, -g.v)
    j = sample_traj.crossings_at(0.06)
    assert float(flipped.flat_canonical() @ (-j)) / lat.n_vertices == pytest.approx(value)


def test_current_functional_unknown_time(sample_traj):
    g = EdgeField.zeros(sample_traj.lattice)
    with pytest.raises(KeyError):
        current_functional(sample_traj, g, 0.01)


# -- box densities and identity kernels -------------------------------------------


def test_box_density_full_lattice():
    lat = TorusLattice(12)
    full = Configuration.full(lat)
    for p in (1, -1):
        for q in (1, -1):
            for side in (1, 2, 4):
                assert box_density(full, (3, 7), p, q, side) == 1.0


def test_box_density_excludes_anchor():
    lat = TorusLattice(12)
    cfg = Configuration.from_sites(lat, [(3, 7)])
    for p in (1, -1):
        for q in (1, -1):
            assert box_density(cfg, (3, 7), p, q, 3) == 0.0


def test_box_density_counts_quadrant():
    lat = TorusLattice(8)
    cfg = Configuration.from_sites(lat, [(1, 1), (2, 2), (7, 7)])
    # quadrant (+1, +1) box of side 2 anchored at (0, 0): sites {1,2} x {1,2}
    assert box_density(cfg, (0, 0), 1, 1, 2) == 2 / 4
    # quadrant (-1, -1): sites {6,7} x {6,7}
    assert box_density(cfg, (0, 0), -1, -1, 2) == 1 / 4
    with pytest.raises(ValueError):
        box_density(cfg, (0, 0), 0, 1, 2)
    with pytest.raises(ValueError):
        box_density(cfg, (0, 0), 1, 1, 0)


def test_kernel_pairing_validation():
    lat = TorusLattice(10)
    cfg = Configuration.full(lat)
    with pytest.raises(ValueError):
        kernel_pairing(cfg, (0.05, 0.0), 0.2, 1, 1)  # off-lattice corner
    with pytest.raises(ValueError):
        kernel_pairing(cfg, (0.1, 0.0), 0.15, 1, 1)  # eps not a multiple of 1/N
    with pytest.raises(ValueError):
        kernel_pairing(cfg, (0.1, 0.0), 0.6, 1, 1)  # eps >= 1/2


def test_kernel_pairing_half_open_conventions():
    lat = TorusLattice(10)
    # single particle exactly at the corner u
    cfg = Configuration.from_sites(lat, [(4, 4)])
    u = (0.4, 0.4)
    eps = 0.2
    # corner belongs to [u1, u1+eps) x [u2, u2+eps) only for (p,q) = (1,1) ...
    assert kernel_pairing(cfg, u, eps, 1, 1) > 0
    # ... to (u1-eps, u1] x [u2, u2+eps) for (-1, 1) and (1, -1) variants ...
    assert kernel_pairing(cfg, u, eps, -1, 1) > 0
    assert kernel_pairing(cfg, u, eps, 1, -1) > 0
    # ... but (-1, -1) is open at the corner on the first axis
    assert kernel_pairing(cfg, u, eps, -1, -1) == 0.0
    # (-1,-1) includes u2 on the second axis: site (3, 4) lies in (u1-eps, u1) x {u2}
    cfg2 = Configuration.from_sites(lat, [(3, 4)])
    assert kernel_pairing(cfg2, u, eps, -1, -1) > 0


def test_kernel_box_replacement_bound():
    # |pi^N(kernel) - box density| <= 2/(eps N), deterministically
    lat = TorusLattice(16)
    for seed in range(6):
        cfg = random_config(lat, seed, density=0.4 + 0.1 * (seed % 3))
        for m_side in (2, 4, 7):
            eps = m_side / 16
            for p in (1, -1):
                for q in (1, -1):
                    for anchor in [(0, 0), (5, 11), (15, 3)]:
                        u = (anchor[0] / 16, anchor[1] / 16)
                        diff = abs(
                            kernel_pairing(cfg, u, eps, p, q)
                            - box_density(cfg, anchor, p, q, m_side)
                        )
                        assert diff <= 2.0 / (eps * 16) + 1e-12


# -- martingale diagnostics --------------------------------------------------------


def test_martingale_requires_event_log():
    cfg = SimConfig(n=8, t_end=0.02, alpha=0.5, profile=uniform(0.5), seed=1)
    traj = run_trajectory(cfg)
    with pytest.raises(ValueError):
        martingale_residual(traj, EdgeField.zeros(traj.lattice), 0.02)


def test_martingale_zero_without_particles():
    cfg = SimConfig(n=8, t_end=0.05, alpha=0.0, profile=uniform(0.0), seed=2,
                    record_events=True)
    traj = run_trajectory(cfg)
    g = discretize_field(FourierMode(2, (-1, 0)).vector_field(), traj.lattice)
    assert martingale_residual(traj, g, 0.05) == 0.0
    assert quadratic_variation(traj, g, 0.05) == 0.0


def test_martingale_series_reproduces_current_functional(sample_traj):
    g = discretize_field(FourierMode(2, (-1, 0)).vector_field(), sample_traj.lattice)
    series = martingale_series(sample_traj, g)
    for k, t in enumerate(sample_traj.snapshot_times):
        assert series.current[k] == pytest.approx(current_functional(sample_traj, g, t), abs=1e-12)


@pytest.mark.slow
def test_martingale_mean_and_second_moment():
    n, t, m, alpha = 16, 0.05, 60, 0.5
    cfg = SimConfig(n=n, t_end=t, alpha=alpha, profile=uniform(0.5), seed=7,
                    ensemble_size=m, record_events=True)
    field = FourierMode(2, (-1, 0)).vector_field()  # (0, sqrt2 sin(2 pi u1))
    sup_g = math.sqrt(2.0)
    residuals = np.zeros(m)
    qvs = np.zeros(m)
    for i, traj in enumerate(run_ensemble(cfg)):
        g = discretize_field(field, traj.lattice)
        series = martingale_series(traj, g, times=np.array([t]))
        residuals[i] = series.residual[0]
        qvs[i] = series.quadratic_variation[0]
    se = residuals.std(ddof=1) / math.sqrt(m)
    assert abs(residuals.mean()) <= 4 * se
    bound = 4.0 * t * (1.0 + alpha) * sup_g**2 / n**2
    assert residuals.var(ddof=0) + residuals.mean() ** 2 <= bound
    # the compensated square is itself a martingale: E[M^2] = E[QV]
    diff = residuals**2 - qvs
    se_diff = diff.std(ddof=1) / math.sqrt(m)
    assert abs(diff.mean()) <= 4 * se_diff


@pytest.mark.slow
def test_dual_norm_bounded_in_n():
    t_end, z_max, k, m_traj, alpha = 0.02, 3, 3.0, 10, 0.5
    modes = modes_up_to(z_max)
    means = {}
    for n in (16, 32, 64):
        cfg = SimConfig(n=n, t_end=t_end, alpha=alpha, profile=uniform(0.5), seed=101,
                        ensemble_size=m_traj)
        discretized = {(mo.j, mo.z): discretize_field(mo.vector_field(), TorusLattice(n))
                       for mo in modes}
        norms = []
        for traj in run_ensemble(cfg):
            pairings = {key: current_functional(traj, g, t_end)
                        for key, g in discretized.items()}
            value, _ = sobolev_dual_norm(pairings, k, z_max)
            norms.append(value)
        means[n] = float(np.mean(norms))
        assert np.isfinite(means[n])
    # per-mode allowance: limiting deterministic bound + finite-N martingale part
    for n, mean_norm in means.items():
        bound = 0.0
        for mo in modes:
            z1, z2 = mo.z
            det = 16 * np.pi**2 * t_end**2 * (abs(z1) + abs(z2)) ** 2
            mart = 16.0 * t_end * (1.0 + alpha) / n**2  # |I|_inf^2 = 2
            bound += (det + mart) * 1.5 / mo.gamma**k
        assert mean_norm <= bound

"""Closed-form transport coefficients and continuum reference solvers.

The density limit is the plain heat equation; the typical current adds a
divergence-free rotational term with coefficient a(rho) = 2 alpha
[rho(1-rho)]^2, and a weak external field H contributes 2 sigma(rho) H
with mobility sigma(rho) = rho(1-rho) I. Solvers are pseudo-spectral on a
uniform M x M grid of the unit torus: the heat flow is exact mode-by-mode,
the drift-diffusion stepper treats diffusion implicitly and the drift
explicitly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .fields import VectorField


@dataclass(frozen=True)
class Coefficients:
    """Transport coefficients at one density (exact when rho is a Fraction)."""

    rho: object
    alpha: object
    a: object  # rotational coefficient 2 alpha [rho(1-rho)]^2
    a_prime: object
    sigma: object  # scalar mobility rho(1-rho); the matrix is sigma * I
    free_energy: float

    def antisymmetric_matrix(self) -> np.ndarray:
        ap = float(self.a_prime)
        return np.array([[0.0, -ap], [ap, 0.0]])

    def sigma_matrix(self) -> np.ndarray:
        return float(self.sigma) * np.eye(2)

    def f_double_prime(self):
        """Free-energy curvature 1/(rho(1-rho)); undefined at rho in {0, 1}."""
        if self.rho == 0 or self.rho == 1:
            raise ValueError("free-energy curvature diverges at rho in {0, 1}")
        one = Fraction(1) if isinstance(self.rho, Fraction) else 1.0
        return one / (self.rho * (1 - self.rho))

    def einstein_gap(self):
        """Max-norm of D - sigma(rho) f''(rho) with diffusion matrix D = I."""
        return abs(1 - self.sigma * self.f_double_prime())


def coefficients(rho, alpha) -> Coefficients:
    """All closed-form coefficient values at density rho.

    rho may be a float in [0, 1] or a Fraction for exact arithmetic; the
    free energy rho log rho + (1-rho) log(1-rho) is always a float (0 at
    the endpoints by continuity).
    """
    if rho < 0 or rho > 1:
        raise ValueError(f"density must lie in [0, 1], got {rho}")
    one_minus = 1 - rho
    a = 2 * alpha * (rho * one_minus) ** 2
    a_prime = 4 * alpha * rho * one_minus * (1 - 2 * rho)
    sigma = rho * one_minus
    r = float(rho)
    free_energy = 0.0
    if 0.0 < r < 1.0:
        free_energy = r * math.log(r) + (1.0 - r) * math.log(1.0 - r)
    return Coefficients(rho, alpha, a, a_prime, sigma, free_energy)


def a_of_rho(rho, alpha):
    return 2 * alpha * (rho * (1 - rho)) ** 2


# -- density fields -------------------------------------------------------------


@dataclass
class DensityField:
    """Density values on the uniform M x M grid (row-major over x_index, y_index)."""

    values: np.ndarray
    t: float

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def mass(self) -> float:
        return float(self.values.mean())


def write_density_field(field: DensityField, path) -> None:
    """Flat binary: int64 M, float64 t, then M*M float64 values row-major."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", field.m))
        fh.write(struct.pack("<d", field.t))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_density_field(path) -> DensityField:
    with open(path, "rb") as fh:
        m = struct.unpack("<q", fh.read(8))[0]
        t = struct.unpack("<d", fh.read(8))[0]
        values = np.frombuffer(fh.read(8 * m * m), dtype="<f8").reshape(m, m).copy()
    return DensityField(values, t)


def density_pairing(field: DensityField, f: Callable) -> float:
    """int f(u) rho(u) du by the grid mean (exact for band-limited f rho)."""
    m = field.m
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    return float(np.mean(np.asarray(f(u1, u2), dtype=float) * field.values))


def sample_profile(profile: Callable, m: int) -> np.ndarray:
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    vals = np.asarray(profile(u1, u2), dtype=float)
    if vals.ndim == 0:
        vals = np.full((m, m), float(vals))
    return vals


def _mode_numbers(m: int) -> tuple[np.ndarray, np.ndarray]:
    z = np.fft.fftfreq(m) * m
    return np.meshgrid(z, z, indexing="ij")


def _spectral_derivative_factor(m: int) -> tuple[np.ndarray, np.ndarray]:
    z1, z2 = _mode_numbers(m)
    f1 = 2j * np.pi * z1
    f2 = 2j * np.pi * z2
    if m % 2 == 0:
        # drop the unpaired Nyquist mode so derivatives of real fields stay real
        f1[m // 2, :] = 0.0
        f2[:, m // 2] = 0.0
    return f1, f2


def spectral_derivatives(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = grid.shape[0]
    f1, f2 = _spectral_derivative_factor(m)
    hat = np.fft.fft2(grid)
    return np.real(np.fft.ifft2(f1 * hat)), np.real(np.fft.ifft2(f2 * hat))


def solve_heat(profile, t: float, m: int = 64) -> DensityField:
    """Heat flow on the torus: every Fourier mode decays by exp(-4 pi^2 |z|^2 t)."""
    grid = profile if isinstance(profile, np.ndarray) else sample_profile(profile, m)
    m = grid.shape[0]
    z1, z2 = _mode_numbers(m)
    decay = np.exp(-4.0 * np.pi**2 * (z1**2 + z2**2) * t)
    out = np.real(np.fft.ifft2(np.fft.fft2(grid) * decay))
    return DensityField(out, float(t))


def solve_heat_fd(profile, t: float, m: int = 64) -> DensityField:
    """Cross-check route: exact flow of the 5-point finite-difference Laplacian.

    Same grid, second-order spatial operator M^2 (4 - 2cos - 2cos) per
    mode; the sup-norm gap to the spectral solution is O(M^-2).
    """
    grid = profile if isinstance(profile, np.ndarray) else sample_profile(profile, m)
    m = grid.shape[0]
    k = np.arange(m)
    lam_1d = 2.0 - 2.0 * np.cos(2.0 * np.pi * k / m)
    lam = m * m * (lam_1d[:, None] + lam_1d[None, :])
    out = np.real(np.fft.ifft2(np.fft.fft2(grid) * np.exp(-lam * t)))
    return DensityField(out, float(t))


def _drift_divergence(rho: np.ndarray, h1, h2, d1, d2) -> np.ndarray:
    """Spectral divergence of the drift flux 2 rho(1-rho) (H1, H2)."""
    mob = 2.0 * rho * (1.0 - rho)
    f1_hat = np.fft.fft2(mob * h1)
    f2_hat = np.fft.fft2(mob * h2)
    return np.real(np.fft.ifft2(d1 * f1_hat + d2 * f2_hat))


def solve_drift_diffusion(
    profile,
    field: Optional[VectorField],
    t: float,
    m: int = 64,
    dt: Optional[float] = None,
    record_times: Optional[list] = None,
) -> DensityField | tuple[DensityField, list]:
    """Semi-implicit pseudo-spectral solver for drho = div(grad rho - 2 sigma(rho) H).

    Implicit diffusion, explicit drift, step dt = 0.25/M^2 unless given.
    Reduces to the exact heat flow when the field is absent. Mass is
    conserved to rounding (the drift divergence has an exactly zero mean
    mode); a drift of more than 1e-12 raises.
    """
    grid = (profile if isinstance(profile, np.ndarray) else sample_profile(profile, m)).copy()
    m = grid.shape[0]
    if field is None:
        out = solve_heat(grid, t, m)
        if record_times is not None:
            return out, [solve_heat(grid, s, m) for s in record_times]
        return out
    if dt is None:
        dt = 0.25 / (m * m)
    n_steps = max(1, int(math.ceil(t / dt - 1e-12)))
    dt = t / n_steps

    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    h1 = np.asarray(field.g1(u1, u2), dtype=float)
    h2 = np.asarray(field.g2(u1, u2), dtype=float)
    d1, d2 = _spectral_derivative_factor(m)
    z1, z2 = _mode_numbers(m)
    denom = 1.0 + dt * 4.0 * np.pi**2 * (z1**2 + z2**2)

    mass0 = grid.mean()
    recorded = []
    next_record = 0
    record_times = sorted(record_times) if record_times is not None else None
    for step in range(n_steps):
        now = step * dt
        if record_times is not None:
            while next_record < len(record_times) and record_times[next_record] <= now + 1e-12:
                recorded.append(DensityField(grid.copy(), now))
                next_record += 1
        drift = _drift_divergence(grid, h1, h2, d1, d2)
        hat = (np.fft.fft2(grid) - dt * np.fft.fft2(drift)) / denom
        grid = np.real(np.fft.ifft2(hat))
    if abs(grid.mean() - mass0) > 1e-12:
        raise RuntimeError(f"mass drifted by {abs(grid.mean() - mass0):.2e}")
    out = DensityField(grid, float(t))
    if record_times is not None:
        while next_record < len(record_times):
            recorded.append(DensityField(grid.copy(), record_times[next_record]))
            next_record += 1
        return out, recorded
    return out


def solve_to_stationarity(
    profile,
    field: VectorField,
    m: int = 64,
    dt: Optional[float] = None,
    tol: float = 1e-13,
    max_steps: int = 2_000_000,
) -> tuple[DensityField, int]:
    """Iterate the drift-diffusion stepper to its fixed point.

    The fixed point satisfies the stationary equation of the continuous
    flow exactly (the time discretization drops out), so the result is
    spectrally accurate. Returns (field, steps taken).
    """
    grid = (profile if isinstance(profile, np.ndarray) else sample_profile(profile, m)).copy()
    m = grid.shape[0]
    if dt is None:
        dt = 0.25 / (m * m)
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    h1 = np.asarray(field.g1(u1, u2), dtype=float)
    h2 = np.asarray(field.g2(u1, u2), dtype=float)
    d1, d2 = _spectral_derivative_factor(m)
    z1, z2 = _mode_numbers(m)
    denom = 1.0 + dt * 4.0 * np.pi**2 * (z1**2 + z2**2)
    for step in range(1, max_steps + 1):
        drift = _drift_divergence(grid, h1, h2, d1, d2)
        hat = (np.fft.fft2(grid) - dt * np.fft.fft2(drift)) / denom
        new = np.real(np.fft.ifft2(hat))
        delta = np.abs(new - grid).max()
        grid = new
        if delta <= tol:
            return DensityField(grid, math.inf), step
    raise RuntimeError(f"no stationary state after {max_steps} steps (last delta {delta:.2e})")


# -- predicted current pairings ---------------------------------------------------


def _field_on_grid(field: VectorField, m: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    g1 = np.asarray(field.g1(u1, u2), dtype=float)
    g2 = np.asarray(field.g2(u1, u2), dtype=float)
    return g1, g2


def _div_curl_on_grid(field: VectorField, m: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    if field.div is not None and field.curl_perp is not None:
        div = np.asarray(field.div(u1, u2), dtype=float)
        curl = np.asarray(field.curl_perp(u1, u2), dtype=float)
        if div.ndim == 0:
            div = np.full((m, m), float(div))
        if curl.ndim == 0:
            curl = np.full((m, m), float(curl))
        return div, curl
    g1, g2 = _field_on_grid(field, m)
    d1g1, d2g1 = spectral_derivatives(g1)
    d1g2, d2g2 = spectral_derivatives(g2)
    return d1g1 + d2g2, d1g2 - d2g1


def _simpson_weights(n_nodes: int, length: float) -> np.ndarray:
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("Simpson rule needs an odd node count >= 3")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (length / (n_nodes - 1) / 3.0)


def predicted_current_pairing(
    profile,
    test_field: VectorField,
    t: float,
    alpha: float,
    field: Optional[VectorField] = None,
    m: int = 64,
    n_time: int = 129,
    form: str = "weak",
) -> float:
    """int_0^t ds int du J(rho_s) . G for the limiting current J.

    The weak form (primary) integrates rho div G + a(rho) curl G
    (+ 2 sigma(rho) H . G under a field); the strong form evaluates
    J = -grad rho - A(rho) grad rho + 2 sigma(rho) H directly and serves
    as a cross-check. Without a field the density is propagated exactly;
    with one, the drift-diffusion stepper supplies the Simpson nodes.
    """
    if form not in ("weak", "strong"):
        raise ValueError("form must be 'weak' or 'strong'")
    grid0 = profile if isinstance(profile, np.ndarray) else sample_profile(profile, m)
    m = grid0.shape[0]
    times = np.linspace(0.0, t, n_time)
    weights = _simpson_weights(n_time, t)
    if t == 0.0:
        return 0.0

    if field is None:
        densities = [solve_heat(grid0, s, m).values for s in times]
        h1 = h2 = None
    else:
        _, recorded = solve_drift_diffusion(grid0, field, t, m, record_times=list(times))
        densities = [df.values for df in recorded]
        h1, h2 = _field_on_grid(field, m)

    g1, g2 = _field_on_grid(test_field, m)
    if form == "weak":
        div_g, curl_g = _div_curl_on_grid(test_field, m)

    total = 0.0
    for w, rho in zip(weights, densities):
        if form == "weak":
            term = float(np.mean(rho * div_g + a_of_rho(rho, alpha) * curl_g))
            if field is not None:
                term += float(np.mean(2.0 * rho * (1.0 - rho) * (h1 * g1 + h2 * g2)))
        else:
            d1r, d2r = spectral_derivatives(rho)
            ap = 4.0 * alpha * rho * (1.0 - rho) * (1.0 - 2.0 * rho)
            j1 = -d1r + ap * d2r
            j2 = -d2r - ap * d1r
            if field is not None:
                mob = 2.0 * rho * (1.0 - rho)
                j1 = j1 + mob * h1
                j2 = j2 + mob * h2
            term = float(np.mean(j1 * g1 + j2 * g2))
        total += w * term
    return total

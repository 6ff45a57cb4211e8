import math
from fractions import Fraction

import numpy as np
import pytest

from rotsep import checks
from rotsep.fields import VectorField, constant_field
from rotsep.hydro import (
    DensityField,
    a_of_rho,
    coefficients,
    density_pairing,
    predicted_current_pairing,
    read_density_field,
    sample_profile,
    solve_drift_diffusion,
    solve_heat,
    solve_heat_fd,
    solve_to_stationarity,
    spectral_derivatives,
    write_density_field,
)


def test_coefficients_endpoints():
    for rho in (0.0, 1.0):
        c = coefficients(rho, 0.5)
        assert c.a == 0.0 and c.a_prime == 0.0 and c.sigma == 0.0
        assert c.free_energy == 0.0
        assert np.all(c.antisymmetric_matrix() == 0.0)
        with pytest.raises(ValueError):
            c.f_double_prime()
    with pytest.raises(ValueError):
        coefficients(-0.1, 0.5)
    with pytest.raises(ValueError):
        coefficients(1.1, 0.5)


def test_coefficients_half_density():
    c = coefficients(Fraction(1, 2), Fraction(1, 2))
    assert c.a == Fraction(1, 16)
    assert c.a_prime == 0
    assert c.sigma == Fraction(1, 4)
    assert c.f_double_prime() == 4
    assert c.free_energy == pytest.approx(-math.log(2))


def test_coefficients_match_enumeration_oracle():
    # closed forms against the exact grandcanonical enumeration
    alpha = Fraction(1, 2)
    for num in range(1, 10):
        rho = Fraction(num, 10)
        c = coefficients(rho, alpha)
        assert c.a == checks.expected_g(rho, alpha)
        assert Fraction(2) * rho * (1 - rho) == checks.squared_difference_expectation(rho)


def test_einstein_gap_exactly_zero_on_rationals():
    for num in range(1, 20):
        c = coefficients(Fraction(num, 20), Fraction(1, 2))
        assert c.einstein_gap() == 0


def test_antisymmetric_matrix_structure():
    c = coefficients(0.3, 0.5)
    mat = c.antisymmetric_matrix()
    assert mat[0, 0] == 0.0 and mat[1, 1] == 0.0
    assert mat[0, 1] == -mat[1, 0]
    assert mat[1, 0] == pytest.approx(float(c.a_prime))
    assert np.allclose(c.sigma_matrix(), 0.21 * np.eye(2))


# -- heat flow -------------------------------------------------------------------


def test_heat_constant_profile_fixed_point():
    out = solve_heat(lambda u1, u2: np.full_like(u1, 0.37), t=0.3, m=32)
    assert np.allclose(out.values, 0.37, atol=1e-14)


def test_heat_single_mode_closed_form():
    amp = 0.25 * math.sqrt(2.0)
    profile = lambda u1, u2: 0.5 + amp * np.cos(2 * np.pi * u1)
    for t in (0.01, 0.05):
        out = solve_heat(profile, t, m=64)
        u = np.arange(64) / 64
        u1, u2 = np.meshgrid(u, u, indexing="ij")
        expected = 0.5 + amp * math.exp(-4 * np.pi**2 * t) * np.cos(2 * np.pi * u1)
        assert np.abs(out.values - expected).max() < 1e-13


def test_heat_mass_conserved():
    rng = np.random.default_rng(3)
    grid = 0.5 + 0.3 * np.real(np.fft.ifft2(np.fft.fft2(rng.random((32, 32)))))
    grid = np.clip(grid, 0.0, 1.0)
    out = solve_heat(grid, 0.07, 32)
    assert abs(out.mass() - grid.mean()) < 1e-14


def test_heat_spectral_vs_finite_difference_second_order():
    profile = lambda u1, u2: 0.5 + 0.2 * np.sin(2 * np.pi * u1) + 0.1 * np.cos(2 * np.pi * (u1 + u2))
    t = 0.02
    ms = [16, 32, 64, 128]
    errs = []
    for m in ms:
        a = solve_heat(profile, t, m)
        b = solve_heat_fd(profile, t, m)
        errs.append(np.abs(a.values - b.values).max())
    slope = np.polyfit(np.log(ms), np.log(errs), 1)[0]
    assert -2.3 <= slope <= -1.7


# -- drift-diffusion -------------------------------------------------------------


def test_drift_diffusion_reduces_to_heat_without_field():
    profile = lambda u1, u2: 0.5 + 0.25 * np.sin(2 * np.pi * u1)
    a = solve_drift_diffusion(profile, None, 0.03, m=32)
    b = solve_heat(profile, 0.03, 32)
    assert np.abs(a.values - b.values).max() < 1e-10


def test_drift_diffusion_uniform_state_with_constant_field():
    out = solve_drift_diffusion(lambda u1, u2: np.full_like(u1, 0.3),
                                constant_field(0.5, 0.0), 0.1, m=32)
    assert np.abs(out.values - 0.3).max() < 1e-12
    assert abs(out.mass() - 0.3) < 1e-13


def test_drift_diffusion_mass_conserved_with_field():
    profile = lambda u1, u2: 0.45 + 0.2 * np.sin(2 * np.pi * u2)
    field = VectorField(
        g1=lambda u1, u2: np.cos(2 * np.pi * u1),
        g2=lambda u1, u2: np.sin(2 * np.pi * (u1 + u2)),
    )
    out = solve_drift_diffusion(profile, field, 0.02, m=32)
    assert abs(out.mass() - 0.45) < 1e-12


def gradient_field(v0):
    """H = grad V for the potential V = v0 cos(2 pi u1)."""
    return VectorField(
        g1=lambda u1, u2: -2 * np.pi * v0 * np.sin(2 * np.pi * u1),
        g2=lambda u1, u2: np.zeros_like(np.asarray(u1, float)),
        potential=lambda u1, u2: v0 * np.cos(2 * np.pi * u1),
    )


def test_gradient_field_reaches_logit_stationary_profile():
    # zero-flux balance: grad rho = 2 rho(1-rho) grad V, i.e. logit(rho) = 2V + c
    v0 = 0.2
    m = 64
    out, steps = solve_to_stationarity(lambda u1, u2: np.full_like(u1, 0.4),
                                       gradient_field(v0), m=m)
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    v_grid = v0 * np.cos(2 * np.pi * u1)
    logit = np.log(out.values / (1.0 - out.values))
    gap = logit - 2.0 * v_grid
    assert np.abs(gap - gap.mean()).max() <= 1e-6
    assert steps > 10


# -- predicted current pairings ---------------------------------------------------


def test_predicted_pairing_zero_for_harmonic_test_field():
    profile = lambda u1, u2: 0.5 + 0.25 * np.sin(2 * np.pi * u1)
    value = predicted_current_pairing(profile, constant_field(1.0, 0.5), 0.05, alpha=0.5, m=32)
    assert abs(value) < 1e-12


def test_predicted_pairing_zero_for_uniform_density():
    g = VectorField(
        g1=lambda u1, u2: np.sin(2 * np.pi * u2),
        g2=lambda u1, u2: np.cos(2 * np.pi * u1),
    )
    value = predicted_current_pairing(lambda u1, u2: np.full_like(u1, 0.4), g, 0.05,
                                      alpha=0.5, m=32)
    assert abs(value) < 1e-12


def test_predicted_pairing_weak_equals_strong():
    rng = np.random.default_rng(8)
    c = rng.normal(size=6) * 0.05
    profile = lambda u1, u2: (0.5 + c[0] * np.sin(2 * np.pi * u1) + c[1] * np.cos(2 * np.pi * u2)
                              + c[2] * np.sin(2 * np.pi * (u1 + u2)))
    g = VectorField(
        g1=lambda u1, u2: c[3] * np.cos(2 * np.pi * u2) + c[4] * np.sin(2 * np.pi * u1),
        g2=lambda u1, u2: c[5] * np.sin(2 * np.pi * (u1 - u2)) + 0.3,
    )
    for field in (None, constant_field(0.4, -0.1)):
        weak = predicted_current_pairing(profile, g, 0.04, 0.5, field=field, m=64)
        strong = predicted_current_pairing(profile, g, 0.04, 0.5, field=field, m=64,
                                           form="strong")
        assert weak == pytest.approx(strong, abs=1e-8)


def test_predicted_pairing_constant_field_uniform_density_closed_form():
    # J = 2 sigma(rho) E: pairing with G = (1,0) is t * 2 rho (1-rho) E1
    rho, e1, t = 0.3, 0.5, 0.2
    value = predicted_current_pairing(
        lambda u1, u2: np.full_like(u1, rho), constant_field(1.0, 0.0), t,
        alpha=0.5, field=constant_field(e1, 0.0), m=32,
    )
    assert value == pytest.approx(2 * rho * (1 - rho) * e1 * t, rel=1e-10)


def test_predicted_pairing_alpha_dependence_through_curl():
    # with curl G != 0 and non-constant rho, the pairing moves with alpha
    profile = lambda u1, u2: 0.5 + 0.25 * np.sin(2 * np.pi * u1)
    g = VectorField(
        g1=lambda u1, u2: np.zeros_like(np.asarray(u1, float)),
        g2=lambda u1, u2: np.sin(4 * np.pi * u1),
    )
    v_plus = predicted_current_pairing(profile, g, 0.05, alpha=0.5, m=64)
    v_minus = predicted_current_pairing(profile, g, 0.05, alpha=-0.5, m=64)
    assert v_plus == pytest.approx(-v_minus, abs=1e-12)  # pure a(rho) term, odd in alpha
    assert abs(v_plus) > 1e-6
    # heat flow itself never sees alpha
    a = solve_heat(profile, 0.05, 32).values
    assert np.array_equal(a, solve_heat(profile, 0.05, 32).values)


def test_simpson_rule_validation():
    with pytest.raises(ValueError):
        predicted_current_pairing(lambda u1, u2: np.full_like(u1, 0.5),
                                  constant_field(1, 0), 0.05, 0.5, n_time=10)
    with pytest.raises(ValueError):
        predicted_current_pairing(lambda u1, u2: np.full_like(u1, 0.5),
                                  constant_field(1, 0), 0.05, 0.5, form="other")


def test_spectral_derivatives_of_plane_wave():
    m = 32
    u = np.arange(m) / m
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    grid = np.sin(2 * np.pi * (2 * u1 - u2))
    d1, d2 = spectral_derivatives(grid)
    assert np.abs(d1 - 4 * np.pi * np.cos(2 * np.pi * (2 * u1 - u2))).max() < 1e-10
    assert np.abs(d2 + 2 * np.pi * np.cos(2 * np.pi * (2 * u1 - u2))).max() < 1e-10


def test_density_pairing_exact_trig_integral():
    df = DensityField(sample_profile(lambda u1, u2: 0.5 + 0.25 * np.sin(2 * np.pi * u1), 64), 0.0)
    val = density_pairing(df, lambda u1, u2: np.sqrt(2.0) * np.sin(2 * np.pi * u1))
    assert val == pytest.approx(0.25 * math.sqrt(2.0) / 2.0, abs=1e-14)


def test_density_field_io_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    df = DensityField(rng.random((16, 16)), 0.25)
    path = tmp_path / "density.bin"
    write_density_field(df, path)
    back = read_density_field(path)
    assert back.t == df.t and back.m == 16
    assert np.array_equal(back.values, df.values)


def test_a_of_rho_vectorized():
    rho = np.linspace(0, 1, 11)
    vals = a_of_rho(rho, 0.5)
    assert vals[0] == 0.0 and vals[-1] == 0.0
    assert vals[5] == pytest.approx(1.0 / 16.0)

from fractions import Fraction

import numpy as np
import pytest

from rotsep import checks
from rotsep.model import ModelParams, all_configurations, all_occupations_matrix, jump_rate
from rotsep.torus import TorusLattice


def test_invariance_exact_n3():
    for alpha in (Fraction(0), Fraction(1, 2), Fraction(-3, 4)):
        report = checks.verify_invariance(3, alpha)
        assert report.passed
        assert report.max_violation == 0.0
        assert report.instances == 512


def test_invariance_negative_control():
    report = checks.verify_invariance(3, Fraction(1, 2), mutation="diag_double")
    assert not report.passed
    assert report.max_violation > 0


def test_face_identity_exact():
    report = checks.verify_face_identity(Fraction(1, 2))
    assert report.passed and report.max_violation == 0.0 and report.instances == 16


def test_face_identity_negative_control():
    assert not checks.verify_face_identity(Fraction(1, 2), mutation="diag_double").passed


def test_face_identity_diagonal_sides():
    # each diagonal pattern puts coefficient 2 on both traversal senses
    for pattern in ((1, 0, 1, 0), (0, 1, 0, 1)):
        total = 0
        for i, j in checks._FACE_ACW_EDGES:
            if pattern[i] == 1:
                swapped = list(pattern)
                swapped[i], swapped[j] = swapped[j], swapped[i]
                total += checks._local_g_coeff(pattern, None) + checks._local_g_coeff(
                    tuple(swapped), None
                )
        assert total == 2


def test_current_structure_exact_n3():
    report = checks.verify_current_structure(3, Fraction(7, 10))
    assert report.passed
    assert report.max_violation == 0.0


def test_current_structure_exact_n4_without_hodge_pass():
    report = checks.verify_current_structure(4, Fraction(1, 2), hodge=False)
    assert report.passed and report.max_violation == 0.0 and report.instances == 65536


def test_current_structure_negative_control():
    assert not checks.verify_current_structure(3, Fraction(1, 2), mutation="diag_double").passed


def test_rate_coefficients_match_float_model():
    # exact coefficient route against the object-level float rates, all of N=3
    lat = TorusLattice(3)
    occ = all_occupations_matrix(lat.n_vertices)
    sep, rot = checks._rate_coefficients(lat, occ, None)
    alpha = 0.65
    params = ModelParams(alpha=alpha)
    rng = np.random.default_rng(0)
    rows = rng.choice(occ.shape[0], size=40, replace=False)
    configs = list(all_configurations(lat))
    for row in rows:
        cfg = configs[row]
        for e in lat.directed_edges():
            idx = lat.edge_index(e)
            expected = sep[row, idx] + alpha * rot[row, idx]
            assert jump_rate(cfg, e, params) == pytest.approx(expected, abs=1e-14)


def test_rate_positivity_all_configurations_n3_n4():
    for n in (3, 4):
        lat = TorusLattice(n)
        occ = all_occupations_matrix(lat.n_vertices)
        sep, rot = checks._rate_coefficients(lat, occ, None)
        for alpha in (-0.99, 0.5, 0.99):
            rates = sep + alpha * rot
            assert rates.min() >= 1.0 - abs(alpha) - 1e-12 or (rates[rates < 1.0 - abs(alpha)] == 0).all()
            assert (rates >= 0).all()
            # rate > 0 exactly on occupied-to-empty edges
            assert ((rates > 0) == (sep == 1)).all()


def test_translation_covariance_all_shifts_exhaustive():
    # covariance of the exact rate coefficients under every lattice shift,
    # all 512 configurations x 36 directed edges of N=3 at once
    lat = TorusLattice(3)
    occ = all_occupations_matrix(lat.n_vertices)
    sep, rot = checks._rate_coefficients(lat, occ, None)
    codes = np.arange(occ.shape[0])
    for zx in range(3):
        for zy in range(3):
            if (zx, zy) == (0, 0):
                continue
            # row permutation: shifted configuration tau_z eta has code perm[c]
            site_perm = np.array([
                lat.flat((ix + zx, iy + zy))
                for ix in range(3) for iy in range(3)
            ])
            shifted_codes = np.zeros_like(codes)
            for s in range(lat.n_vertices):
                shifted_codes |= ((codes >> s) & 1) << site_perm[s]
            edge_perm = np.array([
                4 * lat.flat((v // 3 + zx, v % 3 + zy)) + d
                for v in range(lat.n_vertices) for d in range(4)
            ])
            assert np.array_equal(sep[shifted_codes][:, edge_perm], sep)
            assert np.array_equal(rot[shifted_codes][:, edge_perm], rot)


def test_grandcanonical_expected_g_matches_closed_form():
    alpha = Fraction(1, 2)
    for num in range(1, 10):
        rho = Fraction(num, 10)
        assert checks.expected_g(rho, alpha) == 2 * alpha * (rho * (1 - rho)) ** 2
    assert checks.expected_g(Fraction(1, 2), Fraction(1, 2)) == Fraction(1, 16)


def test_grandcanonical_squared_difference():
    assert checks.squared_difference_expectation(Fraction(1, 2)) == Fraction(1, 2)
    for num in (1, 3, 7):
        rho = Fraction(num, 10)
        assert checks.squared_difference_expectation(rho) == 2 * rho * (1 - rho)


def test_mixed_edge_expectation_vanishes():
    alpha = Fraction(3, 5)
    for num in range(1, 10):
        assert checks.mixed_edge_expectation(Fraction(num, 10), alpha) == 0


def test_grandcanonical_window_cap():
    with pytest.raises(ValueError):
        checks.grandcanonical_expectation(lambda eta: 1, list(range(21)), Fraction(1, 2))


def test_coefficients_check_and_negative_control():
    assert checks.coefficients_check(Fraction(1, 2)).passed
    assert not checks.coefficients_check(Fraction(1, 2), mutation="diag_double").passed


def test_dirichlet_identity_cases():
    for alpha in (0.0, 0.5):
        for name, fn in checks.DIRICHLET_DENSITIES:
            report = checks.dirichlet_identity(3, 0.5, fn, alpha)
            assert report.passed, (name, report.max_violation)
        assert checks.dirichlet_identity(3, 0.4, checks.density_config_hash, alpha).passed


def test_dirichlet_constant_density_sides_are_zero():
    report = checks.dirichlet_identity(3, 0.5, checks.density_constant, 0.5)
    assert report.max_violation < 1e-15


def test_dirichlet_negative_control():
    report = checks.dirichlet_identity(
        3, 0.5, checks.density_config_hash, 0.5, mutation="diag_double"
    )
    assert not report.passed


def test_detailed_balance_witness():
    assert checks.detailed_balance_witness(3, 0.5) is not None
    assert checks.detailed_balance_witness(3, 0.0) is None


def test_report_line_format():
    report = checks.verify_face_identity(Fraction(1, 2))
    line = report.line()
    assert line.startswith("PASS") and "face-identity" in line

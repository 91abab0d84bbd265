import math

import numpy as np
import pytest

from pxpclassical.spin import (
    SigmaCoords, SpinChain, UnitCell, apply_rz_pi, echo_conjugate, energy, eom_rhs, local_field,
    local_fields, sigma_coords, sigma_distance, sigma_point, spins_to_theta, theta_to_spins,
    translate, zn_cell, zn_state,
)

UP, DOWN, X = (0, 0, 1), (0, 0, -1), (1, 0, 0)


def test_energy_examples():
    assert energy(zn_state(2, 4)) == 0.0
    assert energy(np.tile(DOWN, (6, 1))) == 0.0
    assert energy([DOWN, X, DOWN, DOWN]) == pytest.approx(4.0, abs=1e-15)


def test_local_field_examples():
    z2 = zn_state(2, 4)
    np.testing.assert_allclose(local_field(z2, 1), [0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(local_field(z2, 0), [-4, 0, 0], atol=1e-15)
    np.testing.assert_allclose(local_fields(np.tile(X, (5, 1))), np.tile([-1, 0, 2], (5, 1)),
                               atol=1e-15)


def test_eom_examples():
    v = eom_rhs(zn_state(2, 4))
    np.testing.assert_allclose(v[1], 0, atol=1e-15)
    np.testing.assert_allclose(v[0], [0, 4, 0], atol=1e-15)


def test_field_is_minus_energy_gradient():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((7, 3))
    h = 1e-6
    grad = np.zeros_like(S)
    for i in range(7):
        for c in range(3):
            d = np.zeros_like(S)
            d[i, c] = h
            grad[i, c] = (energy(S + d) - energy(S - d)) / (2 * h)
    np.testing.assert_allclose(local_fields(S), -grad, atol=1e-8)


def test_rz_pi_examples():
    assert apply_rz_pi(zn_state(2, 4)) == zn_state(2, 4)
    np.testing.assert_array_equal(apply_rz_pi(np.array([X]))[0], [-1, 0, 0])


def test_translate_examples():
    z2 = zn_state(2, 6)
    assert translate(z2, 2) == z2
    np.testing.assert_array_equal(translate(z2, 1).spins[:, 2], -z2.spins[:, 2])


def test_zn_state_examples():
    np.testing.assert_array_equal(zn_state(2, 4).spins, [UP, DOWN, UP, DOWN])
    s = zn_state(3, 6).spins[:, 2]
    np.testing.assert_array_equal(s, [1, -1, -1, 1, -1, -1])
    with pytest.raises(ValueError):
        zn_state(3, 4)


def test_sigma_point_example():
    cell = sigma_point(SigmaCoords(0.5 * math.pi, 0.5 * math.pi))
    np.testing.assert_allclose(cell.spins, [[0, 1, 0], [0, -1, 0]], atol=1e-15)


def test_sigma_distance_examples():
    assert sigma_distance(sigma_point(SigmaCoords(1.1, 0.3))) < 1e-30
    assert sigma_distance(zn_cell(2)) == pytest.approx(4.0)
    assert sigma_distance([[0, 1, 0], [0, 1, 0]]) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        sigma_distance(zn_cell(3))


def test_sigma_coords_roundtrip():
    c = SigmaCoords(1.3, 4.0)
    back = sigma_coords(sigma_point(c))
    assert back.theta_e == pytest.approx(1.3) and back.phi_e == pytest.approx(4.0)


def test_echo_conjugate_fixes_sigma_points():
    cell = sigma_point(SigmaCoords(0.7, 2.1))
    np.testing.assert_allclose(echo_conjugate(cell).spins, cell.spins, atol=1e-15)


def test_theta_embedding_roundtrip():
    th = np.array([0.1, 2.0, -1.0])
    np.testing.assert_allclose(spins_to_theta(theta_to_spins(th)), th)


def test_containers_validate():
    with pytest.raises(ValueError):
        SpinChain([[0, 0, 1], [0, 0, 1]])
    with pytest.raises(ValueError):
        SpinChain([[0, 0, 2]] * 4)
    with pytest.raises(ValueError):
        SigmaCoords(4.0, 0.0)
    with pytest.raises(ValueError):
        UnitCell([[0, 0, 1]] * 3).tile(4)
    cell = zn_cell(2)
    with pytest.raises(ValueError):
        cell.spins[0, 0] = 1.0

import math

import numpy as np
import pytest

from conftest import UNSTABLE_PLUS
from pxpclassical.dynamics import (
    CrossingNotFound, IntegrationError, IntegratorSettings, echo_check,
    echo_deviation, evolve, find_sigma_return, integrate, integrate_tangent, integrate_theta,
    lyapunov_max, propagate_tangent, theta_rhs, symplectic_pairing, tangent_frame,
)
from pxpclassical.orbits import find_orbit_from_sigma, z2_period_quadrature, z2_sigma_crossing
from pxpclassical.spin import (
    SigmaCoords, UnitCell, echo_conjugate, energy, eom_rhs, normalize, sigma_coords,
    sigma_distance, sigma_point, zn_cell,
)
from pxpclassical.stability import bloch_maps


def test_all_excited_is_constant():
    S = np.zeros((6, 3))
    S[:, 2] = 1.0
    tr = integrate(S, 5.0, n_samples=11)
    np.testing.assert_array_equal(tr.states, np.broadcast_to(S, tr.states.shape))


def test_all_ground_rotates_uniformly():
    # every site starts at theta = pi with angular speed 4, the same as its neighbours
    S = np.zeros((6, 3))
    S[:, 2] = -1.0
    tr = integrate(S, 1.0, n_samples=5)
    th = integrate_theta(np.full(6, math.pi), 1.0, n_samples=5).states
    np.testing.assert_allclose(tr.states[:, :, 1], np.sin(th), atol=1e-9)
    np.testing.assert_allclose(tr.states[:, :, 2], np.cos(th), atol=1e-9)


def test_theta_examples():
    tr = integrate_theta(np.zeros(4), 3.0, n_samples=5)
    np.testing.assert_array_equal(tr.states, 0.0)
    assert theta_rhs(np.full(5, math.pi)) == pytest.approx(np.full(5, 4.0))
    # uniform angles stay uniform and obey  -u/2 - u^3/6 = t + const,  u = cot(theta/2)
    tr = integrate_theta(np.full(5, math.pi), 2.0, n_samples=9)
    assert np.ptp(tr.states, axis=1).max() == 0.0
    np.testing.assert_allclose(_uniform_clock(tr.states[:, 0]), tr.times, atol=1e-9)


def _uniform_clock(theta):
    u = 1.0 / np.tan(0.5 * theta)
    return -u / 2 - u ** 3 / 6


def test_theta_sector_matches_spin_integration():
    th = np.array([0.3, 1.0, 2.0, 2.7])
    a = integrate_theta(th, 4.0, n_samples=9).states
    b = integrate(np.stack([0 * th, np.sin(th), np.cos(th)], 1), 4.0, n_samples=9).states
    np.testing.assert_allclose(np.sin(a), b[..., 1], atol=1e-9)
    np.testing.assert_allclose(np.cos(a), b[..., 2], atol=1e-9)


def test_energy_and_norm_conserved():
    rng = np.random.default_rng(5)
    tr = integrate(normalize(rng.standard_normal((40, 3))), 30.0, n_samples=31)
    assert tr.energy_drift() < 1e-8
    assert tr.norm_error() < 1e-10


def test_backward_undoes_forward():
    rng = np.random.default_rng(6)
    S = normalize(rng.standard_normal((8, 3)))
    np.testing.assert_allclose(evolve(evolve(S, 3.0), -3.0), S, atol=1e-8)


def test_dense_output_independent_of_sampling():
    rng = np.random.default_rng(2)
    S = normalize(rng.standard_normal((10, 3)))
    a = integrate(S, t_eval=[0.0, 1.0, 2.0]).states[-1]
    b = integrate(S, t_eval=np.linspace(0, 2, 57)).states[-1]
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_loose_tolerance_is_visible():
    rng = np.random.default_rng(7)
    S = normalize(rng.standard_normal((100, 3)))
    drift = integrate(S, 100.0, IntegratorSettings(rtol=1e-4, atol=1e-6), n_samples=11).energy_drift()
    assert drift > 1e-8


def test_step_limit_reports_failure():
    rng = np.random.default_rng(1)
    S = normalize(rng.standard_normal((10, 3)))
    with pytest.raises(IntegrationError) as info:
        integrate(S, 50.0, IntegratorSettings(max_steps=10))
    assert info.value.state is not None


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(rtol=0.0)
    with pytest.raises(ValueError):
        integrate(zn_cell(2), t_eval=[1.0, 0.5])


def test_velocity_mode_returns_at_k0(stable_orbit):
    S = stable_orbit.cell0.spins
    v = eom_rhs(S)
    DT = integrate_tangent(stable_orbit, 0.0, v)
    np.testing.assert_allclose(DT.real, v, atol=1e-8)


def test_z2_map_is_identity_at_k0(z2):
    e1, e2 = tangent_frame(z2.cell0.spins)
    for vec in (e1, e2):
        np.testing.assert_allclose(integrate_tangent(z2, 0.0, vec).real, vec, atol=1e-8)


def test_tangent_zone_validated(z2):
    with pytest.raises(ValueError):
        integrate_tangent(z2, -0.5 * math.pi, tangent_frame(z2.cell0.spins)[0])


def test_tangent_matches_finite_difference_on_a_ring():
    rng = np.random.default_rng(4)
    S = normalize(rng.standard_normal((6, 3)))
    e1, e2 = tangent_frame(S)
    d = rng.standard_normal((6, 1)) * e1 + rng.standard_normal((6, 1)) * e2
    _, DT = propagate_tangent(S, [0.0], d[None, None], 1.5)
    h = 1e-6
    fd = (evolve(normalize(S + h * d), 1.5) - evolve(normalize(S - h * d), 1.5)) / (2 * h)
    np.testing.assert_allclose(DT[0, 0].real, fd, atol=1e-6)


def test_pairing_conserved():
    rng = np.random.default_rng(8)
    S = normalize(rng.standard_normal((5, 3)))
    e1, e2 = tangent_frame(S)
    a = rng.standard_normal((5, 1)) * e1 + rng.standard_normal((5, 1)) * e2
    b = rng.standard_normal((5, 1)) * e1 + rng.standard_normal((5, 1)) * e2
    ST, DT = propagate_tangent(S, [0.0], np.stack([a, b])[None], 2.0)
    assert symplectic_pairing(ST, DT[0, 0].real, DT[0, 1].real) == pytest.approx(
        symplectic_pairing(S, a, b), abs=1e-9)


def test_sigma_return_is_half_period_and_conjugate():
    c = SigmaCoords(2.3, 1.4)
    cell = sigma_point(c)
    cr = find_sigma_return(cell, 25.0)
    assert cr.distance < 1e-10
    o = find_orbit_from_sigma(c)
    assert cr.t == pytest.approx(0.5 * o.period, rel=1e-12)
    # the orbit closes, and the half-period state is fixed by the echo map
    np.testing.assert_allclose(echo_conjugate(cr.cell).spins, cr.cell.spins, atol=1e-8)


def test_z2_crossing_coordinates():
    cr = find_sigma_return(zn_cell(2), 5.0)
    c = sigma_coords(cr.cell)
    th = z2_sigma_crossing()
    # the Z2 state crosses at one of the two sublattice images of (theta*, pi/2)
    assert min(abs(c.theta_e - th), abs(c.theta_e - (math.pi - th))) < 1e-8 or \
        abs(sigma_coords(cr.cell.spins[::-1]).theta_e - th) < 1e-8
    assert math.cos(c.phi_e) == pytest.approx(0.0, abs=1e-8)
    assert cr.t == pytest.approx(0.25 * z2_period_quadrature(), rel=1e-8) or \
        cr.t == pytest.approx(0.75 * z2_period_quadrature(), rel=1e-8)


def _random_zero_energy_cell(rng):
    while True:
        se = normalize(rng.standard_normal((1, 3)))[0]
        tho = rng.uniform(0, math.pi)
        zo = math.cos(tho)
        xo = -(1 - zo) ** 2 * se[0] / (1 - se[2]) ** 2
        if abs(xo) <= math.sin(tho):
            yo = math.sqrt(max(math.sin(tho) ** 2 - xo ** 2, 0.0)) * rng.choice([-1, 1])
            return UnitCell(np.array([se, [xo, yo, zo]]))


def test_zero_energy_cells_reach_sigma():
    rng = np.random.default_rng(11)
    T = z2_period_quadrature()
    times = []
    for _ in range(100):
        cell = _random_zero_energy_cell(rng)
        assert abs(energy(cell)) < 1e-12
        cr = find_sigma_return(cell, 100 * T)
        assert cr.distance < 1e-10
        times.append(cr.t)
    # cells close to a blockaded configuration move slowly and take longer
    assert np.mean(np.array(times) < 10 * T) >= 0.95


def test_crossing_not_found_is_reported():
    with pytest.raises(CrossingNotFound):
        find_sigma_return(sigma_point(SigmaCoords(0.3, 1.0)), 1.0)


def test_echo_examples(z2):
    assert echo_check(z2.cell0, z2.period) < 1e-8
    assert echo_check(sigma_point(SigmaCoords(1.2, 0.4)), 5.0) < 1e-8
    assert sigma_distance(zn_cell(2)) == pytest.approx(4.0)
    assert echo_deviation(zn_cell(2), 2.0) > 0.1
    with pytest.raises(ValueError):
        echo_check(zn_cell(2), 1.0)


def test_lyapunov_z2_is_zero():
    lam, err = lyapunov_max(zn_cell(2), 200.0)
    assert abs(lam) < max(3 * err, 2e-3)


def test_lyapunov_matches_bloch_eigenvalue():
    o = find_orbit_from_sigma(UNSTABLE_PLUS)
    ks = np.linspace(0.0, 0.5 * math.pi, 129)
    pred = math.log(max(m.max_abs_eig for m in bloch_maps(o, ks))) / o.period
    lam, _ = lyapunov_max(o.cell0.tile(64), 100.0)
    assert lam == pytest.approx(pred, rel=0.1)


def test_lyapunov_deterministic():
    assert lyapunov_max(zn_cell(4), 20.0, seed=3) == lyapunov_max(zn_cell(4), 20.0, seed=3)

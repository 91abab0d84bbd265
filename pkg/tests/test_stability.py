import math

import numpy as np
import pytest

from pxpclassical.orbits import PeriodicOrbit
from pxpclassical.spin import echo_conjugate, local_fields
from pxpclassical.stability import (
    StructuralViolation, bloch_map, bloch_maps, classify_orbit, eigenvalues_paired,
    extract_structure, fd_jacobian_k0, landscape_point, linear_growth_coefficient,
    period_gradient_direction, quarter_traces, special_basis, spectrum_closure_residual,
)

KS = np.linspace(0.0, 0.5 * math.pi, 9)

# frozen from independent runs (rtol 1e-10): f0, g''(0), c_lin of the (2.2, 1.57) orbit
STABLE_F0 = -3.4724
STABLE_GPP0 = 0.75354
STABLE_CLIN = 5.2708


def test_z2_maps_square_to_identity(z2):
    for m in bloch_maps(z2, KS):
        np.testing.assert_allclose(m.raw @ m.raw, np.eye(4), atol=1e-7)
        np.testing.assert_allclose(m.eigenvalues, 1.0, atol=1e-6)
        assert eigenvalues_paired(m) == [(pytest.approx(1.0), 4)]


def test_z2_marginal(z2):
    v = classify_orbit(z2, 256)
    assert v.stable and v.marginal and v.boundary_type == "none" and v.k_star is None
    np.testing.assert_allclose(v.quarter_trace_curve, 1.0, atol=1e-6)


def test_z2_structure(z2):
    sp = extract_structure(z2)
    assert abs(sp.f0) < 1e-8
    assert sp.mu is None and sp.phi_disp is None and sp.is_z2_like
    assert linear_growth_coefficient(sp) == (0.0, True)


def test_stable_orbit_k0_jordan_blocks(stable_orbit):
    M = bloch_map(stable_orbit, 0.0).raw.real
    A = M - np.eye(4)
    assert np.linalg.matrix_rank(A, tol=1e-6) == 2
    np.testing.assert_allclose(A @ A, 0.0, atol=1e-8)
    # k = 0 form: only the f entries survive
    off = A.copy()
    off[0, 1] = off[2, 3] = 0.0
    np.testing.assert_allclose(off, 0.0, atol=1e-8)
    assert A[0, 1] == pytest.approx(STABLE_F0, rel=1e-4)


def test_stable_orbit_spectrum(stable_orbit):
    m = bloch_map(stable_orbit, 0.7)
    groups = eigenvalues_paired(m)
    assert len(groups) == 2 and all(mult == 2 for _, mult in groups)
    lam = [g[0] for g in groups]
    np.testing.assert_allclose(np.abs(lam), 1.0, atol=1e-8)
    assert lam[0] == pytest.approx(np.conj(lam[1]), abs=1e-8)


def test_unstable_orbit_spectrum(unstable_orbit):
    v = classify_orbit(unstable_orbit, 64)
    m = bloch_map(unstable_orbit, 0.75)
    assert m.quarter_trace > 1.0
    lam = sorted(g[0].real for g in eigenvalues_paired(m))
    assert lam[1] > 1.0 and lam[0] == pytest.approx(1 / lam[1], rel=1e-6)
    assert not v.stable and v.boundary_type == "plus_one"
    assert 0.0 < v.k_star < 0.5 * math.pi


def test_minus_one_boundary(unstable_minus_orbit):
    v = classify_orbit(unstable_minus_orbit, 64)
    assert not v.stable and v.boundary_type == "minus_one"
    assert v.k_star == pytest.approx(0.579, abs=2e-3)


def test_stable_classification(stable_orbit):
    v = classify_orbit(stable_orbit, 256)
    assert v.stable and not v.marginal
    assert np.all(np.abs(v.quarter_trace_curve) <= 1 + 1e-8)


def test_structural_constraints(stable_orbit, unstable_orbit):
    ks = np.concatenate([KS, -KS[1:-1]])
    for o in (stable_orbit, unstable_orbit):
        for m in bloch_maps(o, ks):
            assert m.symplectic_residual() < 1e-7
            assert m.conjugation_residual() < 1e-6
            assert spectrum_closure_residual(m.eigenvalues) < 1e-6
            assert m.imag_residual < 1e-8


def test_quarter_trace_basis_independent(stable_orbit):
    frame = PeriodicOrbit(2, stable_orbit.cell0, stable_orbit.period)
    a, _ = quarter_traces(stable_orbit, KS)
    b, _ = quarter_traces(frame, KS)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_quarter_trace_continuity(unstable_orbit):
    ks = np.linspace(0.0, 0.5 * math.pi, 129)
    a, _ = quarter_traces(unstable_orbit, ks)
    d = np.abs(np.diff(a))
    # no sampled jump above five times the neighbouring steps
    local = np.maximum(np.concatenate([[d[1]], d[:-1]]), np.concatenate([d[1:], [d[-2]]]))
    assert np.all(d <= 5 * local + 1e-9)


def test_special_basis_properties(stable_orbit):
    B = special_basis(stable_orbit)
    v = B.vectors([0.0])[0]
    M = bloch_map(stable_orbit, 0.0, basis=B)
    DT = M.matrix @ np.eye(4)
    np.testing.assert_allclose(DT[:, 0], [1, 0, 0, 0], atol=1e-8)
    np.testing.assert_allclose(echo_conjugate(v[0].real), -v[0].real, atol=1e-10)
    np.testing.assert_allclose(echo_conjugate(v[2].real), v[2].real, atol=1e-10)
    # v4 is the tangent part of the energy gradient
    S = B.spins
    h = local_fields(S)
    grad = -(h - np.sum(h * S, axis=1)[:, None] * S)
    cos = abs(np.sum(grad * v[3].real)) / (np.linalg.norm(grad) * np.linalg.norm(v[3]))
    assert cos == pytest.approx(1.0, abs=1e-6)
    gram = np.einsum("anc,bnc->ab", v.conj(), v)
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)


def test_special_basis_needs_sigma_root(stable_orbit):
    with pytest.raises(ValueError):
        special_basis(PeriodicOrbit(2, stable_orbit.cell0, stable_orbit.period))


def test_structure_of_stable_orbit(stable_orbit):
    ks = np.linspace(0.0, 0.5 * math.pi, 17)
    sp = extract_structure(stable_orbit, ks)
    assert sp.constraint_residual < 1e-6
    assert max(abs(sp.b[0]), abs(sp.c[0]), abs(sp.g[0])) < 1e-8
    assert sp.f0 == pytest.approx(STABLE_F0, rel=1e-4)
    assert sp.gpp0 == pytest.approx(STABLE_GPP0, rel=1e-3)
    assert sp.f0 * sp.gpp0 < 0
    neg = extract_structure(stable_orbit, -ks[1:-1])
    for name in "abcfg":
        np.testing.assert_allclose(getattr(sp, name)[1:-1], getattr(neg, name), atol=1e-8)
    c, flag = linear_growth_coefficient(sp)
    assert not flag and c == pytest.approx(STABLE_CLIN, rel=1e-4)


def test_gpp_step_sensitivity(stable_orbit):
    a = extract_structure(stable_orbit, [0.1]).gpp0
    b = extract_structure(stable_orbit, [0.1], dk=5e-3).gpp0
    assert abs(a - b) < 0.01 * abs(a)


def test_small_k_eigenvectors(stable_orbit):
    sp = extract_structure(stable_orbit, [0.1])
    res = {}
    for k in (0.02, 0.01):
        M = bloch_map(stable_orbit, k).raw
        best = np.inf
        for s in (1, -1):
            u = np.array([1, s * 1j * sp.mu * k, 0, 0])
            for lam in (np.exp(1j * sp.phi_disp * k), np.exp(-1j * sp.phi_disp * k)):
                best = min(best, np.linalg.norm(M @ u - lam * u))
        res[k] = best
    # O(k^2) or better: residual below k^2 and shrinking at least fourfold per halving
    assert res[0.01] < 0.01 ** 2 and res[0.01] < res[0.02] / 3.5


def test_fd_jacobian_oracle(stable_orbit, unstable_orbit):
    for o in (stable_orbit, unstable_orbit):
        J, M = fd_jacobian_k0(o)
        np.testing.assert_allclose(J, M, atol=1e-5)


def test_period_gradient_cross_check(stable_orbit):
    B = special_basis(stable_orbit)
    g = period_gradient_direction(stable_orbit)
    # v3 (the z direction) is tangent to the family, so it is orthogonal to grad T
    assert abs(np.dot(g, B.z)) < 1e-4


def test_landscape_domain():
    with pytest.raises(ValueError):
        landscape_point(0.2, 0.1)


def test_bloch_zone_validated(stable_orbit):
    with pytest.raises(ValueError):
        bloch_maps(stable_orbit, [-0.5 * math.pi])


def test_eigen_pairing_failure_is_reported(stable_orbit):
    m = bloch_map(stable_orbit, 0.5)
    m.eigenvalues = np.array([2.0, 1.0, 1.0, 1.0])
    with pytest.raises(StructuralViolation):
        eigenvalues_paired(m)

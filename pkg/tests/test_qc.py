import numpy as np
import pytest

from qclab.chain import pair_forces, tension_load
from qclab.potential import phi_derivs
from qclab.qc import (
    QcMesh,
    RepState,
    conjugate_external,
    conjugate_load,
    cqc_energy,
    cqc_forces,
    energy_decomposition,
    ghost_stress,
    interpolate,
    local_energy,
    local_forces,
    parse_state,
    qce_energy,
    qce_forces,
    qce_stress,
    qcf_forces,
    qcf_stress,
    qcf_stress_from_forces,
    serialize_state,
    qce_stress_jacobian,
)

from conftest import random_spacings


# ---------------------------------------------------------------- mesh/state

def test_mesh_validation(landmarks):
    a0 = landmarks.a0
    with pytest.raises(ValueError):
        QcMesh.uncoarsened(7, 7, a0)                   # K must leave a continuum ring
    with pytest.raises(ValueError):
        QcMesh(M=7, N=7, K=3, ell=np.arange(-6, 9), a0=a0)
    with pytest.raises(ValueError):                    # nu != 1 inside the interface zone
        QcMesh.from_nu([2, 1, 2, 1, 1, 1, 2, 1, 2], K=2, a0=a0)


def test_graded_mesh_layout(landmarks):
    m = QcMesh.graded(20, 7, 3, landmarks.a0)
    assert m.M == 20 and m.N == 7 and m.K == 3
    assert int(np.sum(m.nu)) == 2 * m.M + 1
    assert np.all(m.nu[m.eidx(-4):m.eidx(4) + 1] == 1)
    assert np.array_equal(m.nu, m.nu[::-1])            # symmetric layout


def test_state_spacing_bijection(mesh773, landmarks):
    rng = np.random.default_rng(3)
    r = random_spacings(mesh773, rng)
    st = RepState.from_spacings(mesh773, r)
    np.testing.assert_allclose(st.r, r, atol=1e-14)
    st2 = RepState.from_spacings(mesh773, st.r, z_end=float(st.z[-1]))
    np.testing.assert_allclose(st2.z, st.z, atol=1e-14)


def test_state_validation(mesh773):
    z = RepState.uniform(mesh773, 1.0).z.copy()
    z[3] = z[4] + 0.1
    with pytest.raises(ValueError):
        RepState(mesh773, z)


# ------------------------------------------------------------- interpolation

def test_identity_interpolation(mesh773, lj):
    rng = np.random.default_rng(4)
    st = RepState.from_spacings(mesh773, random_spacings(mesh773, rng))
    np.testing.assert_array_equal(interpolate(mesh773, st), st.z)


def test_uniform_state_reproduced_linearly(coarse_mesh):
    st = RepState.uniform(coarse_mesh, 1.03)
    y = interpolate(coarse_mesh, st)
    np.testing.assert_allclose(np.diff(y), 1.03, atol=1e-12)


def test_midpoint_interpolation(landmarks):
    m = QcMesh.from_nu([2, 1, 1, 1, 2], K=0, a0=landmarks.a0)
    rng = np.random.default_rng(5)
    st = RepState.from_spacings(m, random_spacings(m, rng))
    y = interpolate(m, st)
    # the non-repatom inside the first element sits at its element midpoint
    assert y[1] == pytest.approx(0.5 * (st.z[0] + st.z[1]), abs=1e-14)


# ----------------------------------------------------------------- CQC model

def test_cqc_forces_collapse_to_atomistic_when_unconstrained(mesh773, lj):
    rng = np.random.default_rng(6)
    st = RepState.from_spacings(mesh773, random_spacings(mesh773, rng))
    Fa = pair_forces(lj, interpolate(mesh773, st))
    np.testing.assert_allclose(cqc_forces(mesh773, st, lj), Fa, atol=1e-14)


def test_cqc_forces_match_energy_gradient(coarse_mesh, lj):
    rng = np.random.default_rng(7)
    st = RepState.from_spacings(coarse_mesh, random_spacings(coarse_mesh, rng))
    F = cqc_forces(coarse_mesh, st, lj)
    h = 1e-6
    fd = np.zeros(F.size)
    for i in range(F.size):
        zp, zm = st.z.copy(), st.z.copy()
        zp[i] += h
        zm[i] -= h
        fd[i] = -(cqc_energy(coarse_mesh, RepState(coarse_mesh, zp), lj)
                  - cqc_energy(coarse_mesh, RepState(coarse_mesh, zm), lj)) / (2 * h)
    assert np.max(np.abs(F - fd)) / np.max(np.abs(F)) <= 1e-6


def test_cqc_uniform_interior_forces_vanish(coarse_mesh, lj, landmarks):
    st = RepState.uniform(coarse_mesh, landmarks.a0)
    F = cqc_forces(coarse_mesh, st, lj)
    # repatoms whose hats touch the surface atoms (-M, -M+1, M) pick up the
    # chain-end effects; everything in between is in exact equilibrium
    assert np.max(np.abs(F[2:-1])) <= 1e-12
    assert abs(F[0]) > 1e-3 and abs(F[-1]) > 1e-3


def test_conjugate_external_tension(mesh773):
    f = conjugate_external(mesh773, tension_load(mesh773.M, 2.76))
    assert f[0] == -2.76
    assert np.max(np.abs(f[1:])) == 0.0
    np.testing.assert_array_equal(conjugate_external(mesh773, np.zeros(2 * mesh773.M + 1)), 0.0)


def test_conjugate_external_uniform_load(mesh773):
    f = conjugate_external(mesh773, np.full(2 * mesh773.M + 1, 0.7))
    np.testing.assert_allclose(f, 0.7, atol=1e-14)


def test_conjugate_load_properties():
    f = np.array([-2.76, 0.0, 0.0, 0.0, 0.0])
    Phi = conjugate_load(f)
    np.testing.assert_allclose(Phi, 2.76, atol=1e-15)
    assert np.all(conjugate_load(np.zeros(5)) == 0.0)
    rng = np.random.default_rng(8)
    f = rng.normal(size=9)
    Phi = conjugate_load(f)
    np.testing.assert_allclose(-np.diff(np.concatenate([[0.0], Phi])), f, atol=1e-14)


# -------------------------------------------------------------- decomposition

@pytest.mark.parametrize("mesh_name", ["mesh773", "coarse_mesh"])
def test_energy_decomposition_identity(mesh_name, lj, request):
    mesh = request.getfixturevalue(mesh_name)
    rng = np.random.default_rng(9)
    for _ in range(5):
        st = RepState.from_spacings(mesh, random_spacings(mesh, rng))
        split = energy_decomposition(mesh, st, lj)
        assert abs(split.total - cqc_energy(mesh, st, lj)) <= 1e-12


def test_interface_terms_vanish_for_uniform_strain(coarse_mesh, lj):
    st = RepState.uniform(coarse_mesh, 1.05)
    split = energy_decomposition(coarse_mesh, st, lj)
    assert abs(split.interface) <= 1e-13


def test_interface_term_formula(coarse_mesh, lj):
    rng = np.random.default_rng(10)
    st = RepState.from_spacings(coarse_mesh, random_spacings(coarse_mesh, rng))
    r = st.r
    expected = sum(
        -0.5 * phi_derivs(lj, 2 * r[j - 1], 0)
        + phi_derivs(lj, r[j - 1] + r[j], 0)
        - 0.5 * phi_derivs(lj, 2 * r[j], 0)
        for j in range(1, r.size)
    )
    assert energy_decomposition(coarse_mesh, st, lj).interface == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- local model

def test_local_forces_uniform_vanish(mesh773, lj):
    r = np.full(mesh773.n_elements, 1.02)
    F = local_forces(mesh773, r, lj)
    assert np.max(np.abs(F[1:])) <= 1e-14


def test_local_forces_match_energy_gradient(coarse_mesh, lj):
    rng = np.random.default_rng(12)
    st = RepState.from_spacings(coarse_mesh, random_spacings(coarse_mesh, rng))
    F = local_forces(coarse_mesh, st.r, lj)
    h = 1e-6
    fd = np.zeros(F.size)
    for i in range(F.size):
        zp, zm = st.z.copy(), st.z.copy()
        zp[i] += h
        zm[i] -= h
        fd[i] = -(local_energy(coarse_mesh, RepState(coarse_mesh, zp).r, lj)
                  - local_energy(coarse_mesh, RepState(coarse_mesh, zm).r, lj)) / (2 * h)
    assert np.max(np.abs(F - fd)) / np.max(np.abs(F)) <= 1e-6


def test_local_forces_single_stretched_element(mesh773, lj, landmarks):
    r = np.full(mesh773.n_elements, landmarks.a0)
    e = mesh773.eidx(2)
    r[e] = 1.05
    F = local_forces(mesh773, r, lj)
    nonzero = np.nonzero(np.abs(F) > 1e-12)[0]
    np.testing.assert_array_equal(nonzero, [e, e + 1])
    assert F[e] == pytest.approx(-F[e + 1], rel=1e-12)


# ------------------------------------------------------------------ QCF model

def test_qcf_uniform_consistency(mesh773, lj):
    r = np.full(mesh773.n_elements, 1.05)
    F = qcf_forces(mesh773, r, lj)
    assert np.max(np.abs(F[1:])) <= 1e-12
    boundary = phi_derivs(lj, 1.05, 1) + 2 * phi_derivs(lj, 2.1, 1)
    assert F[0] == pytest.approx(boundary, rel=1e-12)


def test_qcf_matches_atomistic_on_atomistic_repatoms(lj, landmarks):
    mesh = QcMesh.uncoarsened(7, 6, landmarks.a0)   # K at its maximum, N - 1
    rng = np.random.default_rng(13)
    r = random_spacings(mesh, rng)
    st = RepState.from_spacings(mesh, r)
    Fa = pair_forces(lj, interpolate(mesh, st))
    FQ = qcf_forces(mesh, r, lj)
    mask = mesh.atomistic_repatoms
    assert mask.sum() == 2 * mesh.K
    assert np.max(np.abs(FQ[mask] - Fa[mask])) <= 1e-12


def test_qcf_matches_local_on_continuum_repatoms(mesh773, lj):
    rng = np.random.default_rng(14)
    r = random_spacings(mesh773, rng)
    FQ = qcf_forces(mesh773, r, lj)
    FL = local_forces(mesh773, r, lj)
    cont = ~mesh773.atomistic_repatoms
    np.testing.assert_array_equal(FQ[cont], FL[cont])


def test_qcf_insensitive_to_interface_placement(lj, landmarks):
    rng = np.random.default_rng(15)
    m3 = QcMesh.uncoarsened(7, 3, landmarks.a0)
    m4 = QcMesh.uncoarsened(7, 4, landmarks.a0)
    r = random_spacings(m3, rng)
    F3 = qcf_forces(m3, r, lj)
    F4 = qcf_forces(m4, r, lj)
    j = np.arange(-7, 8)
    far = (np.abs(j) <= 3 - 2) | (np.abs(j) >= 3 + 2)
    assert np.max(np.abs(F3[far] - F4[far])) == 0.0


# ------------------------------------------------------------------ QCE model

def test_qce_energy_all_continuum_degenerate(landmarks, lj):
    m = QcMesh.uncoarsened(5, 0, landmarks.a0)      # no atomistic repatoms
    rng = np.random.default_rng(16)
    r = random_spacings(m, rng)
    assert qce_energy(m, r, lj) == pytest.approx(local_energy(m, r, lj), rel=1e-14)


def test_qce_energy_uniform_bond_count(mesh773, lj, landmarks):
    # independent count: continuum repatoms carry half their two elements'
    # bulk energy, atomistic repatoms half of their four incident bonds
    a0 = landmarks.a0
    N, K = mesh773.N, mesh773.K
    w = phi_derivs(lj, a0, 0) + phi_derivs(lj, 2 * a0, 0)
    n_cont = 2 * (N - K) + 1
    expected = (n_cont - 1) * w + 2 * (0.5 * w) + 2 * K * w
    r = np.full(mesh773.n_elements, a0)
    assert qce_energy(mesh773, r, lj) == pytest.approx(expected, rel=1e-12)


def test_qce_forces_match_energy_gradient(mesh773, lj):
    rng = np.random.default_rng(17)
    st = RepState.from_spacings(mesh773, random_spacings(mesh773, rng))
    F = qce_forces(mesh773, st.r, lj)
    h = 1e-6
    fd = np.zeros(F.size)
    for i in range(F.size):
        zp, zm = st.z.copy(), st.z.copy()
        zp[i] += h
        zm[i] -= h
        fd[i] = -(qce_energy(mesh773, RepState(mesh773, zp).r, lj)
                  - qce_energy(mesh773, RepState(mesh773, zm).r, lj)) / (2 * h)
    assert np.max(np.abs(F - fd)) / np.max(np.abs(F)) <= 1e-6


def test_qce_stress_case_rows(mesh773, lj):
    rng = np.random.default_rng(18)
    r = random_spacings(mesh773, rng)
    psi = qce_stress(mesh773, r, lj)
    e = mesh773.eidx
    d = lambda x: phi_derivs(lj, x, 1)
    # deep continuum
    j = e(-6)
    assert -psi[j] == pytest.approx(d(r[j]) + 2 * d(2 * r[j]), rel=1e-13)
    # last continuum element before the interface
    j = e(-4)
    assert -psi[j] == pytest.approx(d(r[j]) + 2 * d(2 * r[j]) + 0.5 * d(r[j] + r[j + 1]),
                                    rel=1e-13)
    # first element inside the atomistic region
    j = e(-2)
    assert -psi[j] == pytest.approx(
        d(r[j]) + 0.5 * d(r[j] + r[j - 1]) + d(r[j] + r[j + 1]), rel=1e-13)
    # deep atomistic
    j = e(0)
    assert -psi[j] == pytest.approx(
        d(r[j]) + d(r[j] + r[j - 1]) + d(r[j] + r[j + 1]), rel=1e-13)


def test_qce_stress_is_partial_sum_of_forces(mesh773, lj):
    rng = np.random.default_rng(19)
    r = random_spacings(mesh773, rng)
    diff = qce_stress(mesh773, r, lj) + np.cumsum(qce_forces(mesh773, r, lj))
    assert np.max(np.abs(diff)) <= 1e-12


def test_qce_stress_jacobian_matches_fd(mesh773, lj):
    rng = np.random.default_rng(20)
    r = random_spacings(mesh773, rng)
    ab = qce_stress_jacobian(mesh773, r, lj)
    n = r.size
    h = 1e-7
    J = np.zeros((n, n))
    for k in range(n):
        rp, rm = r.copy(), r.copy()
        rp[k] += h
        rm[k] -= h
        J[:, k] = (qce_stress(mesh773, rp, lj) - qce_stress(mesh773, rm, lj)) / (2 * h)
    dense = np.zeros((n, n))
    dense[np.arange(n), np.arange(n)] = ab[1]
    dense[np.arange(n - 1), np.arange(1, n)] = ab[0, 1:]
    dense[np.arange(1, n), np.arange(n - 1)] = ab[2, :-1]
    assert np.max(np.abs(J - dense)) / np.max(np.abs(J)) <= 1e-6


# ------------------------------------------------------- QCF stress and ghost

def test_qcf_stress_two_routes_agree(mesh773, coarse_mesh, lj):
    rng = np.random.default_rng(21)
    for mesh in (mesh773, coarse_mesh):
        r = random_spacings(mesh, rng)
        diff = qcf_stress(mesh, r, lj) - qcf_stress_from_forces(mesh, r, lj)
        assert np.max(np.abs(diff)) <= 1e-12


def test_qcf_stress_uniform_and_equilibrium(mesh773, lj, landmarks):
    from scipy.optimize import brentq
    r_val = brentq(lambda x: phi_derivs(lj, x, 1) + 2 * phi_derivs(lj, 2 * x, 1) - 1.38,
                   landmarks.a0, landmarks.r_star)
    r = np.full(mesh773.n_elements, r_val)
    psi = qcf_stress(mesh773, r, lj)
    assert np.max(np.abs(psi - psi[0])) <= 1e-12           # spatially constant
    assert np.max(np.abs(psi + 1.38)) <= 1e-12             # psi + Phi = 0 at equilibrium


def test_ghost_stress_uniform_structure(mesh773, lj, landmarks):
    a0 = landmarks.a0
    K, e = mesh773.K, mesh773.eidx
    g = ghost_stress(mesh773, np.full(mesh773.n_elements, a0), lj)
    half = 0.5 * phi_derivs(lj, 2 * a0, 1)
    assert g[e(-K - 1)] == pytest.approx(half, abs=1e-10)
    assert g[e(K + 1)] == pytest.approx(half, abs=1e-10)
    assert g[e(-K + 1)] == pytest.approx(-half, abs=1e-10)
    assert g[e(K - 1)] == pytest.approx(-half, abs=1e-10)
    deep = [j for j in range(-mesh773.N, mesh773.N + 1)
            if abs(j) <= K - 2 or abs(j) >= K + 2]
    assert max(abs(g[e(j)]) for j in deep) <= 1e-13
    assert np.max(np.abs(g)) >= abs(half) - 1e-10          # ghost forces exist


def test_qce_uniform_inconsistency_magnitude(mesh773, lj, landmarks):
    a0 = landmarks.a0
    F = qce_forces(mesh773, np.full(mesh773.n_elements, a0), lj)
    half = 0.5 * abs(phi_derivs(lj, 2 * a0, 1))
    assert np.max(np.abs(F)) >= half - 1e-10
    assert np.max(np.abs(F)) == pytest.approx(half, abs=1e-10)


# -------------------------------------------------------------- serialization

def test_serialization_roundtrip(coarse_mesh, lj):
    rng = np.random.default_rng(22)
    st = RepState.from_spacings(coarse_mesh, random_spacings(coarse_mesh, rng))
    mesh2, st2 = parse_state(serialize_state(coarse_mesh, st))
    assert mesh2.M == coarse_mesh.M and mesh2.N == coarse_mesh.N and mesh2.K == coarse_mesh.K
    assert mesh2.a0 == coarse_mesh.a0
    np.testing.assert_array_equal(mesh2.ell, coarse_mesh.ell)
    np.testing.assert_array_equal(st2.z, st.z)             # bit-exact round trip

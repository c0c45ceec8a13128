"""Eigenvector construction from root configurations and its certification."""

import numpy as np
import pytest

from liouvrg import bethe, ed, rg
from liouvrg.model import (
    LiouvParams,
    NumericError,
    SectorLabel,
    SingularityError,
    ValidationError,
    enumerate_sectors,
    spectral_counts,
)

PARAMS = LiouvParams(3, 2, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)
PARAMS_L1 = LiouvParams(3, 1, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)


def test_factor_weights():
    assert abs(bethe.rho_coef(0.0, 0.5) - 1.5) <= 1e-15
    assert abs(bethe.s_coef(1j, 0.0) - 2.0) <= 1e-15
    with pytest.raises(ValidationError):
        bethe.rho_coef(1.0, 0.0)
    with pytest.raises(SingularityError):
        bethe.rho_coef(2j, 0.5)  # on the construction pole i/p
    with pytest.raises(SingularityError):
        bethe.s_coef(2j, 2j)
    with pytest.raises(SingularityError):
        bethe.s_coef(-1j, -1j)


def test_vacuum_state():
    assert bethe.vacuum_state(3, 3) == {((3, 0, 0), (0, 0, 3)): 1.0 + 0.0j}


def test_generator_actions_fixed_factors():
    state = {((2, 0), (0, 2)): 1.0 + 0.0j}
    up = bethe.apply_k_first(state, 1, 0)
    assert set(up) == {((1, 1), (0, 2))}
    assert abs(up[((1, 1), (0, 2))] - np.sqrt(2.0)) <= 1e-15
    down = bethe.apply_k_second(state, 1, 0)
    assert set(down) == {((2, 0), (1, 1))}
    assert abs(down[((2, 0), (1, 1))] + np.sqrt(2.0)) <= 1e-15
    diag1 = bethe.apply_k_first(state, 0, 0)
    assert diag1[((2, 0), (0, 2))] == 2.0
    diag2 = bethe.apply_k_second(state, 1, 1)
    assert diag2[((2, 0), (0, 2))] == -2.0


def test_state_to_vector_rejects_outside_components():
    sec = SectorLabel((1, -1, 0))
    good = {((1, 0, 0), (0, 1, 0)): 2.0}
    vec = bethe.state_to_vector(good, 1, sec)
    assert vec.tolist() == [2.0]
    with pytest.raises(ValidationError):
        bethe.state_to_vector({((1, 0, 0), (1, 0, 0)): 1.0}, 1, sec)


def test_two_level_census_certifies():
    params = LiouvParams(2, 2, (0.15, -0.15), gamma=1.0, gamma0=0.0, p=0.5)
    rng = np.random.default_rng(5)
    checked = 0
    for sec in enumerate_sectors(params):
        vals = ed.full_spectrum(ed.build_sector_matrix(params, sec)).eigenvalues
        found, unmatched = rg.find_sector_solutions(params, sec, vals, rng, tries=300)
        assert unmatched == []
        for sol in found.values():
            vec, resid = bethe.certified_eigenvector(sol, params, tol=1e-8)
            assert resid <= 1e-8
            assert abs(np.linalg.norm(vec) - 1.0) <= 1e-12
            checked += 1
    assert checked == (params.n_atoms + 1) ** 2


def test_three_level_frozen_solutions_certify():
    zero = SectorLabel((0, 0, 0))
    mat = ed.build_sector_matrix(PARAMS_L1, zero)
    full = ed.full_spectrum(mat, eigenvectors=True)
    for e, w in [((-3j,), (-1j,)), ((-1j,), (5j,)), ((4j,), (2.5j,))]:
        sol = rg.solve(rg.SpectralSolution(zero, e, w), PARAMS_L1)
        bv = bethe.build_eigenvector_su3(sol, PARAMS_L1)
        assert isinstance(bv, bethe.BetheVector)
        assert bv.residual <= 1e-8
        assert bv.source is sol
        # collinear with the matching exact eigenvector
        j = int(np.argmin(np.abs(full.eigenvalues - sol.eigenvalue)))
        ev = full.eigenvectors[:, j]
        overlap = abs(np.vdot(ev, bv.components))
        assert overlap >= (1.0 - 1e-8) * np.linalg.norm(ev) * np.linalg.norm(bv.components)
        # Rayleigh quotient reproduces the eigenvalue
        v = bv.components
        rq = np.vdot(v, mat.toarray() @ v) / np.vdot(v, v)
        assert abs(rq - sol.eigenvalue) <= 1e-6


def test_root_ordering_leaves_vector_collinear():
    params = LiouvParams(3, 3, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)
    sol = rg.steady_state_solution(params)
    a, _ = bethe.build_eigenvector(sol, params)
    shuffled = rg.SpectralSolution(
        sol.sector, tuple(reversed(sol.e)), tuple(reversed(sol.w)),
        sol.residual_norm, sol.eigenvalue, params, True, 0,
    )
    b, _ = bethe.build_eigenvector(shuffled, params)
    assert abs(np.vdot(a, b)) >= 1.0 - 1e-8


def test_infinity_root_state_certifies():
    sec = SectorLabel((1, -1, 0))
    sol = rg.solve(rg.SpectralSolution(sec, (), (), w_inf=1), PARAMS_L1)
    bv = bethe.build_eigenvector_su3(sol, PARAMS_L1)
    assert bv.residual <= 1e-12
    vals = ed.full_spectrum(ed.build_sector_matrix(PARAMS_L1, sec)).eigenvalues
    assert abs(sol.eigenvalue - vals[0]) <= 1e-12


def test_coincident_pair_has_finite_limit():
    # one e and one w parked together at -i: the promotion weight limit is
    # the e-family pole charge, and the built vector is an exact eigenvector
    sec = SectorLabel((1, 0, -1))
    sol = rg.solve(rg.SpectralSolution(sec, (-1j,), (-1j,)), PARAMS)
    assert sol.converged
    assert abs(sol.eigenvalue - (-7.7 - 0.5j)) <= 1e-10
    bv = bethe.build_eigenvector_su3(sol, PARAMS)
    assert bv.residual <= 1e-12


def test_larger_coincident_cluster_refused():
    zero = SectorLabel((0, 0, 0))
    sol = rg.solve(rg.SpectralSolution(zero, (-1j, -1j), (-1j, -1j)), PARAMS)
    assert sol.converged and abs(sol.eigenvalue + 8.0) <= 1e-9
    with pytest.raises(SingularityError):
        bethe.build_eigenvector_su3(sol, PARAMS)


def test_certify_invariances():
    zero = SectorLabel((0, 0, 0))
    mat = ed.build_sector_matrix(PARAMS_L1, zero)
    sol = rg.solve(rg.SpectralSolution(zero, (4j,), (2.5j,)), PARAMS_L1)
    bv = bethe.build_eigenvector_su3(sol, PARAMS_L1, matrix=mat)
    base = bethe.certify(bv.components, mat, sol.eigenvalue)
    scaled = bethe.certify(17.3 * bv.components, mat, sol.eigenvalue)
    assert abs(base - scaled) <= 1e-12
    # the wrapper, the dense array and the sparse matrix agree
    assert bethe.certify(bv, mat, sol.eigenvalue) == base
    dense = bethe.certify(bv.components, mat.toarray(), sol.eigenvalue)
    sparse = bethe.certify(bv.components, mat.tocsr(), sol.eigenvalue)
    assert abs(dense - base) <= 1e-12 and abs(sparse - base) <= 1e-12
    with pytest.raises(ValidationError):
        bethe.certify(np.zeros(mat.dim), mat, 0.0)
    with pytest.raises(ValidationError):
        bethe.certify(np.ones(mat.dim + 1), mat, 0.0)
    rng = np.random.default_rng(8)
    noise = rng.standard_normal(mat.dim) + 1j * rng.standard_normal(mat.dim)
    assert bethe.certify(noise, mat, sol.eigenvalue) > 0.1


def test_builder_validation():
    zero = SectorLabel((0, 0, 0))
    with pytest.raises(ValidationError):
        bethe.build_eigenvector(rg.SpectralSolution(zero, (1j, 2j), (3j,)), PARAMS_L1)
    sol = rg.SpectralSolution(zero, (4j,), (2.5j,))
    with pytest.raises(ValidationError):
        bethe.build_eigenvector_su3(sol, PARAMS_L1)  # no eigenvalue attached
    with pytest.raises(ValidationError):
        bethe.build_eigenvector_su3(sol, LiouvParams(2, 1, p=0.5))
    with pytest.raises(ValidationError):
        bethe.build_state_su2(sol, PARAMS_L1)
    with pytest.raises(ValidationError):
        bethe.certified_eigenvector(sol, PARAMS_L1)


def test_components_csv_text():
    zero = SectorLabel((0, 0, 0))
    sol = rg.solve(rg.SpectralSolution(zero, (4j,), (2.5j,)), PARAMS_L1)
    bv = bethe.build_eigenvector_su3(sol, PARAMS_L1)
    text = bethe.components_csv_text(bv, 1)
    lines = text.strip().splitlines()
    assert lines[0] == "k1,k2,k3,re,im"
    assert len(lines) == 1 + 3  # header + sector dimension
    for ln in lines[1:]:
        parts = ln.split(",")
        assert len(parts) == 5
        float(parts[3]), float(parts[4])
    with pytest.raises(ValidationError):
        bethe.components_csv_text(bv, 2)

"""Oracle assembly, sector blocks, spectra, steady states and evolution."""

import io

import numpy as np
import pytest

from liouvrg import ed
from liouvrg.model import (
    LiouvParams,
    NumericError,
    ResourceLimitError,
    SectorLabel,
    ValidationError,
    enumerate_basis,
    enumerate_sectors,
)

PARAMS_N2 = LiouvParams(2, 3, (0.15, -0.15), gamma=1.0, gamma0=0.4, p=0.5)
PARAMS_N3 = LiouvParams(3, 2, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)


def _dense(mats):
    return {ab: m.toarray() for ab, m in mats.items()}


def test_doubled_generators_algebra():
    params = LiouvParams(3, 1, p=0.3)
    K1, K2 = ed.doubled_generators(params)
    K1, K2 = _dense(K1), _dense(K2)
    N = params.n_levels

    def comm(A, B):
        return A @ B - B @ A

    for Ks in (K1, K2):
        for a in range(N):
            for b in range(N):
                for c in range(N):
                    for d in range(N):
                        want = (b == c) * Ks[(a, d)] - (d == a) * Ks[(c, b)]
                        got = comm(Ks[(a, b)], Ks[(c, d)])
                        assert np.abs(got - want).max() < 1e-12
    for ab in K1:
        for cd in K2:
            assert np.abs(comm(K1[ab], K2[cd])).max() == 0.0


@pytest.mark.parametrize("params", [PARAMS_N2, PARAMS_N3])
def test_stencil_matches_oracle_blockwise(params):
    full = ed.build_oracle_matrix(params)
    assert ed.offblock_mass(params, full=full) == 0.0
    for sec in enumerate_sectors(params):
        ora = ed.oracle_sector_matrix(params, sec, full=full)
        sten = ed.build_sector_matrix(params, sec)
        assert sten.build_method == "stencil" and ora.build_method == "oracle"
        assert np.abs(ora.toarray() - sten.toarray()).max() <= 1e-12


def test_oracle_detects_rate_table_mutation():
    params = PARAMS_N3
    x = params.x_table()
    x[0, 1] = -x[0, 1]
    full = ed.build_oracle_matrix(params, x_table=x)
    worst = 0.0
    for sec in enumerate_sectors(params):
        ora = ed.oracle_sector_matrix(params, sec, full=full)
        sten = ed.build_sector_matrix(params, sec)
        worst = max(worst, np.abs(ora.toarray() - sten.toarray()).max())
    assert worst > 1.0  # a flipped rate moves matrix entries by O(Gamma L)


def test_weak_symmetry_and_trace_functional():
    full = ed.build_oracle_matrix(PARAMS_N3)
    assert ed.weak_symmetry_max_commutator(PARAMS_N3, full=full) == 0.0
    assert ed.trace_functional_deviation(PARAMS_N3, full=full) <= 1e-12
    # trace preservation survives rate mutations; it is a separate invariant
    x = PARAMS_N3.x_table()
    x[0, 1] *= -1.0
    mutated = ed.build_oracle_matrix(PARAMS_N3, x_table=x)
    assert ed.trace_functional_deviation(PARAMS_N3, full=mutated) <= 1e-12


@pytest.mark.parametrize("params", [PARAMS_N2, PARAMS_N3])
def test_conserved_operators_commute_and_rebuild_liouvillian(params):
    rep = ed.integrability_check(params)
    assert rep.commutator <= 1e-12
    assert rep.reconstruction <= 1e-12


def test_conserved_operators_need_pump_asymmetry():
    with pytest.raises(ValidationError):
        ed.integrals_of_motion(LiouvParams(3, 2, p=0.0))
    with pytest.raises(ValidationError):
        ed.integrals_of_motion(LiouvParams(3, 2, p=1.0))


def test_conjugate_sectors_pair_by_complex_conjugation():
    params = LiouvParams(3, 3, (0.2, -0.5, 0.3), gamma=1.3, gamma0=0.2, p=0.35)
    for s in [(1, -1, 0), (2, -1, -1), (1, 1, -2)]:
        sec = SectorLabel(s)
        va = ed.full_spectrum(ed.build_sector_matrix(params, sec)).eigenvalues
        vb = ed.full_spectrum(ed.build_sector_matrix(params, sec.conjugate())).eigenvalues
        vb = np.conj(vb)
        vb = vb[np.lexsort((vb.imag, vb.real))]
        assert np.abs(va - vb).max() <= 1e-9


def test_full_spectrum_sorting_and_residuals():
    mat = ed.build_sector_matrix(PARAMS_N3, (0, 0, 0))
    res = ed.full_spectrum(mat, eigenvectors=True)
    v = res.eigenvalues
    key = np.lexsort((v.imag, v.real))
    assert np.all(key == np.arange(v.size))
    assert res.method == "dense_full"
    assert res.residual_norms.max() <= 1e-10
    with pytest.raises(ResourceLimitError):
        ed.full_spectrum(mat, dense_limit=mat.dim - 1)


def test_targeted_eigenvalues_match_dense():
    params = LiouvParams(3, 10, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.5)
    mat = ed.build_sector_matrix(params, (0, 0, 0), sparse=True)
    assert mat.dim == 66
    dense_vals = np.linalg.eigvals(mat.toarray())
    shift = -2.0 + 0.5j
    part = ed.target_eigenvalues_near(mat, shift, 6)
    assert part.method == "shift_invert_partial"
    assert part.residual_norms.max() <= 1e-8 * np.abs(mat.toarray()).sum(axis=0).max()
    want = dense_vals[np.argsort(np.abs(dense_vals - shift))][:6]
    got = np.sort_complex(part.eigenvalues)
    assert np.abs(np.sort_complex(want) - got).max() <= 1e-9
    with pytest.raises(ValidationError):
        ed.target_eigenvalues_near(mat, shift, 0)


def test_targeted_eigenvalues_small_block_fallback():
    mat = ed.build_sector_matrix(PARAMS_N3, (0, 0, 0))
    part = ed.target_eigenvalues_near(mat, 0.0, 2)
    dense_vals = ed.full_spectrum(mat).eigenvalues
    want = dense_vals[np.argsort(np.abs(dense_vals))][:2]
    assert np.abs(np.sort_complex(part.eigenvalues) - np.sort_complex(want)).max() <= 1e-10


def test_steady_state_properties():
    params = LiouvParams(3, 4, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.5)
    ss = ed.steady_state(params)
    assert abs(ss.eigenvalue) <= 1e-9
    assert not ss.degenerate
    assert abs(ss.rho.sum() - 1.0) <= 1e-10
    pops = ed.level_populations(params, ss.rho)
    assert np.all(pops.real >= -1e-10)
    assert abs(pops.sum() - params.n_atoms) <= 1e-9


def test_steady_state_full_decay_concentrates_lowest_level():
    params = LiouvParams(3, 4, p=1.0)
    ss = ed.steady_state(params)
    pops = ed.level_populations(params, ss.rho).real
    assert np.abs(pops - np.array([4.0, 0.0, 0.0])).max() <= 1e-9


def test_gap_symmetric_under_pump_reversal():
    base = dict(eps=(-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0)
    g_plus = ed.dissipative_gap(LiouvParams(3, 4, p=0.5, **base))
    g_minus = ed.dissipative_gap(LiouvParams(3, 4, p=-0.5, **base))
    assert abs(g_plus.gap - g_minus.gap) <= 1e-9
    assert g_plus.gap > 0


def test_p0_bands_small():
    params = LiouvParams(3, 3, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.0)
    rep = ed.p0_band_check(params)
    assert rep.passed
    for row in rep.rows:
        lam = row.lam
        assert row.re_predicted == -(lam**2 + 2 * lam)
        assert row.mult_observed == row.mult_predicted == (lam + 1) ** 3
    with pytest.raises(ValidationError):
        ed.p0_band_check(LiouvParams(3, 3, p=0.1))
    with pytest.raises(ValidationError):
        ed.p0_band_check(LiouvParams(2, 3, p=0.0))


def test_evolution_limits_and_conservation():
    params = LiouvParams(3, 3, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=0.5, p=0.4)
    rho0 = ed.rho0_level(params, 2)
    n1 = ed.level_occupation_operator(params, 1)
    total = sum(ed.level_occupation_operator(params, a) for a in (1, 2, 3))
    times = np.linspace(0.0, 40.0, 9)
    vals = ed.evolve_expectation(params, rho0, n1, times)
    # t = 0 reproduces the initial expectation (all atoms on level 2)
    assert abs(vals[0]) <= 1e-10
    # late times approach the steady-state populations
    ss = ed.steady_state(params)
    pops = ed.level_populations(params, ss.rho)
    assert abs(vals[-1] - pops[0]) <= 1e-8
    cons = ed.evolve_expectation(params, rho0, total, times)
    assert np.abs(cons - params.n_atoms).max() <= 1e-9
    with pytest.raises(ValidationError):
        ed.evolve_expectation(params, rho0[:-1], n1, times)
    with pytest.raises(ValidationError):
        ed.evolve_expectation(params, rho0, n1[:-1, :], times)


def test_initial_states():
    params = LiouvParams(3, 2)
    mixed = ed.rho0_mixed(params)
    D = 6
    assert abs(mixed.sum() - 1.0) <= 1e-12
    assert np.count_nonzero(mixed) == D
    with pytest.raises(ValidationError):
        ed.rho0_level(params, 0)
    with pytest.raises(ValidationError):
        ed.level_occupation_operator(params, 4)


def test_spectra_csv_rows_shapes():
    spectra = ed.spectra_by_sector(PARAMS_N3, eigenvectors=True)
    header, rows = ed.spectra_csv_rows(spectra)
    assert header == ["sector_s1", "sector_s2", "sector_s3", "re", "im", "method", "residual"]
    total = sum(len(r.eigenvalues) for r in spectra)
    assert len(rows) == total
    D = len(enumerate_basis(PARAMS_N3.n_atoms, SectorLabel((0, 0, 0))))
    assert all(isinstance(r[-1], float) for r in rows)
    plain = ed.spectra_by_sector(PARAMS_N3, sectors=[SectorLabel((0, 0, 0))])
    _, rows2 = ed.spectra_csv_rows(plain)
    assert all(r[-1] == "" for r in rows2)
    assert len(rows2) == D


def test_coo_text_round_trip():
    mat = ed.build_sector_matrix(PARAMS_N3, (1, -1, 0))
    text = ed.matrix_to_coo_text(mat)
    lines = text.strip().splitlines()
    assert lines[0].startswith(f"# coo dim={mat.dim} nnz=")
    rebuilt = np.zeros((mat.dim, mat.dim), dtype=complex)
    for ln in lines[1:]:
        r, c, re, im = ln.split()
        rebuilt[int(r), int(c)] = float(re) + 1j * float(im)
    assert np.abs(rebuilt - mat.toarray()).max() == 0.0


def test_memory_budget_errors():
    with pytest.raises(ResourceLimitError):
        ed.build_oracle_matrix(LiouvParams(3, 3), budget=100)
    with pytest.raises(ResourceLimitError):
        ed.build_sector_matrix(PARAMS_N3, (0, 0, 0), budget=4)
    with pytest.raises(ValidationError):
        ed.build_sector_matrix(LiouvParams(4, 1), (1, 1, -1, -1))


def test_su3_wrapper_guards_level_count():
    out = ed.build_sector_matrix_su3(PARAMS_N3, (0, 0, 0))
    assert out.dim == 6
    with pytest.raises(ValidationError):
        ed.build_sector_matrix_su3(PARAMS_N2, (0, 0))

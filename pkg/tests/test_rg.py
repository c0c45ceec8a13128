"""Nonlinear spectral equations: forms, solver, continuation and search."""

import cmath
import dataclasses

import numpy as np
import pytest

from liouvrg import ed, rg
from liouvrg.model import (
    LiouvParams,
    NumericError,
    SectorLabel,
    SingularityError,
    ValidationError,
    spectral_counts,
)

PARAMS_L1 = LiouvParams(3, 1, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)


def test_mapping_constants():
    mc = rg.RGMappingConstants.from_params(PARAMS_L1)
    assert abs(cmath.cos(mc.z) / cmath.sin(mc.z) - 1j / 0.5) <= 1e-14
    assert abs(mc.g - 0.5 * np.sqrt(1 - 0.25)) <= 1e-15
    assert mc.chi == (-2j, 0j, 2j)
    for bad_p in (0.0, 1.0, -1.0):
        with pytest.raises(ValidationError):
            rg.RGMappingConstants.from_params(LiouvParams(3, 2, p=bad_p))


def test_root_scale():
    assert rg.root_scale(0.5) == 2.0
    assert rg.root_scale(-0.1) == 10.0
    assert rg.root_scale(2.0) == 1.0


def test_su2_trig_matches_rational_form():
    params = LiouvParams(2, 3, (0.15, -0.15), gamma=1.0, gamma0=0.4, p=0.5)
    sector = SectorLabel((1, -1))
    rng = np.random.default_rng(0)
    c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    rational = rg.residual_su2(c, 3, sector, 0.5)
    trig = rg.residual_sun_general([rg.angles_from_cot(c)], params, sector)[0]
    assert np.abs(trig - (1.0 + c**2) * rational).max() <= 1e-12


def test_su3_trig_matches_rational_form():
    params = LiouvParams(3, 2, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)
    sector = SectorLabel((1, -1, 0))
    m1, m2 = spectral_counts(2, sector)
    rng = np.random.default_rng(1)
    e = rng.standard_normal(m1) + 1j * rng.standard_normal(m1)
    w = rng.standard_normal(m2) + 1j * rng.standard_normal(m2)
    rational = rg.residual_su3(e, w, 2, sector, 0.5)
    trig = rg.residual_sun_general(
        [rg.angles_from_cot(e), rg.angles_from_cot(w)], params, sector
    )
    assert np.abs(trig[0] - (1.0 + e**2) * rational[:m1]).max() <= 1e-12
    assert np.abs(trig[1] - (1.0 + w**2) * rational[m1:]).max() <= 1e-12


def test_residual_input_validation():
    with pytest.raises(ValidationError):
        rg.residual_su2([0.5], 3, (1, -1), 0.5)  # wrong count
    with pytest.raises(ValidationError):
        rg.residual_su2([0.5, 0.7], 3, (1, -1, 0), 0.5)  # not two-level
    with pytest.raises(ValidationError):
        rg.residual_su3([0.5], [0.7], 1, (0, 0, 0), 0.0)  # p = 0
    with pytest.raises(SingularityError):
        rg.residual_su2([0.5, 0.5 + 1e-15], 3, (1, -1), 0.5)  # collision
    with pytest.raises(ValidationError):
        rg.residual_sun_general([[0.5]], LiouvParams(3, 1, p=0.5), (0, 0, 0))


def test_four_level_trig_form_evaluates():
    params = LiouvParams(4, 2, (0.1, 0.0, -0.1, 0.2), gamma=1.0, p=0.4)
    sector = SectorLabel((1, 0, 0, -1))
    counts = spectral_counts(2, sector)
    rng = np.random.default_rng(2)
    groups = [
        rg.angles_from_cot(rng.standard_normal(m) + 1j * rng.standard_normal(m))
        for m in counts
    ]
    out = rg.residual_sun_general(groups, params, sector)
    assert [g.size for g in out] == list(counts)
    assert all(np.all(np.isfinite(g)) for g in out)


@pytest.mark.parametrize("seed", [3, 4])
def test_su2_jacobian_matches_finite_differences(seed):
    L, sector, p = 4, SectorLabel((2, -2)), 0.4
    (m1,) = spectral_counts(L, sector)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(m1) + 1j * rng.standard_normal(m1)
    jac = rg.jacobian_su2(c, L, sector, p)
    h = 1e-7
    for j in range(m1):
        dc = np.zeros(m1, dtype=complex)
        dc[j] = h
        fd = (rg.residual_su2(c + dc, L, sector, p) - rg.residual_su2(c - dc, L, sector, p)) / (2 * h)
        assert np.abs(fd - jac[:, j]).max() <= 1e-6 * max(1.0, np.abs(jac[:, j]).max())


@pytest.mark.parametrize("seed", [5, 6])
def test_su3_jacobian_matches_finite_differences(seed):
    L, sector, p = 3, SectorLabel((1, 0, -1)), 0.5
    m1, m2 = spectral_counts(L, sector)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(m1) + 1j * rng.standard_normal(m1)
    w = rng.standard_normal(m2) + 1j * rng.standard_normal(m2)
    jac = rg.jacobian_su3(e, w, L, sector, p)
    h = 1e-7
    for j in range(m1 + m2):
        de = np.zeros(m1, dtype=complex)
        dw = np.zeros(m2, dtype=complex)
        if j < m1:
            de[j] = h
        else:
            dw[j - m1] = h
        fd = (
            rg.residual_su3(e + de, w + dw, L, sector, p)
            - rg.residual_su3(e - de, w - dw, L, sector, p)
        ) / (2 * h)
        assert np.abs(fd - jac[:, j]).max() <= 1e-6 * max(1.0, np.abs(jac[:, j]).max())


def test_angles_from_cot_roundtrip():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    E = rg.angles_from_cot(x)
    assert np.abs(np.cos(E) / np.sin(E) - x).max() <= 1e-12


def test_admissible_pole_clusters_frozen():
    assert rg.admissible_pole_clusters(2, (0, 0, 0)) == {
        -1: [(0, 1), (1, 0), (1, 2), (2, 1), (2, 2)],
        1: [],
    }
    # passes the scalar test yet hosts no actual solution: screened later
    assert rg.admissible_pole_clusters(2, (-1, 2, -1)) == {-1: [(3, 1)], 1: []}
    # two-level single-family rule k = 1 - Q at charge Q = s1 = -1
    assert rg.admissible_pole_clusters(2, (-1, 1)) == {-1: [(2,)], 1: []}


def test_solve_recovers_frozen_small_spectrum():
    sec = SectorLabel((0, 0, 0))
    frozen = [((-3j,), (-1j,), -3.5), ((-1j,), (5j,), -2.5), ((4j,), (2.5j,), 0.0)]
    ed_vals = np.sort_complex(
        ed.full_spectrum(ed.build_sector_matrix(PARAMS_L1, sec)).eigenvalues
    )
    assert np.abs(ed_vals - np.array([-3.5, -2.5, 0.0])).max() <= 1e-12
    for e, w, lam in frozen:
        sol = rg.solve(rg.SpectralSolution(sec, e, w), PARAMS_L1)
        assert sol.converged
        assert sol.residual_norm <= 1e-10
        assert abs(sol.eigenvalue - lam) <= 1e-10
        assert np.abs(rg.cleared_residual(sol, PARAMS_L1)).max() <= 1e-10


def test_pure_infinity_root_state():
    # with no finite roots the single scalar row forces p = L/2 exactly
    sec = SectorLabel((1, -1, 0))
    assert spectral_counts(1, sec) == (0, 1)
    sol = rg.solve(rg.SpectralSolution(sec, (), (), w_inf=1), PARAMS_L1)
    assert sol.converged and sol.residual_norm == 0.0
    ed_val = ed.full_spectrum(ed.build_sector_matrix(PARAMS_L1, sec)).eigenvalues
    assert abs(sol.eigenvalue - ed_val[0]) <= 1e-12
    assert sol.to_dict()["w_at_infinity"] == 1


def test_solve_input_validation():
    sec = SectorLabel((0, 0, 0))
    with pytest.raises(ValidationError):
        rg.solve(rg.SpectralSolution(sec, (1j,), ()), PARAMS_L1)  # missing w root
    with pytest.raises(ValidationError):
        rg.solve(rg.SpectralSolution(sec, (1j,), (2j,), w_inf=2), PARAMS_L1)
    with pytest.raises(ValidationError):
        rg.solve(
            rg.SpectralSolution(SectorLabel((1, -1)), (1.0, 2.0), (), w_inf=1),
            LiouvParams(2, 2, p=0.5),
        )
    with pytest.raises(ValidationError):
        rg.solve(rg.SpectralSolution(sec, (1j,), (2j,)), LiouvParams(3, 1, p=0.0))
    with pytest.raises(SingularityError):
        rg.solve(rg.SpectralSolution(sec, (1.0 + 1j,), (1.0 + 1j,)), PARAMS_L1)
    with pytest.raises(SingularityError):
        rg.solve(rg.SpectralSolution(sec, (1e9,), (2j,)), PARAMS_L1)


def test_eigenvalue_pole_guard():
    sol = rg.SpectralSolution(SectorLabel((0, 0, 0)), (1.0,), (1j / 0.5,))
    with pytest.raises(SingularityError):
        rg.eigenvalue_from_solution(sol, PARAMS_L1)


def test_l_constant_frozen():
    params = LiouvParams(3, 2, (0.3, -0.1, -0.2), gamma=1.0, gamma0=0.7, p=0.5)
    assert abs(rg.l_constant(params, (1, -1, 0)) - (-7.7 - 0.4j)) <= 1e-14


def test_steady_state_guess_geometry():
    L, p = 12, 0.25
    guess = rg.init_steady_state_guess(L, p)
    center = 1j / p
    r = abs(1.0 - 1.0 / p)
    e = np.asarray(guess.e)
    w = np.asarray(guess.w)
    # paired radii multiply back to the ring radius exactly
    assert np.abs(np.abs(e - center) * np.abs(w - center) - r * r).max() <= 1e-9
    # angles of paired roots are aligned
    assert np.abs(np.angle((e - center) / (w - center))).max() <= 1e-12
    for bad in (0.0, 1.0, -1.5):
        with pytest.raises(ValidationError):
            rg.init_steady_state_guess(L, bad)


def test_steady_state_solution_ring():
    params = LiouvParams(3, 10, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.25)
    sol = rg.steady_state_solution(params)
    assert sol.converged
    assert abs(sol.eigenvalue) <= 1e-8 * params.gamma * params.n_atoms**2
    center = 1j / params.p
    r = abs(1.0 - 1.0 / params.p)
    radii = np.concatenate(
        [np.abs(np.asarray(sol.e) - center), np.abs(np.asarray(sol.w) - center)]
    )
    geo = np.exp(np.mean(np.log(radii)))
    assert abs(geo - r) <= 0.05 * r
    # certification against the exact kernel
    ss = ed.steady_state(params)
    assert abs(sol.eigenvalue - ss.eigenvalue) <= 1e-8 * params.gamma * params.n_atoms**2


def test_depleted_ring_guesses_structure():
    assert rg.depleted_ring_guesses(4, 0.0, (1, -1, 0)) == []
    assert rg.depleted_ring_guesses(4, 0.5, (-1, 1, 0)) == []  # M_1 = L + 1 roots
    guesses = rg.depleted_ring_guesses(6, 0.5, (1, -1, 0))
    assert len(guesses) == 3
    for g in guesses:
        assert (len(g.e), len(g.w)) == spectral_counts(6, (1, -1, 0))
    full = rg.depleted_ring_guesses(6, 0.5, (0, 0, 0))
    assert len(full) == 1 and len(full[0].e) == 6


def test_gap_state_matches_exact_diagonalization():
    params = LiouvParams(3, 6, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.5)
    sec = SectorLabel((1, -1, 0))
    sol = rg.gap_state_solution(params, sec)
    assert sol.converged
    vals = ed.full_spectrum(ed.build_sector_matrix(params, sec)).eigenvalues
    dev = np.abs(vals - sol.eigenvalue).min()
    assert dev <= 1e-8
    # the tracked branch is the slowest decaying state of the sector
    assert abs(vals.real.max() - sol.eigenvalue.real) <= 1e-8
    with pytest.raises(NumericError):
        rg.gap_state_solution(params, (-1, 1, 0))


def test_parameter_continuation_tracks_steady_state():
    base = LiouvParams(3, 6, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.25)
    sol = rg.steady_state_solution(base)
    target = dataclasses.replace(base, p=0.1)
    tracked = rg.continuation(sol, base, target_params=target)
    assert tracked.converged
    assert abs(tracked.eigenvalue) <= 1e-8 * base.gamma * base.n_atoms**2
    with pytest.raises(ValidationError):
        rg.continuation(sol, base)
    with pytest.raises(ValidationError):
        rg.continuation(sol, base, target_params=target, target_L=8)
    with pytest.raises(ValidationError):
        rg.continuation(sol, base, target_params=dataclasses.replace(base, n_atoms=8))
    # the mapping degenerates at p = 0; tracking across it must refuse
    with pytest.raises(ValidationError):
        rg.continuation(sol, base, target_params=dataclasses.replace(base, p=-0.25))


def test_size_continuation_tracks_decay_branch():
    params4 = LiouvParams(3, 4, (-1.0, 0.0, 1.0), gamma=1.0, gamma0=1.0, p=0.5)
    sec = SectorLabel((1, -1, 0))
    sol4 = rg.gap_state_solution(params4, sec)
    sol6 = rg.continuation(sol4, params4, target_L=6)
    assert sol6.converged
    direct = rg.gap_state_solution(dataclasses.replace(params4, n_atoms=6), sec)
    assert abs(sol6.eigenvalue - direct.eigenvalue) <= 1e-8
    same = rg.continuation(sol4, params4, target_L=4)
    assert same is sol4


def test_random_guess_determinism_and_parking():
    params = LiouvParams(3, 3, p=0.5)
    sec = SectorLabel((0, 0, 0))
    a = rg.random_guess(params, sec, np.random.default_rng(11), style="circle")
    b = rg.random_guess(params, sec, np.random.default_rng(11), style="circle")
    assert a.e == b.e and a.w == b.w
    park = {"minus": (1, 2), "plus": (0, 0), "inf": 1}
    g = rg.random_guess(params, sec, np.random.default_rng(11), park=park)
    assert g.w_inf == 1
    assert sum(1 for v in g.e if v == -1j) == 1
    assert sum(1 for v in g.w if v == -1j) == 2
    with pytest.raises(ValidationError):
        rg.random_guess(
            params, sec, np.random.default_rng(11), park={"minus": (4, 0), "plus": (0, 0), "inf": 0}
        )


def test_park_options_ordering():
    opts = rg.park_options(2, (0, 0, 0))
    assert opts[0] == {"minus": (0, 0), "plus": (0, 0), "inf": 0}
    fixed = [sum(o["minus"]) + sum(o["plus"]) + o["inf"] for o in opts]
    assert fixed == sorted(fixed)
    assert all(set(o) == {"minus", "plus", "inf"} for o in opts)


def test_solution_signature_ignores_root_order():
    sec = SectorLabel((0, 0, 0))
    a = rg.SpectralSolution(sec, (1.0 + 2j, 3.0), (0.5j,))
    b = rg.SpectralSolution(sec, (3.0, 1.0 + 2j), (0.5j,))
    assert rg.solution_signature(a) == rg.solution_signature(b)
    c = rg.SpectralSolution(sec, (3.0, 1.0 + 2j), (0.5j,), w_inf=1)
    assert rg.solution_signature(a) != rg.solution_signature(c)


def test_multistart_census_smallest_size():
    rng = np.random.default_rng(3)
    from liouvrg.model import enumerate_sectors

    for sec in enumerate_sectors(PARAMS_L1):
        vals = ed.full_spectrum(ed.build_sector_matrix(PARAMS_L1, sec)).eigenvalues
        found, unmatched = rg.find_sector_solutions(
            PARAMS_L1, sec, vals, rng, tries=200
        )
        assert unmatched == []
        for idx, sol in found.items():
            assert abs(sol.eigenvalue - vals[idx]) <= 1e-7 * PARAMS_L1.gamma * 4


def test_su2_spin_model_relation():
    params = LiouvParams(2, 3, (0.6, -0.6), gamma=1.0, gamma0=0.3, p=0.4)
    passed, worst, rows = rg.su2_rp_relation_check(params)
    assert passed
    assert worst <= 1e-9 * (params.gamma * 12 + 1.2 * 3 + 0.3 * 9)
    assert len(rows) == 2 * params.n_atoms + 1
    with pytest.raises(ValidationError):
        rg.su2_rp_relation_check(PARAMS_L1)


def test_solution_serialization():
    sec = SectorLabel((1, -1, 0))
    sol = rg.SpectralSolution(sec, (1.0 + 2j,), (3.0 - 1j,), 1e-12, -2.5 + 0j, PARAMS_L1, True, 4, w_inf=1)
    d = sol.to_dict()
    assert d["sector"] == [1, -1, 0]
    assert d["w_at_infinity"] == 1
    assert d["eigenvalue"] == {"re": -2.5, "im": 0.0}
    assert d["params"]["n_atoms"] == 1
    rows = rg.solutions_to_csv_rows(sol)
    assert rows[0] == (1.0, 2.0, "e")
    assert rows[1] == (3.0, -1.0, "w")
    assert rows[2][2] == "w_inf" and np.isinf(rows[2][0])

"""Trigonometric Richardson-Gaudin equations for the collective Liouvillian.

Every weak-symmetry block is integrable: its eigenvalues follow from coupled
nonlinear equations for M_1 + ... + M_{N-1} complex spectral parameters,
with M_a = L - (s_1 + ... + s_a).  This module evaluates those equations in
three equivalent forms and solves them:

* the trigonometric form in angle variables E (residual_sun_general), valid
  for any N;
* the rational form in x = cot E for N = 2 and N = 3 (residual_su2,
  residual_su3), with charges at +-i and a strength-L charge at i/p;
* a cleared form, the trigonometric equations rewritten in the rational
  variables, T_i = (1 + x_i^2) R_i expanded so that the +-i poles cancel.

The solver iterates damped Newton steps on the cleared form.  That matters
because physical solutions may place roots exactly on the charge poles: a
single root sits at -i whenever its family charge Q_- vanishes, and a
cluster of k roots collapses onto -i exactly when Q_- = -(k - 1) (same at +i
with Q_+).  Such parked roots satisfy their equations identically and are
held fixed while Newton moves the remaining free roots; they still interact
with the free roots and still enter the eigenvalue formula.
"""

import cmath
import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    LiouvParams,
    NumericError,
    SectorLabel,
    SingularityError,
    ValidationError,
    as_sector,
    effective_charges,
    spectral_counts,
)


@dataclass(frozen=True)
class RGMappingConstants:
    """Constants tying the model rates to the integrable structure.

    z and g satisfy 2 g e^{iz} = -Gamma (1 + p) and 2 g e^{-iz} = -Gamma (1 - p),
    hence cot z = i/p and g = Gamma sqrt(1 - p^2) / 2.  chi_a = i (2a - N - 1)
    are the diagonal coefficients of the conserved integrals.
    """

    z: complex
    g: float
    chi: tuple

    @classmethod
    def from_params(cls, params):
        p, gamma, N = params.p, params.gamma, params.n_levels
        if p == 0.0 or abs(p) >= 1.0:
            raise ValidationError(
                f"mapping constants need 0 < |p| < 1, got p = {p}; "
                "use exact diagonalization at the boundary values"
            )
        z = math.pi - 1j * math.atanh(p)
        g = 0.5 * gamma * math.sqrt(1.0 - p * p)
        chi = tuple(1j * (2 * (a + 1) - N - 1) for a in range(N))
        return cls(z, g, chi)


@dataclass
class SpectralSolution:
    """Roots of the equations in one sector, with certification data.

    e holds the first-family roots (the only family for N = 2), w the finite
    second-family roots for N = 3.  w_inf counts second-family roots at
    infinity (zero angle), which satisfy one extra scalar equation and enter
    the eigenvalue through the finite limit of the root map.  residual_norm
    is the infinity norm of the cleared-form residual over the free roots;
    parked pole roots satisfy their equations exactly and contribute zero.
    """

    sector: SectorLabel
    e: tuple
    w: tuple = ()
    residual_norm: float = np.inf
    eigenvalue: complex = None
    params: LiouvParams = None
    converged: bool = False
    iterations: int = 0
    w_inf: int = 0

    def roots(self):
        return np.concatenate(
            [np.asarray(self.e, dtype=complex), np.asarray(self.w, dtype=complex)]
        )

    def to_dict(self):
        return {
            "sector": list(self.sector.s),
            "e": [{"re": v.real, "im": v.imag} for v in map(complex, self.e)],
            "w": [{"re": v.real, "im": v.imag} for v in map(complex, self.w)],
            "w_at_infinity": int(self.w_inf),
            "residual": float(self.residual_norm),
            "eigenvalue": None
            if self.eigenvalue is None
            else {"re": complex(self.eigenvalue).real, "im": complex(self.eigenvalue).imag},
            "params": None if self.params is None else self.params.to_dict(),
        }


def root_scale(p):
    """Characteristic root magnitude max(1, 1/|p|); tolerances scale with it."""
    return max(1.0, 1.0 / abs(p)) if p != 0 else 1.0


def _check_collisions(points, tol, what="spectral parameters"):
    pts = np.asarray(points)
    n = pts.size
    if n < 2:
        return
    diff = np.abs(pts[:, None] - pts[None, :])
    diff[np.diag_indices(n)] = np.inf
    i, j = np.unravel_index(np.argmin(diff), diff.shape)
    if diff[i, j] < tol:
        raise SingularityError(
            f"{what} {i} and {j} collide: "
            f"|({pts[i]:.6g}) - ({pts[j]:.6g})| = {diff[i, j]:.3g} < {tol:.3g}"
        )


def _inv_offdiag(x):
    """Matrix 1/(x_i - x_k) with a zero diagonal."""
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    inv = 1.0 / d
    np.fill_diagonal(inv, 0.0)
    return inv


def _pair_sum(x, weight=2.0):
    """(weight * sum_{k != i} 1/(x_i - x_k), weight * sum_{k != i} 1/(x_i - x_k)^2)."""
    n = x.size
    if n < 2:
        return np.zeros(n, dtype=complex), np.zeros(n, dtype=complex)
    inv = _inv_offdiag(x)
    return weight * inv.sum(axis=1), weight * (inv**2).sum(axis=1)


def _cross_sum(x, y):
    """(sum_j 1/(x_i - y_j), sum_j 1/(x_i - y_j)^2) against another root set."""
    if y.size == 0:
        z = np.zeros(x.size, dtype=complex)
        return z, z.copy()
    inv = 1.0 / (x[:, None] - y[None, :])
    return inv.sum(axis=1), (inv**2).sum(axis=1)


def _charge_term(x, pole, coef):
    """coef/(x - pole), identically zero (not 0 * inf) when the charge vanishes."""
    if coef == 0:
        return np.zeros(np.shape(x), dtype=complex)
    return coef / (x - pole)


def residual_su2(c, L, sector, p, collision_tol=None):
    """Rational N = 2 equations at roots c; zero at a solution.

    R_i = sum_{k != i} 2/(c_i - c_k) - L/(c_i - i/p)
          + (2 + s_1)/(c_i - i) + s_1/(c_i + i).
    """
    sector = as_sector(sector)
    if len(sector) != 2:
        raise ValidationError(f"expected a two-level sector, got {sector.s}")
    if p == 0.0:
        raise ValidationError("the rational equations need p != 0")
    c = np.asarray(c, dtype=complex)
    (m1,) = spectral_counts(L, sector)
    if c.size != m1:
        raise ValidationError(f"expected {m1} roots for sector {sector.s}, got {c.size}")
    tol = (1e-12 * root_scale(p)) if collision_tol is None else collision_tol
    _check_collisions(c, tol)
    s1 = sector[0]
    pair, _ = _pair_sum(c)
    return pair - L / (c - 1j / p) + _charge_term(c, 1j, 2.0 + s1) + _charge_term(c, -1j, s1)


def jacobian_su2(c, L, sector, p):
    """Analytic Jacobian of residual_su2 with respect to the roots."""
    sector = as_sector(sector)
    c = np.asarray(c, dtype=complex)
    s1 = sector[0]
    n = c.size
    jac = np.zeros((n, n), dtype=complex)
    if n > 1:
        inv2 = _inv_offdiag(c) ** 2
        jac += 2.0 * inv2
        jac[np.diag_indices(n)] = -2.0 * inv2.sum(axis=1)
    diag = L / (c - 1j / p) ** 2 - (2.0 + s1) / (c - 1j) ** 2 - s1 / (c + 1j) ** 2
    jac[np.diag_indices(n)] += diag
    return jac


def residual_su3(e, w, L, sector, p, collision_tol=None):
    """Rational N = 3 equations; returns the stacked (e-block, w-block) residual.

    e-block:  sum_{k != i} 2/(e_i - e_k) - sum_j 1/(e_i - w_j)
              + Qp_e/(e_i - i) + Qm_e/(e_i + i)
    w-block:  sum_{k != j} 2/(w_j - w_k) - sum_i 1/(w_j - e_i)
              - L/(w_j - i/p) + Qp_w/(w_j - i) + Qm_w/(w_j + i)

    with (Qp_e, Qm_e, Qp_w, Qm_w) = effective_charges(sector).
    """
    sector = as_sector(sector)
    if len(sector) != 3:
        raise ValidationError(f"expected a three-level sector, got {sector.s}")
    if p == 0.0:
        raise ValidationError("the rational equations need p != 0")
    e = np.asarray(e, dtype=complex)
    w = np.asarray(w, dtype=complex)
    m1, m2 = spectral_counts(L, sector)
    if e.size != m1 or w.size != m2:
        raise ValidationError(
            f"expected {m1} e-roots and {m2} w-roots for sector {sector.s}, "
            f"got {e.size} and {w.size}"
        )
    tol = (1e-12 * root_scale(p)) if collision_tol is None else collision_tol
    _check_collisions(np.concatenate([e, w]), tol)
    qpe, qme, qpw, qmw = effective_charges(sector)
    pair_e, _ = _pair_sum(e)
    cross_e, _ = _cross_sum(e, w)
    re = pair_e - cross_e + _charge_term(e, 1j, qpe) + _charge_term(e, -1j, qme)
    pair_w, _ = _pair_sum(w)
    cross_w, _ = _cross_sum(w, e)
    rw = (
        pair_w
        - cross_w
        - L / (w - 1j / p)
        + _charge_term(w, 1j, qpw)
        + _charge_term(w, -1j, qmw)
    )
    return np.concatenate([re, rw])


def jacobian_su3(e, w, L, sector, p):
    """Analytic Jacobian of residual_su3, row and column order (e block, w block)."""
    sector = as_sector(sector)
    e = np.asarray(e, dtype=complex)
    w = np.asarray(w, dtype=complex)
    qpe, qme, qpw, qmw = effective_charges(sector)
    m1, m2 = e.size, w.size
    n = m1 + m2
    jac = np.zeros((n, n), dtype=complex)
    ie = np.arange(m1)
    iw = m1 + np.arange(m2)
    if m1 > 1:
        inv2 = _inv_offdiag(e) ** 2
        jac[:m1, :m1] += 2.0 * inv2
        jac[ie, ie] -= 2.0 * inv2.sum(axis=1)
    if m2 > 1:
        inv2 = _inv_offdiag(w) ** 2
        jac[m1:, m1:] += 2.0 * inv2
        jac[iw, iw] -= 2.0 * inv2.sum(axis=1)
    if m1 and m2:
        inv2 = 1.0 / (e[:, None] - w[None, :]) ** 2
        jac[:m1, m1:] -= inv2
        jac[ie, ie] += inv2.sum(axis=1)
        inv2 = 1.0 / (w[:, None] - e[None, :]) ** 2
        jac[m1:, :m1] -= inv2
        jac[iw, iw] += inv2.sum(axis=1)
    jac[ie, ie] += -qpe / (e - 1j) ** 2 - qme / (e + 1j) ** 2
    jac[iw, iw] += L / (w - 1j / p) ** 2 - qpw / (w - 1j) ** 2 - qmw / (w + 1j) ** 2
    return jac


def residual_sun_general(E_groups, params, sector):
    """Trigonometric equations for general N, in angle variables.

    E_groups is a list of N-1 arrays of angles E_i^(a).  With the tridiagonal
    coupling matrix A (2 on its diagonal, -1 next to it), the residual of
    root i in group a is

        sum_{b, i'} A_ab cot(E_i'^(b) - E_i^(a))
        + [a = 1] L cot(E_i^(a)) - [a = N-1] L cot(z - E_i^(a)) + 2i,

    zero at a solution.  For N = 2 the single group carries both L terms.
    Equals the cleared rational form evaluated at x = cot E.
    """
    sector = as_sector(sector)
    N, L = params.n_levels, params.n_atoms
    if len(sector) != N:
        raise ValidationError(f"sector has {len(sector)} entries, expected {N}")
    counts = spectral_counts(L, sector)
    groups = [np.asarray(g, dtype=complex) for g in E_groups]
    if len(groups) != N - 1:
        raise ValidationError(f"expected {N - 1} root groups, got {len(groups)}")
    for a, (g, m) in enumerate(zip(groups, counts)):
        if g.size != m:
            raise ValidationError(f"group {a + 1} must hold {m} roots, got {g.size}")
    z = RGMappingConstants.from_params(params).z

    def cot(u):
        return np.cos(u) / np.sin(u)

    out = []
    for a, ga in enumerate(groups):
        res = np.full(ga.shape, 2j, dtype=complex)
        if ga.size == 0:
            out.append(res)
            continue
        for b, gb in enumerate(groups):
            if abs(a - b) > 1 or gb.size == 0:
                continue
            coef = 2.0 if a == b else -1.0
            d = gb[None, :] - ga[:, None]
            if a == b:
                np.fill_diagonal(d, 1.0)
            term = cot(d)
            if a == b:
                np.fill_diagonal(term, 0.0)
            res = res + coef * term.sum(axis=1)
        if a == 0:
            res = res + L * cot(ga)
        if a == len(groups) - 1:
            res = res - L * cot(z - ga)
        out.append(res)
    return out


def angles_from_cot(x):
    """Angle variables E with cot E = x (principal branch)."""
    return np.arctan(1.0 / np.asarray(x, dtype=complex))


# ---------------------------------------------------------------------------
# cleared (pole-free) form and the Newton solver


def _family_setup(L, sector):
    """Root counts, linear coefficients and charges of the cleared equations."""
    sector = as_sector(sector)
    N = len(sector)
    counts = spectral_counts(L, sector)
    if N == 2:
        s1 = sector[0]
        return counts, [2.0 + 2.0 * s1], [(2.0 + s1, float(s1))]
    if N == 3:
        s1, s2, s3 = sector.s
        qpe, qme, qpw, qmw = effective_charges(sector)
        return counts, [2.0 + (s1 - s2), 2.0 + (s2 - s3)], [(qpe, qme), (qpw, qmw)]
    raise ValidationError(f"the cleared-form solver supports N = 2 or 3, got N = {N}")


def _cluster_admissible(ks, qs):
    """Exact scalar consistency test for a joint pole cluster.

    A cluster with k_a roots of family a collapsing on one pole can only
    solve the equations if the leading singular parts cancel in the sum,
    which requires

        sum_a k_a (k_a - 1) - sum_a k_a k_{a+1} + sum_a k_a Q_a = 0

    with the pole charges Q_a.  Necessary, not sufficient: spurious
    candidates are filtered downstream by residuals or target matching.
    Charges are half-integers, so the test is done on twice the expression
    in exact integer arithmetic.
    """
    twice = 0
    for a, (k, q) in enumerate(zip(ks, qs)):
        twice += 2 * k * (k - 1) + k * int(round(2 * q))
        if a + 1 < len(ks):
            twice -= 2 * k * ks[a + 1]
    return twice == 0


def admissible_pole_clusters(L, sector):
    """Admissible exact pole clusters, as {-1: [count tuples], +1: [...]}.

    Each entry is a tuple of per-family root counts sitting jointly on the
    pole (-i for key -1, +i for key +1), screened by _cluster_admissible.
    Single-family entries reduce to the size rule k = 1 - Q.
    """
    counts, _, charges = _family_setup(L, sector)
    out = {}
    for pole, pick in ((-1, 1), (1, 0)):
        qs = [ch[pick] for ch in charges]
        opts = []
        for ks in itertools.product(*(range(m + 1) for m in counts)):
            if sum(ks) == 0:
                continue
            if _cluster_admissible(ks, qs):
                opts.append(ks)
        out[pole] = opts
    return out


def _cleared_system(free, parked, L, sector, p, n_inf=0, want_jacobian=True):
    """Residual (and Jacobian) of the cleared equations at the free roots.

    free and parked are per-family lists of complex arrays; parked roots sit
    exactly on +-i, satisfy their own equations identically, and act on the
    free roots like ordinary neighbors.  n_inf last-family roots at infinity
    drop out of every finite row (their interaction terms vanish under the
    pole clearing) but add one scalar row each, the zero-angle limit of the
    trigonometric equation:

        2 sum w - sum e - L i/p + 2i = 0

    over all finite roots, so the system becomes overdetermined by n_inf.
    """
    counts, coefs, _ = _family_setup(L, sector)
    nfam = len(counts)
    all_roots = [np.concatenate([free[a], parked[a]]) for a in range(nfam)]
    sizes = [f.size for f in free]
    n = sum(sizes)
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    res = np.zeros(n + n_inf, dtype=complex)
    jac = np.zeros((n + n_inf, n), dtype=complex) if want_jacobian else None
    if n_inf:
        row = 2.0 * all_roots[-1].sum() - all_roots[0].sum() - L * 1j / p + 2j
        res[n:] = row
        if want_jacobian:
            jac[n:, offs[0] : offs[1]] = -1.0
            if nfam > 1:
                jac[n:, offs[-2] : offs[-1]] = 2.0
    for a in range(nfam):
        x = free[a]
        if x.size == 0:
            continue
        one = 1.0 + x**2
        pair, dpair = _pair_sum(x)
        cpk, dcpk = _cross_sum(x, parked[a])
        bracket = pair + 2.0 * cpk
        dbracket = -dpair - 2.0 * dcpk
        for b in range(nfam):
            if abs(a - b) != 1:
                continue
            cx, dcx = _cross_sum(x, all_roots[b])
            bracket = bracket - cx
            dbracket = dbracket + dcx
        has_l_charge = (nfam == 1) or (a == nfam - 1)
        if has_l_charge:
            inv = 1.0 / (x - 1j / p)
            bracket = bracket - L * inv
            dbracket = dbracket + L * inv**2
        res[offs[a] : offs[a + 1]] = coefs[a] * x + 2j + one * bracket
        if want_jacobian:
            ii = offs[a] + np.arange(x.size)
            jac[ii, ii] = coefs[a] + 2.0 * x * bracket + one * dbracket
            if x.size > 1:
                inv2 = _inv_offdiag(x) ** 2
                jac[offs[a] : offs[a + 1], offs[a] : offs[a + 1]] += one[:, None] * (2.0 * inv2)
            for b in range(nfam):
                if abs(a - b) != 1 or free[b].size == 0:
                    continue
                d = x[:, None] - free[b][None, :]
                jac[offs[a] : offs[a + 1], offs[b] : offs[b + 1]] += -one[:, None] / d**2
    return res, jac


def _split_families(roots, counts):
    out, pos = [], 0
    for m in counts:
        out.append(np.asarray(roots[pos : pos + m], dtype=complex))
        pos += m
    return out


def _detect_parked(families, L, sector, snap_tol):
    """Split each family into (free, parked) by snapping admissible clusters.

    Roots within snap_tol of a pole are snapped onto it only if the joint
    per-family counts sitting there pass _cluster_admissible; otherwise the
    pole is left alone and the nearby roots stay free.
    """
    counts, _, charges = _family_setup(L, sector)
    nfam = len(counts)
    free = [np.asarray(f, dtype=complex) for f in families]
    parked = [np.array([], dtype=complex) for _ in range(nfam)]
    for pole, pick in ((-1, 1), (1, 0)):
        target = 1j * pole
        near = [np.abs(f - target) < snap_tol for f in free]
        ks = tuple(int(m.sum()) for m in near)
        if sum(ks) == 0:
            continue
        qs = [ch[pick] for ch in charges]
        if not _cluster_admissible(ks, qs):
            continue
        for a in range(nfam):
            if ks[a]:
                parked[a] = np.concatenate([parked[a], np.full(ks[a], target)])
                free[a] = free[a][~near[a]]
    return free, parked


def _min_separation(free, parked, p):
    """Smallest distance among roots and to the pole i/p; parked twins excluded."""
    pole = np.array([1j / p])
    pts = np.concatenate(free + parked + [pole])
    n = pts.size
    if n < 2:
        return np.inf
    d = np.abs(pts[:, None] - pts[None, :])
    d[np.diag_indices(n)] = np.inf
    base = sum(f.size for f in free)
    flat = np.concatenate(parked) if parked else np.array([])
    for i in range(flat.size):
        for j in range(flat.size):
            if i != j and flat[i] == flat[j]:
                d[base + i, base + j] = np.inf
    return float(d.min())


def solve(initial, params, tol=None, max_iter=120, collision_tol=None, snap_tol=None,
          escape_radius=None):
    """Damped Newton iteration on the cleared equations from a given guess.

    Parameters
    ----------
    initial : SpectralSolution
        Carries the sector and the starting roots; roots lying within
        snap_tol of an admissible pole cluster are parked there exactly.
    params : LiouvParams
    tol : float
        Convergence threshold on the cleared residual infinity norm,
        default 1e-10 * L.
    collision_tol : float
        Minimum allowed separation between distinct roots (and from the
        pole at i/p), default 1e-8 * max(1, 1/|p|).
    escape_radius : float
        Largest allowed |root|, default 1e6 * max(1, 1/|p|).  Beyond that
        the cleared residual loses all absolute accuracy to rounding (its
        terms grow linearly in the root while cancelling to order one), so
        steps escaping past it are rejected rather than falsely accepted.

    Returns
    -------
    SpectralSolution with converged flag, residual norm, iteration count and
    the eigenvalue filled in on success.
    """
    sector = as_sector(initial.sector)
    N, L = params.n_levels, params.n_atoms
    if len(sector) != N:
        raise ValidationError(f"sector has {len(sector)} entries, expected {N}")
    p = params.p
    if p == 0.0 or abs(p) >= 1.0:
        raise ValidationError(f"the solver needs 0 < |p| < 1, got p = {p}")
    counts, _, _ = _family_setup(L, sector)
    scale = root_scale(p)
    tol = (1e-10 * L) if tol is None else tol
    ctol = (1e-8 * scale) if collision_tol is None else collision_tol
    stol = (1e-7 * scale) if snap_tol is None else snap_tol
    rmax = (1e6 * scale) if escape_radius is None else escape_radius
    n_inf = int(getattr(initial, "w_inf", 0))
    if n_inf and N == 2:
        raise ValidationError("two-level roots cannot sit at infinity")
    if n_inf not in (0, 1):
        raise ValidationError(
            "at most one root fits at infinity (larger zero-angle clusters "
            "have no cancellation of their singular pair terms)"
        )
    roots_all = np.concatenate(
        [np.asarray(initial.e, dtype=complex), np.asarray(initial.w, dtype=complex)]
    )
    if roots_all.size + n_inf != sum(counts):
        raise ValidationError(
            f"guess has {roots_all.size + n_inf} roots, "
            f"sector {sector.s} needs {sum(counts)}"
        )
    fin_counts = list(counts)
    fin_counts[-1] -= n_inf
    free, parked = _detect_parked(_split_families(roots_all, fin_counts), L, sector, stol)
    sizes = [f.size for f in free]
    nfree = sum(sizes)

    def unpack(vec):
        out, pos = [], 0
        for m in sizes:
            out.append(vec[pos : pos + m])
            pos += m
        return out

    def finish(fr, rnorm, ok, iters):
        fams = [np.concatenate([fr[a], parked[a]]) for a in range(len(counts))]
        e = tuple(fams[0])
        w = tuple(fams[1]) if len(fams) > 1 else ()
        sol = SpectralSolution(
            sector, e, w, float(rnorm), None, params, ok, iters, w_inf=n_inf
        )
        if ok:
            sol.eigenvalue = eigenvalue_from_solution(sol, params)
        return sol

    if nfree == 0:
        res, _ = _cleared_system(free, parked, L, sector, p, n_inf, want_jacobian=False)
        rnorm = float(np.max(np.abs(res))) if res.size else 0.0
        return finish(free, rnorm, rnorm <= tol, 0)
    x = np.concatenate(free)
    if np.max(np.abs(x)) > rmax:
        raise SingularityError("initial guess has roots beyond the escape radius")
    if _min_separation(unpack(x), parked, p) < ctol:
        raise SingularityError("initial guess has colliding roots closer than the guard")
    res, jac = _cleared_system(unpack(x), parked, L, sector, p, n_inf)
    fval = np.linalg.norm(res)
    iters = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(res)) <= tol:
            return finish(unpack(x), np.max(np.abs(res)), True, iters)
        iters = it
        if jac.shape[0] != jac.shape[1]:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        else:
            try:
                step = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        t = 1.0
        accepted = False
        for _ in range(40):
            xn = x + t * step
            if np.max(np.abs(xn)) <= rmax and _min_separation(unpack(xn), parked, p) >= ctol:
                rn, _ = _cleared_system(
                    unpack(xn), parked, L, sector, p, n_inf, want_jacobian=False
                )
                fn = np.linalg.norm(rn)
                if fn <= fval * (1.0 - 1e-4 * t) or fn <= tol:
                    x, fval = xn, fn
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            res, _ = _cleared_system(
                unpack(x), parked, L, sector, p, n_inf, want_jacobian=False
            )
            return finish(unpack(x), np.max(np.abs(res)), False, iters)
        res, jac = _cleared_system(unpack(x), parked, L, sector, p, n_inf)
    rnorm = float(np.max(np.abs(res)))
    return finish(unpack(x), rnorm, rnorm <= tol, iters)


def cleared_residual(sol, params):
    """Cleared-form residual vector of a solution's free roots (certification)."""
    sector = as_sector(sol.sector)
    L = params.n_atoms
    counts, _, _ = _family_setup(L, sector)
    n_inf = int(getattr(sol, "w_inf", 0))
    fin_counts = list(counts)
    fin_counts[-1] -= n_inf
    scale = root_scale(params.p)
    free, parked = _detect_parked(
        _split_families(sol.roots(), fin_counts), L, sector, 1e-7 * scale
    )
    res, _ = _cleared_system(
        free, parked, L, sector, params.p, n_inf, want_jacobian=False
    )
    return res


def eigenvalue_from_solution(sol, params):
    """Liouvillian eigenvalue of a root configuration.

    l = -i sum_a eps_a s_a - Gamma (L^2 + (N-1) L)
        + (Gamma - Gamma0)/2 sum_a s_a^2
        - i (L Gamma p / 2) [ sum_i x_i^(1) + sum_i (i x_i^(last) + p)/(p x_i^(last) - i) ]

    where x^(1) are the first-family roots and x^(last) the last-family ones
    (the same set for N = 2).  A last-family root at infinity contributes its
    finite limit i/p.  A root at i/p is a pole of the formula and raises
    SingularityError.
    """
    sector = as_sector(sol.sector)
    N, L = params.n_levels, params.n_atoms
    p = params.p
    first = np.asarray(sol.e, dtype=complex)
    last = np.asarray(sol.w, dtype=complex) if N > 2 else first
    if last.size and np.min(np.abs(p * last - 1j)) < 1e-12 * root_scale(p):
        raise SingularityError("a last-family root sits on the eigenvalue pole i/p")
    acc = first.sum() if first.size else 0.0
    if last.size:
        acc = acc + ((1j * last + p) / (p * last - 1j)).sum()
    acc = acc + int(getattr(sol, "w_inf", 0)) * (1j / p)
    return l_constant(params, sector) - 0.5j * L * params.gamma * p * acc


def l_constant(params, sector):
    """Root-independent part of the eigenvalue."""
    sector = as_sector(sector)
    N, L = params.n_levels, params.n_atoms
    s = np.asarray(sector.s, dtype=float)
    return (
        -1j * float(np.dot(params.eps, s))
        - params.gamma * (L**2 + (N - 1) * L)
        + 0.5 * (params.gamma - params.gamma0) * float(np.dot(s, s))
    )


# ---------------------------------------------------------------------------
# initial guesses, continuation and multi-start search


def init_steady_state_guess(L, p):
    """Structured zero-sector guess for N = 3: root rings around i/p.

    The steady-state configuration pairs each e root radially with a w root
    just outside and inside the circle of radius |1 - 1/p| centered at i/p,
    at reciprocal relative radii (L + 1)^(+-1/L) (exact for L <= 2, tight
    for all sizes), with a depletion gap facing the point +i of the circle.
    Undefined at p = 0 and |p| = 1.
    """
    if p == 0.0 or abs(p) >= 1.0:
        raise ValidationError(f"steady-state guess needs 0 < |p| < 1, got p = {p}")
    center = 1j / p
    r = abs(1.0 - 1.0 / p)
    theta_dep = cmath.phase(1j * (1.0 - 1.0 / p))
    M = L
    gap = 2.0 * math.pi / (M + 4.0)
    span = 2.0 * math.pi - 2.0 * gap
    te = theta_dep + gap + (np.arange(M) + 0.5) * span / M
    rho = (L + 1.0) ** (1.0 / L)
    e = center + rho * r * np.exp(1j * te)
    w = center + (r / rho) * np.exp(1j * te)
    return SpectralSolution(SectorLabel((0, 0, 0)), tuple(e), tuple(w))


def depleted_ring_guesses(L, p, sector):
    """Structured guesses for slow decaying states (N = 3 root patterns).

    Sectors with M_a <= L per family host long-lived states whose roots
    occupy the steady-state rings with L - M_a roots removed; the opening
    left by the removal persists in the converged configuration.  Returns
    guesses for a few removal positions, or an empty list when the pattern
    does not apply (some M_a > L, or p outside (0, 1) in magnitude).
    """
    sector = as_sector(sector)
    if len(sector.s) != 3 or p == 0.0 or abs(p) >= 1.0:
        return []
    counts = spectral_counts(L, sector)
    drops = [L - m for m in counts]
    if any(d < 0 for d in drops):
        return []
    base = init_steady_state_guess(L, p)
    fams = [np.asarray(base.e, dtype=complex), np.asarray(base.w, dtype=complex)]
    if all(d == 0 for d in drops):
        return [SpectralSolution(sector, tuple(fams[0]), tuple(fams[1]))]
    out = []
    for k in sorted({0, L // 2, L - 1}):
        kept = []
        for fam, d in zip(fams, drops):
            kept.append(np.delete(fam, np.arange(k, k + d) % L))
        out.append(SpectralSolution(sector, tuple(kept[0]), tuple(kept[1])))
    return out


def gap_state_solution(params, sector, tol=None, max_iter=200):
    """Slowest decaying state of a depleted sector from structured guesses.

    Solves from each depleted-ring guess and keeps the converged solution
    with the largest eigenvalue real part.  Raises NumericError when the
    sector does not fit the depleted-ring pattern or nothing converges;
    multi-start search remains the general route for such sectors.
    """
    sector = as_sector(sector)
    guesses = depleted_ring_guesses(params.n_atoms, params.p, sector)
    if not guesses:
        raise NumericError(
            f"sector {tuple(sector.s)} has no depleted-ring guess at "
            f"L = {params.n_atoms}, p = {params.p}"
        )
    best = None
    for g in guesses:
        try:
            sol = solve(g, params, tol=tol, max_iter=max_iter)
        except SingularityError:
            continue
        if not sol.converged:
            continue
        if best is None or sol.eigenvalue.real > best.eigenvalue.real:
            best = sol
    if best is None:
        raise NumericError(
            f"no depleted-ring guess converged in sector {tuple(sector.s)} "
            f"at L = {params.n_atoms}, p = {params.p}"
        )
    return best


def _grow_family(fam, center):
    """One extra seed root placed on the family's ring around `center`.

    Roots of low-lying states ring the charge at i/p, so the new root goes
    at the midpoint of an angular gap, at the geometric mean of the
    neighboring radii.  Depleted states keep a wide structural opening in
    the ring that must stay empty; when one gap dwarfs the rest the root is
    inserted into the second-widest gap instead.
    """
    if fam.size == 0:
        return np.array([center + 1.0])
    if fam.size == 1:
        return np.append(fam, center - (fam[0] - center))
    rel = fam - center
    ang = np.angle(rel)
    order = np.argsort(ang)
    a_sorted = ang[order]
    gaps = np.diff(np.concatenate([a_sorted, [a_sorted[0] + 2.0 * np.pi]]))
    ranked = np.argsort(gaps)[::-1]
    i = int(ranked[0])
    if fam.size >= 3 and gaps[ranked[0]] > 2.2 * gaps[ranked[1]]:
        i = int(ranked[1])
    mid = a_sorted[i] + 0.5 * gaps[i]
    r1 = abs(rel[order][i])
    r2 = abs(rel[order][(i + 1) % fam.size])
    return np.append(fam, center + math.sqrt(r1 * r2) * np.exp(1j * mid))


def steady_state_solution(params, tol=None, max_iter=200):
    """Zero-sector steady-state roots for the three-level model.

    Solves from the structured ring guess; if that stalls or lands on a
    decay state, re-anchors at p = +-0.5 (where the ring guess is reliable
    at all sizes) and tracks the solution back to the requested p by
    parameter continuation.  Raises NumericError when both routes fail.
    """
    if params.n_levels != 3:
        raise ValidationError("the structured steady-state route is three-level")
    L, p = params.n_atoms, params.p
    atol = 1e-8 * params.gamma * max(1.0, float(L))

    def is_ss(sol):
        return sol.converged and sol.eigenvalue is not None and abs(sol.eigenvalue) < atol

    sol = solve(init_steady_state_guess(L, p), params, tol=tol, max_iter=max_iter)
    if is_ss(sol):
        return sol
    anchor_p = math.copysign(0.5, p)
    if anchor_p != p:
        anchor = dataclasses.replace(params, p=anchor_p)
        seed = solve(init_steady_state_guess(L, anchor_p), anchor, tol=tol, max_iter=max_iter)
        if is_ss(seed):
            tracked = continuation(seed, anchor, target_params=params, tol=tol,
                                   max_iter=max_iter)
            if is_ss(tracked):
                return tracked
    raise NumericError(
        f"steady-state solve failed at L = {L}, p = {p} "
        f"(residual {sol.residual_norm:.3g})"
    )


def continuation(from_solution, params, target_params=None, target_L=None, steps=10,
                 tol=None, max_iter=120):
    """Track a solution to new parameters or a new system size.

    Parameter continuation interpolates linearly between params and
    target_params in `steps` increments, halving the increment on failure
    (down to 2^-8 of it).  Size continuation changes L one atom at a time,
    seeding each family's new root near its outermost existing one and
    re-solving.  Returns the final SpectralSolution.
    """
    if (target_params is None) == (target_L is None):
        raise ValidationError("give exactly one of target_params or target_L")
    sol = from_solution
    if target_params is not None:
        if (
            target_params.n_levels != params.n_levels
            or target_params.n_atoms != params.n_atoms
        ):
            raise ValidationError("parameter continuation cannot change N or L")

        def mix(t):
            return LiouvParams(
                params.n_levels,
                params.n_atoms,
                tuple((1 - t) * a + t * b for a, b in zip(params.eps, target_params.eps)),
                (1 - t) * params.gamma + t * target_params.gamma,
                (1 - t) * params.gamma0 + t * target_params.gamma0,
                (1 - t) * params.p + t * target_params.p,
            )

        t, dt = 0.0, 1.0 / steps
        while t < 1.0 - 1e-12:
            tn = min(1.0, t + dt)
            attempt = solve(sol, mix(tn), tol=tol, max_iter=max_iter)
            if attempt.converged:
                sol, t = attempt, tn
                dt = min(1.0 / steps, dt * 2.0)
            else:
                dt *= 0.5
                if dt < 1.0 / (steps * 2**8):
                    raise NumericError(
                        f"parameter continuation stalled at t = {t:.4f} "
                        f"(residual {attempt.residual_norm:.3g})"
                    )
        return sol
    L0 = params.n_atoms
    if target_L == L0:
        return sol
    stepdir = 1 if target_L > L0 else -1
    for L in range(L0 + stepdir, target_L + stepdir, stepdir):
        nxt = LiouvParams(
            params.n_levels, L, params.eps, params.gamma, params.gamma0, params.p
        )
        counts = list(spectral_counts(L, sol.sector))
        counts[-1] -= int(getattr(sol, "w_inf", 0))
        fams = [np.asarray(sol.e, dtype=complex)]
        if params.n_levels == 3:
            fams.append(np.asarray(sol.w, dtype=complex))
        grown = []
        for fam, m in zip(fams, counts):
            fam = fam.copy()
            while fam.size < m:
                fam = _grow_family(fam, 1j / params.p)
            while fam.size > m:
                fam = fam[:-1]
            grown.append(fam)
        guess = SpectralSolution(
            sol.sector,
            tuple(grown[0]),
            tuple(grown[1]) if len(grown) > 1 else (),
            w_inf=int(getattr(sol, "w_inf", 0)),
        )
        # A converged step that jumps far from the tracked eigenvalue has
        # hopped to another branch; treat it like a failure.
        jump_cap = 3.0 * params.gamma + 0.5 * abs(sol.eigenvalue)

        def on_branch(att):
            return att.converged and abs(att.eigenvalue - sol.eigenvalue) <= jump_cap

        attempt = solve(guess, nxt, tol=tol, max_iter=max_iter)
        if not on_branch(attempt):
            # The gap-insertion seed is deterministic; on failure retry a few
            # times with small jitter before giving up on this size step.
            jrng = np.random.default_rng(L)
            for _ in range(8):
                jit = []
                for fam in grown:
                    fam = np.asarray(fam, dtype=complex)
                    bump = 0.02 * (
                        jrng.standard_normal(fam.size)
                        + 1j * jrng.standard_normal(fam.size)
                    )
                    jit.append(fam * (1.0 + bump))
                guess = SpectralSolution(
                    sol.sector,
                    tuple(jit[0]),
                    tuple(jit[1]) if len(jit) > 1 else (),
                    w_inf=int(getattr(sol, "w_inf", 0)),
                )
                attempt = solve(guess, nxt, tol=tol, max_iter=max_iter)
                if on_branch(attempt):
                    break
        if not on_branch(attempt):
            raise NumericError(
                f"size continuation failed at L = {L} (residual {attempt.residual_norm:.3g})"
            )
        sol = attempt
    return sol


def _random_family(rng, m, p, L, style):
    scale = root_scale(p)
    if style == "circle":
        center = 1j / p
        r = abs(1.0 - 1.0 / p)
        th = rng.uniform(0, 2 * math.pi, m)
        rad = r * rng.uniform(0.4, 1.8, m)
        return center + rad * np.exp(1j * th)
    if style == "wide":
        rad = scale * (1.0 + 0.5 * L) * rng.uniform(0.05, 1.0, m)
        th = rng.uniform(0, 2 * math.pi, m)
        return rad * np.exp(1j * th)
    return (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * scale


def random_guess(params, sector, rng, style="gauss", park=None):
    """Random starting configuration, optionally in a singular stratum.

    park is one entry of park_options: a dict with per-family counts of
    roots placed exactly on -i ("minus") and +i ("plus"), plus the number of
    last-family roots at infinity ("inf").  The remaining roots are drawn
    according to `style`.
    """
    sector = as_sector(sector)
    L, p = params.n_atoms, params.p
    counts, _, _ = _family_setup(L, sector)
    nfam = len(counts)
    minus = park["minus"] if park else (0,) * nfam
    plus = park["plus"] if park else (0,) * nfam
    ninf = park["inf"] if park else 0
    fams = []
    for a, m in enumerate(counts):
        fixed = [-1j] * minus[a] + [1j] * plus[a]
        nfree = m - len(fixed) - (ninf if a == nfam - 1 else 0)
        if nfree < 0:
            raise ValidationError("parked more roots than the family holds")
        fams.append(
            np.concatenate(
                [_random_family(rng, nfree, p, L, style), np.asarray(fixed, dtype=complex)]
            )
        )
    e = tuple(fams[0])
    w = tuple(fams[1]) if nfam > 1 else ()
    return SpectralSolution(sector, e, w, w_inf=ninf)


def park_options(L, sector):
    """All admissible singular-stratum assignments, the regular one first.

    Each option fixes the joint pole clusters at -i and +i (screened by
    _cluster_admissible) and the number of last-family roots at infinity,
    subject to the family root counts.  Options are sorted by how many
    roots they fix, so free configurations are tried before singular ones.
    """
    counts, _, _ = _family_setup(L, sector)
    nfam = len(counts)
    clusters = admissible_pole_clusters(L, sector)
    zero = (0,) * nfam
    configs = []
    for minus in [zero] + clusters[-1]:
        for plus in [zero] + clusters[1]:
            if any(a + b > m for a, b, m in zip(minus, plus, counts)):
                continue
            for ninf in (0, 1) if nfam > 1 else (0,):
                if minus[-1] + plus[-1] + ninf > counts[-1]:
                    continue
                configs.append({"minus": minus, "plus": plus, "inf": ninf})
    configs.sort(
        key=lambda c: (
            sum(c["minus"]) + sum(c["plus"]) + c["inf"],
            c["minus"],
            c["plus"],
            c["inf"],
        )
    )
    return configs


def solution_signature(sol, decimals=6):
    """Hashable key identifying a root configuration up to ordering."""

    def fam_key(vals):
        return tuple(
            sorted(
                (round(complex(v).real, decimals), round(complex(v).imag, decimals))
                for v in vals
            )
        )

    return (fam_key(sol.e), fam_key(sol.w), int(getattr(sol, "w_inf", 0)))


def find_sector_solutions(params, sector, targets, rng, tries=400, tol=None,
                          match_atol=None, max_iter=120):
    """Multi-start search matching RG solutions to target eigenvalues.

    Draws random guesses (cycling styles and admissible parked clusters),
    solves each, and keeps converged solutions whose eigenvalue matches one
    of the targets.  Returns (found, unmatched): found maps target index ->
    SpectralSolution, unmatched lists the targets never hit.
    """
    sector = as_sector(sector)
    L = params.n_atoms
    targets = [complex(t) for t in targets]
    lscale = params.gamma * (L**2 + (params.n_levels - 1) * L)
    atol = (1e-7 * lscale) if match_atol is None else match_atol
    parks = park_options(L, sector)
    free_park, singular = parks[0], parks[1:]
    styles = ["gauss", "circle", "wide"]
    structured = []
    if params.n_levels == 3 and params.p != 0.0 and abs(params.p) < 1.0:
        structured.extend(depleted_ring_guesses(L, params.p, sector))
    found = {}
    seen = set()
    for attempt in range(tries):
        if len(found) == len(targets):
            break
        if attempt < len(structured):
            guess = structured[attempt]
        else:
            shifted = attempt - len(structured)
            if singular and shifted % 2 == 1:
                idx = shifted // 2
                park = singular[idx % len(singular)]
                style = styles[(idx // len(singular)) % len(styles)]
            else:
                idx = shifted // 2 if singular else shifted
                park = free_park
                style = styles[idx % len(styles)]
            guess = random_guess(params, sector, rng, style=style, park=park)
        try:
            sol = solve(guess, params, tol=tol, max_iter=max_iter)
        except SingularityError:
            continue
        if not sol.converged:
            continue
        sig = solution_signature(sol)
        if sig in seen:
            continue
        seen.add(sig)
        best = None
        for idx, tgt in enumerate(targets):
            if idx in found:
                continue
            dev = abs(sol.eigenvalue - tgt)
            if dev <= atol and (best is None or dev < best[0]):
                best = (dev, idx)
        if best is not None:
            found[best[1]] = sol
    unmatched = [t for i, t in enumerate(targets) if i not in found]
    return found, unmatched


# ---------------------------------------------------------------------------
# two-level cross-check against the driven-dissipative spin model


def su2_rp_relation_check(params, tol=1e-9):
    """Spectral check of the two-level model against its spin formulation.

    The spin model with Hamiltonian -h S_z and jump operators
    sqrt(4 Gamma0) S_z, sqrt(Gamma (1 - p)) S_+ and sqrt(Gamma (1 + p)) S_-
    equals the two-level collective model with eps = (h/2, -h/2) up to the
    sector-diagonal shift Gamma0 s_1 s_2.  Compares full sector spectra and
    returns (passed, max deviation, per-sector rows).
    """
    import scipy.sparse as sp

    from . import ed
    from .model import enumerate_sectors

    if params.n_levels != 2:
        raise ValidationError("the spin cross-check is a two-level statement")
    h = params.eps[0] - params.eps[1]
    L = params.n_atoms
    K = ed._ladders(2, L)
    sz = (0.5 * (K[(1, 1)] - K[(0, 0)])).tocsr()
    jumps = [
        (math.sqrt(params.gamma * (1.0 - params.p)), K[(1, 0)]),
        (math.sqrt(params.gamma * (1.0 + params.p)), K[(0, 1)]),
    ]
    if params.gamma0 > 0:
        jumps.append((2.0 * math.sqrt(params.gamma0), sz))
    D = sz.shape[0]
    eye = sp.identity(D, format="csr")
    ham = (-h) * sz
    full = -1j * (sp.kron(ham, eye) - sp.kron(eye, ham.T))
    for amp, op in jumps:
        j = amp * op
        num = (j.T @ j).tocsr()
        full = full + sp.kron(j, j) - 0.5 * (sp.kron(num, eye) + sp.kron(eye, num.T))
    full = np.asarray(full.todense())
    rows = []
    worst = 0.0
    for sec in enumerate_sectors(params):
        rp = ed.oracle_sector_matrix(params, sec, full=full)
        su2 = ed.build_sector_matrix(params, sec)
        shift = params.gamma0 * sec[0] * sec[1]
        a = np.sort_complex(ed.full_spectrum(rp).eigenvalues)
        b = np.sort_complex(ed.full_spectrum(su2).eigenvalues + shift)
        dev = float(np.max(np.abs(a - b))) if a.size else 0.0
        rows.append((sec.s, dev))
        worst = max(worst, dev)
    scale = params.gamma * (L**2 + L) + abs(h) * L + params.gamma0 * L**2
    return worst <= tol * scale, worst, rows


# ---------------------------------------------------------------------------
# serialization helpers


def solutions_to_csv_rows(sol):
    """CSV rows (re, im, family) for one solution's spectral parameters.

    Roots at infinity appear as family "w_inf" rows with inf coordinates.
    """
    rows = []
    for v in sol.e:
        v = complex(v)
        rows.append((v.real, v.imag, "e"))
    for v in sol.w:
        v = complex(v)
        rows.append((v.real, v.imag, "w"))
    for _ in range(int(getattr(sol, "w_inf", 0))):
        rows.append((math.inf, math.inf, "w_inf"))
    return rows

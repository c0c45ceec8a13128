"""Eigenvector construction from spectral-parameter solutions.

Eigenvectors of a sector block are built by acting on a reference state with
one creation-like factor per spectral parameter.  The reference state is the
doubled occupation state with all first-copy quanta on level 1 and all
second-copy quanta on level N.  Each factor is

    Kbar_a1(x) = K_a1 (first copy) + rho(x) * K_a1 (second copy),
    rho(x) = -i (1/p + 1) / (x - i/p),

where the second-copy generators carry the canonical transform
K_ab,2 = -I (x) K_ba.  For N = 2 every root c_i contributes Kbar_21(c_i).
For N = 3 the first-family roots e_i contribute Kbar_21(e_i) while each
second-family root w_j either applies K_32,2 with weight rho(w_j) or
promotes one unused e_i factor from Kbar_21 to Kbar_31 with weight

    S(e_i, w_j) = (e_i + i) / (e_i - w_j),

summed over all such choices: an expansion over injective partial maps from
the w set into the e set.  The K_32,2 factors act first (they do not commute
with the Kbar factors); the Kbar factors commute among themselves.

Cost grows combinatorially with the root count, so this is a certification
tool for small systems, not a large-L production path.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .model import (
    NumericError,
    SectorLabel,
    SingularityError,
    ValidationError,
    as_sector,
    effective_charges,
    enumerate_basis,
    spectral_counts,
)


@dataclass
class BetheVector:
    """Unnormalized eigenvector candidate in the fixed sector basis order.

    Carries the originating spectral solution and the certified residual
    ||M v - l v|| / ||v|| against the sector matrix.
    """

    sector: SectorLabel
    components: np.ndarray
    source: object = None
    residual: float = None


def rho_coef(x, p):
    """Second-copy weight rho(x) = -i (1/p + 1)/(x - i/p) of a factor at root x."""
    if p == 0.0:
        raise ValidationError("the eigenvector construction needs p != 0")
    x = complex(x)
    d = x - 1j / p
    if abs(d) < 1e-12 * max(1.0, 1.0 / abs(p)):
        raise SingularityError(f"root {x:.6g} sits on the construction pole i/p")
    return -1j * (1.0 / p + 1.0) / d


def s_coef(e, w):
    """Promotion weight S(e, w) = (e + i)/(e - w) pairing a w root with an e root."""
    e, w = complex(e), complex(w)
    num = e + 1j
    den = e - w
    if den == 0:
        if num == 0:
            raise SingularityError(
                "coincident e and w roots at -i leave the promotion weight undefined"
            )
        raise SingularityError(f"colliding roots e = w = {e:.6g} in the promotion weight")
    return num / den


def vacuum_state(L, N):
    """Reference state: first copy filled on level 1, second copy on level N."""
    k = (L,) + (0,) * (N - 1)
    jb = (0,) * (N - 1) + (L,)
    return {(k, jb): 1.0 + 0.0j}


def _shift(t, a, b):
    """Tuple t with one quantum moved from slot b to slot a."""
    lst = list(t)
    lst[a] += 1
    lst[b] -= 1
    return tuple(lst)


def apply_k_first(state, a, b, weight=1.0):
    """First-copy generator K_ab = adag_a a_b applied to a state dict."""
    out = {}
    for (k, jb), amp in state.items():
        if k[b] == 0 and a != b:
            continue
        if a == b:
            val = amp * weight * k[a]
        else:
            val = amp * weight * np.sqrt((k[a] + 1.0) * k[b])
        if val == 0:
            continue
        key = (k if a == b else _shift(k, a, b), jb)
        out[key] = out.get(key, 0.0) + val
    return out


def apply_k_second(state, a, b, weight=1.0):
    """Canonically transformed second-copy generator K_ab,2 = -I (x) K_ba."""
    out = {}
    for (k, jb), amp in state.items():
        if jb[a] == 0 and a != b:
            continue
        if a == b:
            val = -amp * weight * jb[a]
        else:
            val = -amp * weight * np.sqrt((jb[b] + 1.0) * jb[a])
        if val == 0:
            continue
        key = (k, jb if a == b else _shift(jb, b, a))
        out[key] = out.get(key, 0.0) + val
    return out


def apply_kbar(state, a, x, p):
    """Dressed factor Kbar_a1(x) = K_a1,1 + rho(x) K_a1,2."""
    out = apply_k_first(state, a, 0)
    for key, val in apply_k_second(state, a, 0, weight=rho_coef(x, p)).items():
        out[key] = out.get(key, 0.0) + val
    return {k: v for k, v in out.items() if v != 0}


def _add_scaled(acc, state, coef):
    for key, val in state.items():
        acc[key] = acc.get(key, 0.0) + coef * val
    return acc


def build_state_su2(sol, params):
    """Two-level eigenvector as a doubled occupation dict."""
    if params.n_levels != 2:
        raise ValidationError("build_state_su2 needs a two-level model")
    state = vacuum_state(params.n_atoms, 2)
    for c in sol.e:
        state = apply_kbar(state, 1, c, params.p)
    return state


def build_state_su3(sol, params):
    """Three-level eigenvector as a doubled occupation dict.

    Expands over injective partial maps sigma from the w roots into the e
    roots: unmapped w_j apply K_32,2 with weight rho(w_j) before everything
    else, mapped w_j promote their image factor to Kbar_31(e_i) with weight
    S(e_i, w_j).

    A w root at infinity (sol.w_inf) keeps both of its weights finite after
    rescaling the factor by w, which only changes the overall normalization:
    rho becomes lim w rho(w) = -i (1/p + 1) and S becomes
    lim w S(e, w) = -(e + i).

    A parked pair e = w = -i makes S itself 0/0; for a single pair the
    directions of approach fix the limit at the negative e-family pole
    charge Q_-^e.  Larger coincident clusters at a pole have no unique
    limit and raise SingularityError (certify those states through the
    diagonalization route instead).
    """
    if params.n_levels != 3:
        raise ValidationError("build_state_su3 needs a three-level model")
    L, p = params.n_atoms, params.p
    e = [complex(v) for v in sol.e]
    w = [complex(v) for v in sol.w]
    n_inf = int(getattr(sol, "w_inf", 0))
    m1, m2 = len(e), len(w) + n_inf
    qpe, qme, _, _ = effective_charges(sol.sector)

    def rho_w(j):
        if j >= len(w):
            return -1j * (1.0 / p + 1.0)
        return rho_coef(w[j], p)

    def s_ew(i, j):
        if j >= len(w):
            return -(e[i] + 1j)
        if e[i] == w[j] and e[i] in (-1j, 1j):
            pole = e[i]
            n_e = e.count(pole)
            n_w = w.count(pole)
            if n_e == 1 and n_w == 1 and pole == -1j:
                return complex(qme)
            raise SingularityError(
                f"coincident roots at {pole:.0g} form a {n_e}x{n_w} cluster; "
                "the promotion weight has no unique limit there"
            )
        return s_coef(e[i], w[j])

    vac = vacuum_state(L, 3)
    total = {}
    for mapped in range(0, min(m1, m2) + 1):
        for wsel in itertools.combinations(range(m2), mapped):
            unmapped = [j for j in range(m2) if j not in wsel]
            for esel in itertools.permutations(range(m1), mapped):
                coef = 1.0 + 0.0j
                for j in unmapped:
                    coef *= rho_w(j)
                for j, i in zip(wsel, esel):
                    coef *= s_ew(i, j)
                if coef == 0:
                    continue
                term = vac
                for _ in unmapped:
                    term = apply_k_second(term, 2, 1)
                promoted = set(esel)
                for i in range(m1):
                    term = apply_kbar(term, 2 if i in promoted else 1, e[i], p)
                total = _add_scaled(total, term, coef)
    return {k: v for k, v in total.items() if v != 0}


def state_to_vector(state, L, sector):
    """Dense sector-basis coefficient vector of an occupation dict.

    Raises ValidationError if any component lies outside the sector.
    """
    sector = as_sector(sector)
    basis = enumerate_basis(L, sector)
    index = {st.k: i for i, st in enumerate(basis)}
    vec = np.zeros(len(basis), dtype=complex)
    for (k, jb), amp in state.items():
        expected = tuple(ka - sa for ka, sa in zip(k, sector.s))
        if jb != expected or k not in index:
            raise ValidationError(
                f"component k={k}, jbar={jb} lies outside sector {sector.s}"
            )
        vec[index[k]] = amp
    return vec


def build_eigenvector(sol, params):
    """Sector-basis eigenvector of a spectral solution; returns (vector, sector).

    The sector follows from the root counts: M_1 = L - s_1 factors move
    first-copy quanta off level 1, M_2 = L + s_N second-copy applications
    move quanta off level N.
    """
    sector = as_sector(sol.sector)
    counts = spectral_counts(params.n_atoms, sector)
    if params.n_levels == 3:
        got = (len(sol.e), len(sol.w) + int(getattr(sol, "w_inf", 0)))
    else:
        got = (len(sol.e),)
    if got != tuple(counts):
        raise ValidationError(
            f"solution carries {got} roots, sector {sector.s} needs {tuple(counts)}"
        )
    if params.n_levels == 2:
        state = build_state_su2(sol, params)
    elif params.n_levels == 3:
        state = build_state_su3(sol, params)
    else:
        raise ValidationError("eigenvector construction supports N = 2 or 3")
    vec = state_to_vector(state, params.n_atoms, sector)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise NumericError("the constructed eigenvector vanished identically")
    return vec / norm, sector


def certify(vec, matrix, eigenvalue):
    """Relative residual ||M v - l v||_2 / ||v||_2 of a candidate eigenpair.

    vec may be a plain array or a BetheVector; matrix anything supporting @.
    """
    if isinstance(vec, BetheVector):
        vec = vec.components
    vec = np.asarray(vec, dtype=complex)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValidationError("cannot certify the zero vector")
    dim = getattr(matrix, "dim", None)
    if dim is None:
        dim = np.asarray(getattr(matrix, "shape", (vec.size,)))[-1]
    if int(dim) != vec.size:
        raise ValidationError(
            f"vector of length {vec.size} does not match a dimension-{int(dim)} block"
        )
    op = getattr(matrix, "entries", matrix)
    if hasattr(op, "toarray") and not isinstance(op, np.ndarray):
        resid = op @ vec - eigenvalue * vec
    else:
        resid = np.asarray(op) @ vec - eigenvalue * vec
    return float(np.linalg.norm(resid) / norm)


def build_eigenvector_su3(sol, params, matrix=None):
    """BetheVector of a converged three-level solution, certified in place.

    The components stay unnormalized; a vanishing construction raises
    NumericError rather than being hidden by normalization.  matrix defaults
    to the sector block built from params.
    """
    from . import ed

    if params.n_levels != 3:
        raise ValidationError("this constructor is specific to three-level models")
    if sol.eigenvalue is None:
        raise ValidationError("the solution carries no eigenvalue to certify against")
    sector = as_sector(sol.sector)
    counts = spectral_counts(params.n_atoms, sector)
    got = (len(sol.e), len(sol.w) + int(getattr(sol, "w_inf", 0)))
    if got != tuple(counts):
        raise ValidationError(
            f"solution carries {got} roots, sector {sector.s} needs {tuple(counts)}"
        )
    state = build_state_su3(sol, params)
    vec = state_to_vector(state, params.n_atoms, sector)
    if not np.any(vec):
        raise NumericError("the constructed eigenvector vanished identically")
    if matrix is None:
        matrix = ed.build_sector_matrix(params, sector)
    resid = certify(vec, matrix, sol.eigenvalue)
    return BetheVector(sector=sector, components=vec, source=sol, residual=resid)


def components_csv_text(bv, L):
    """CSV table of a vector's components against the occupation basis.

    Columns are the first-copy occupations k_1..k_N followed by the real and
    imaginary parts of each coefficient; zero rows are kept so the row count
    equals the sector dimension.  Debug aid, not a stable interchange format.
    """
    basis = enumerate_basis(L, bv.sector)
    if len(basis) != len(bv.components):
        raise ValidationError(
            f"vector of length {len(bv.components)} does not match the "
            f"dimension-{len(basis)} sector basis at L={L}"
        )
    n = len(bv.sector)
    lines = [",".join([f"k{a + 1}" for a in range(n)] + ["re", "im"])]
    for st, amp in zip(basis, bv.components):
        amp = complex(amp)
        lines.append(",".join([str(v) for v in st.k] + [repr(amp.real), repr(amp.imag)]))
    return "\n".join(lines) + "\n"


def certified_eigenvector(sol, params, matrix=None, tol=1e-6):
    """Build the eigenvector of a converged solution and certify it.

    Returns (vector, residual).  matrix defaults to the sector block built
    from params; tol raises NumericError when exceeded.
    """
    from . import ed

    if sol.eigenvalue is None:
        raise ValidationError("the solution carries no eigenvalue to certify against")
    vec, sector = build_eigenvector(sol, params)
    if matrix is None:
        matrix = ed.build_sector_matrix(params, sector).toarray()
    resid = certify(vec, matrix, sol.eigenvalue)
    if resid > tol:
        raise NumericError(
            f"eigenvector certification failed: residual {resid:.3g} > {tol:.3g} "
            f"in sector {sector.s}"
        )
    return vec, resid

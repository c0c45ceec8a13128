"""Exact diagonalization of the vectorized Liouvillian, sector by sector.

Two independent constructions of the same operator are kept side by side.
The oracle builds the full doubled-space matrix literally from its definition,
term by term in the jump operators, and serves as ground truth.  The stencil
builds each weak-symmetry block directly from closed-form matrix elements in
the occupation basis (one diagonal family plus N(N-1) hop families) and is
what production paths use.  Tests certify the stencil against the oracle.

Spectra come from dense non-Hermitian diagonalization up to a configurable
size and from shift-invert Arnoldi iterations beyond it.
"""

import cmath
import functools
import math
import warnings
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (
    LiouvParams,
    NumericError,
    ResourceLimitError,
    SectorLabel,
    ValidationError,
    as_sector,
    basis_index,
    check_memory_budget,
    enumerate_basis,
    enumerate_sectors,
    occupation_basis,
    sector_dimension,
)

# Largest dimension that full dense diagonalization will accept.
DENSE_LIMIT = 4000


@dataclass
class SectorMatrix:
    """One weak-symmetry block of the vectorized Liouvillian."""

    sector: SectorLabel
    dim: int
    entries: object  # dense ndarray or scipy.sparse matrix
    build_method: str  # 'stencil' or 'oracle'
    params: LiouvParams

    def toarray(self):
        if sp.issparse(self.entries):
            return self.entries.toarray()
        return np.asarray(self.entries)

    def tocsr(self):
        if sp.issparse(self.entries):
            return self.entries.tocsr()
        return sp.csr_matrix(self.entries)


@dataclass
class SpectrumResult:
    """Eigenvalues (and optionally eigenvectors) of one sector block."""

    sector: SectorLabel
    eigenvalues: np.ndarray
    eigenvectors: object  # ndarray columns, or None
    method: str  # 'dense_full' or 'shift_invert_partial'
    residual_norms: object  # ndarray or None


SteadyStateResult = namedtuple("SteadyStateResult", "eigenvalue rho degenerate modes")
GapResult = namedtuple("GapResult", "gap sector eigenvalue")
BandRow = namedtuple("BandRow", "lam re_predicted mult_predicted mult_observed max_dev")
BandReport = namedtuple("BandReport", "passed rows max_dev imag_dev")


@functools.lru_cache(maxsize=16)
def _ladders(N, L):
    """Collective generators K[a, b] = adag_a a_b on one copy, 0-based, csr."""
    basis = occupation_basis(L, N)
    index = {k: i for i, k in enumerate(basis)}
    D = len(basis)
    mats = {}
    for a in range(N):
        for b in range(N):
            rows, cols, vals = [], [], []
            for j, k in enumerate(basis):
                if a == b:
                    if k[a]:
                        rows.append(j)
                        cols.append(j)
                        vals.append(float(k[a]))
                    continue
                if k[b] == 0:
                    continue
                kk = list(k)
                kk[a] += 1
                kk[b] -= 1
                rows.append(index[tuple(kk)])
                cols.append(j)
                vals.append(np.sqrt((k[a] + 1.0) * k[b]))
            mats[(a, b)] = sp.csr_matrix((vals, (rows, cols)), shape=(D, D))
    return mats


def build_oracle_matrix(params, x_table=None, budget=None):
    """Vectorized Liouvillian on the full doubled space, built literally.

    Assembles -i sum_a eps_a (K_aa (x) 1 - 1 (x) K_aa) plus, for every
    ordered level pair (a, b) including a = b, the dissipator
    x_ab [K_ab (x) K_ab - (K_ba K_ab (x) 1 + 1 (x) K_ba K_ab) / 2].
    The Kronecker convention is vec(A rho B) = (A (x) B^T) vec(rho) with
    row-major vec, and all K are real.

    Parameters
    ----------
    params : LiouvParams
    x_table : (N, N) array, optional
        Overrides the jump-rate table, e.g. to inject a deliberate defect.

    Returns
    -------
    (D^2, D^2) dense complex ndarray, D the one-copy dimension.
    """
    N, L = params.n_levels, params.n_atoms
    x = params.x_table() if x_table is None else np.asarray(x_table, dtype=float)
    if x.shape != (N, N):
        raise ValidationError(f"x_table must be shape {(N, N)}, got {x.shape}")
    K = _ladders(N, L)
    D = K[(0, 0)].shape[0]
    check_memory_budget(D**4, budget, what="oracle matrix")
    eye = sp.identity(D, format="csr")
    acc = sp.csr_matrix((D * D, D * D), dtype=complex)
    for a in range(N):
        acc = acc + (-1j * params.eps[a]) * (
            sp.kron(K[(a, a)], eye, format="csr") - sp.kron(eye, K[(a, a)], format="csr")
        )
    for a in range(N):
        for b in range(N):
            if x[a, b] == 0.0:
                continue
            kab = K[(a, b)]
            num = (K[(b, a)] @ kab).tocsr()  # K_ba K_ab, symmetric real
            acc = acc + x[a, b] * (
                sp.kron(kab, kab, format="csr")
                - 0.5 * (sp.kron(num, eye, format="csr") + sp.kron(eye, num, format="csr"))
            )
    return acc.toarray()


def oracle_sector_matrix(params, sector, full=None, x_table=None):
    """Extract one weak-symmetry block from the oracle matrix.

    Row and column order follow enumerate_basis, so the result is directly
    comparable with build_sector_matrix output.
    """
    sector = as_sector(sector)
    N, L = params.n_levels, params.n_atoms
    if full is None:
        full = build_oracle_matrix(params, x_table=x_table)
    occ = occupation_basis(L, N)
    occ_index = {k: i for i, k in enumerate(occ)}
    D = len(occ)
    idx = []
    for st in enumerate_basis(L, sector):
        m = occ_index[st.k]
        mbar = occ_index[st.jbar(sector)]
        idx.append(m * D + mbar)
    idx = np.asarray(idx, dtype=int)
    block = full[np.ix_(idx, idx)]
    return SectorMatrix(sector, len(idx), block, "oracle", params)


def offblock_mass(params, full=None):
    """Largest |entry| of the oracle outside all weak-symmetry blocks.

    Exactly zero for a correctly assembled operator; any leakage signals a
    broken symmetry.
    """
    if full is None:
        full = build_oracle_matrix(params)
    N, L = params.n_levels, params.n_atoms
    occ = occupation_basis(L, N)
    D = len(occ)
    labels = np.empty(D * D, dtype=object)
    for m, km in enumerate(occ):
        for mb, kmb in enumerate(occ):
            labels[m * D + mb] = tuple(a - b for a, b in zip(km, kmb))
    mass = 0.0
    rows, cols = np.nonzero(np.abs(full) > 0)
    for r, c in zip(rows, cols):
        if labels[r] != labels[c]:
            mass = max(mass, abs(full[r, c]))
    return mass


IntegrabilityReport = namedtuple(
    "IntegrabilityReport", "commutator reconstruction dim"
)


def doubled_generators(params):
    """Canonically transformed copy generators on the full doubled space.

    Returns (K1, K2): dicts over (a, b) with K1 acting on the first copy
    and K2_ab = -1 (x) K_ba on the second, so both satisfy the same su(N)
    commutation relations and commute with each other.
    """
    N, L = params.n_levels, params.n_atoms
    K = _ladders(N, L)
    D = K[(0, 0)].shape[0]
    check_memory_budget(D**4, None, what="doubled generators")
    eye = sp.identity(D, format="csr")
    K1 = {ab: sp.kron(K[ab], eye, format="csr") for ab in K}
    K2 = {(a, b): -sp.kron(eye, K[(b, a)], format="csr") for (a, b) in K}
    return K1, K2


def integrals_of_motion(params):
    """The two conserved operators whose difference is the dissipative part.

    For two copies at positions z_1 = 0 and z_2 = z with cot z = i/p, the
    conserved operators are R_m = sum_a chi_a K_aa,m +- Q with the shared
    quadratic part Q = cot z sum_a K_aa,1 K_aa,2
    + (1/sin z) sum_{b>a} [e^{iz} K_ab,1 K_ba,2 + e^{-iz} K_ba,1 K_ab,2].
    They commute with each other, with every S_a, and with the Liouvillian.
    """
    N = params.n_levels
    p = params.p
    if p == 0.0 or abs(p) >= 1.0:
        raise ValidationError(
            f"the conserved-operator construction needs 0 < |p| < 1, got p = {p}"
        )
    K1, K2 = doubled_generators(params)
    z = math.pi - 1j * math.atanh(p)
    sinz, cosz = cmath.sin(z), cmath.cos(z)
    dim = K1[(0, 0)].shape[0]
    quad = sp.csr_matrix((dim, dim), dtype=complex)
    for a in range(N):
        quad = quad + (cosz / sinz) * (K1[(a, a)] @ K2[(a, a)])
    for a in range(N):
        for b in range(a + 1, N):
            quad = quad + (cmath.exp(1j * z) / sinz) * (K1[(a, b)] @ K2[(b, a)])
            quad = quad + (cmath.exp(-1j * z) / sinz) * (K1[(b, a)] @ K2[(a, b)])
    chi = [1j * (2 * (a + 1) - N - 1) for a in range(N)]
    lin1 = sum(chi[a] * K1[(a, a)] for a in range(N))
    lin2 = sum(chi[a] * K2[(a, a)] for a in range(N))
    return (lin1 + quad).tocsr(), (lin2 - quad).tocsr()


def integrability_check(params):
    """Certify the conserved-operator structure against the oracle.

    Returns IntegrabilityReport(commutator, reconstruction, dim) where
    commutator = max |[R_1, R_2]| entry and reconstruction is the largest
    entry deviation between g sin(z) (R_1 - R_2) plus the conserved scalar
    part and the literally assembled Liouvillian.  The conserved part is
    -i sum_a eps_a S_a - Gamma (L^2 + (N-1) L)
    + (Gamma - Gamma0)/2 sum_a S_a^2 with S_a = K_aa,1 + K_aa,2.
    """
    N, L = params.n_levels, params.n_atoms
    p = params.p
    R1, R2 = integrals_of_motion(params)
    comm = (R1 @ R2 - R2 @ R1).toarray()
    K1, K2 = doubled_generators(params)
    dim = R1.shape[0]
    cons = sp.csr_matrix((dim, dim), dtype=complex)
    for a in range(N):
        T = K1[(a, a)] + K2[(a, a)]
        cons = cons + (-1j * params.eps[a]) * T
        cons = cons + 0.5 * (params.gamma - params.gamma0) * (T @ T)
    cons = cons - params.gamma * (L**2 + (N - 1) * L) * sp.identity(dim, format="csr")
    z = math.pi - 1j * math.atanh(p)
    g = 0.5 * params.gamma * math.sqrt(1.0 - p * p)
    combo = (g * cmath.sin(z) * (R1 - R2) + cons).toarray()
    oracle = build_oracle_matrix(params)
    return IntegrabilityReport(
        float(np.abs(comm).max()),
        float(np.abs(combo - oracle).max()),
        dim,
    )


def trace_functional_deviation(params, full=None):
    """Largest entry of the trace functional applied to the Liouvillian.

    The trace of the density matrix reads off the diagonal doubled-basis
    components (second-copy occupation equal to the first); trace
    preservation makes that row vector a left null vector of the oracle.
    """
    if full is None:
        full = build_oracle_matrix(params)
    D = int(round(math.sqrt(full.shape[0])))
    t = np.zeros(full.shape[0])
    t[np.arange(D) * D + np.arange(D)] = 1.0
    return float(np.abs(t @ full).max())


def matrix_to_coo_text(matrix):
    """Coordinate-list dump of a sector matrix: lines of `row col re im`.

    Zero entries are omitted; rows are emitted in (row, col) order with a
    header comment giving the dimension, for external verification tools.
    """
    mat = matrix.tocsr() if hasattr(matrix, "tocsr") else sp.csr_matrix(matrix)
    mat = mat.tocoo()
    order = np.lexsort((mat.col, mat.row))
    lines = [f"# coo dim={mat.shape[0]} nnz={mat.nnz}"]
    for i in order:
        v = complex(mat.data[i])
        lines.append(f"{mat.row[i]} {mat.col[i]} {v.real!r} {v.imag!r}")
    return "\n".join(lines) + "\n"


def build_sector_matrix(params, sector, sparse=None, dense_limit=DENSE_LIMIT, budget=None):
    """One weak-symmetry block from closed-form matrix elements.

    In the occupation basis |k>, with kbar = k - s, the diagonal element is

        -i sum_a eps_a s_a - (Gamma0/2) sum_a s_a^2 - Gamma (L^2 + (N-1) L)
        + (Gamma/2) sum_a (k_a^2 + kbar_a^2)
        - (p Gamma/2) sum_a (2a - N - 1)(k_a + kbar_a)          (a is 1-based)

    and each ordered level pair (a, b), a != b, contributes a hop
    k -> k + u_a - u_b of amplitude x_ab sqrt((k_a+1) k_b (kbar_a+1) kbar_b),
    where u_a is the unit occupation vector.  Storage is dense up to
    dense_limit and CSR beyond it (or as forced by `sparse`).
    """
    sector = as_sector(sector)
    N, L = params.n_levels, params.n_atoms
    if len(sector) != N:
        raise ValidationError(f"sector has {len(sector)} entries, expected {N}")
    basis = enumerate_basis(L, sector)
    dim = len(basis)
    if dim == 0:
        raise ValidationError(f"sector {sector.s} is empty at n_atoms = {L}")
    use_sparse = (dim > dense_limit) if sparse is None else sparse
    if not use_sparse:
        check_memory_budget(dim * dim, budget, what="sector matrix")
    index = {st.k: i for i, st in enumerate(basis)}
    x = params.x_table()
    g, g0, p = params.gamma, params.gamma0, params.p
    s = np.asarray(sector.s)
    const = (
        -1j * float(np.dot(params.eps, s))
        - 0.5 * g0 * float(np.dot(s, s))
        - g * (L**2 + (N - 1) * L)
    )
    wcoef = np.array([2 * (a + 1) - N - 1 for a in range(N)], dtype=float)
    rows, cols, vals = [], [], []
    for j, st in enumerate(basis):
        k = np.asarray(st.k)
        jb = k - s
        d = const + 0.5 * g * float(np.dot(k, k) + np.dot(jb, jb))
        d -= 0.5 * p * g * float(np.dot(wcoef, k + jb))
        rows.append(j)
        cols.append(j)
        vals.append(d)
        for a in range(N):
            for b in range(N):
                if a == b or k[b] == 0 or jb[b] == 0:
                    continue
                kk = st.k[:a] + (st.k[a] + 1,) + st.k[a + 1 :]
                kk = kk[:b] + (kk[b] - 1,) + kk[b + 1 :]
                amp = x[a, b] * np.sqrt((k[a] + 1.0) * k[b] * (jb[a] + 1.0) * jb[b])
                rows.append(index[kk])
                cols.append(j)
                vals.append(complex(amp))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    entries = mat if use_sparse else mat.toarray()
    return SectorMatrix(sector, dim, entries, "stencil", params)


def build_sector_matrix_su3(params, sector, **kw):
    """Three-level specialization of build_sector_matrix."""
    if params.n_levels != 3:
        raise ValidationError(f"expected n_levels = 3, got {params.n_levels}")
    return build_sector_matrix(params, sector, **kw)


def _matrix_norm1(mat):
    if sp.issparse(mat):
        return abs(mat).sum(axis=0).max()
    return np.abs(mat).sum(axis=0).max()


def full_spectrum(matrix, eigenvectors=False, dense_limit=DENSE_LIMIT):
    """Dense spectrum of one sector block, sorted ascending by (Re, Im).

    Refuses dimensions above dense_limit; use target_eigenvalues_near there.
    When eigenvectors are requested, per-pair residual norms ||A v - l v||_2
    are attached.
    """
    if matrix.dim > dense_limit:
        raise ResourceLimitError(
            f"dimension {matrix.dim} exceeds dense limit {dense_limit}; "
            "use target_eigenvalues_near"
        )
    a = matrix.toarray()
    if eigenvectors:
        vals, vecs = sla.eig(a)
    else:
        vals = sla.eigvals(a)
        vecs = None
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    res = None
    if vecs is not None:
        vecs = vecs[:, order]
        res = np.linalg.norm(a @ vecs - vecs * vals[np.newaxis, :], axis=0)
    return SpectrumResult(matrix.sector, vals, vecs, "dense_full", res)


def target_eigenvalues_near(matrix, shift, count, ncv=None, tol=0, residual_scale=1e-8):
    """Eigenvalues of one sector block nearest a complex shift.

    Runs shift-invert Arnoldi (sparse LU of A - shift) with a deterministic
    start vector; falls back to a dense solve for small blocks where the
    Arnoldi space would not fit.  Results are sorted by distance to the
    shift and certified to residual <= residual_scale * ||A||_1.
    """
    dim = matrix.dim
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    scale = _matrix_norm1(matrix.entries)
    if count >= dim - 1 or dim <= max(64, 3 * count):
        full = full_spectrum(matrix, eigenvectors=True, dense_limit=max(DENSE_LIMIT, dim))
        order = np.argsort(np.abs(full.eigenvalues - shift), kind="stable")[:count]
        vals = full.eigenvalues[order]
        vecs = full.eigenvectors[:, order]
        res = full.residual_norms[order]
        return SpectrumResult(matrix.sector, vals, vecs, "shift_invert_partial", res)
    a = matrix.tocsr().tocsc()
    if ncv is None:
        ncv = min(dim, max(20, 4 * count))
    v0 = np.ones(dim) / np.sqrt(dim)
    try:
        vals, vecs = spla.eigs(a, k=count, sigma=shift, which="LM", ncv=ncv, tol=tol, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise NumericError(
            f"Arnoldi did not converge near shift {shift} (k={count}, ncv={ncv}); "
            "try a different shift or larger ncv"
        ) from exc
    order = np.argsort(np.abs(vals - shift), kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    res = np.linalg.norm(a @ vecs - vecs * vals[np.newaxis, :], axis=0)
    bad = res > residual_scale * scale
    if np.any(bad):
        raise NumericError(
            f"{int(bad.sum())} of {count} Arnoldi eigenpairs near {shift} exceed "
            f"residual {residual_scale:g} * ||A||_1 = {residual_scale * scale:g}"
        )
    return SpectrumResult(matrix.sector, vals, vecs, "shift_invert_partial", res)


def steady_state(params, degeneracy_tol=1e-9, dense_limit=DENSE_LIMIT, population_tol=1e-10):
    """Steady state(s): the kernel of the zero sector, trace normalized.

    Returns a SteadyStateResult whose rho is the vector of density-matrix
    components over the zero-sector basis (its diagonal entries in the
    occupation basis, which sum to the trace).  Eigenvalues within
    degeneracy_tol * ||A||_1 of zero are treated as one degenerate set; the
    result is flagged and all members returned in `modes`.
    """
    N = params.n_levels
    zero = SectorLabel((0,) * N)
    mat = build_sector_matrix(params, zero)
    scale = _matrix_norm1(mat.entries)
    ztol = degeneracy_tol * scale
    if mat.dim <= dense_limit:
        res = full_spectrum(mat, eigenvectors=True, dense_limit=dense_limit)
        sel = np.nonzero(np.abs(res.eigenvalues) <= ztol)[0]
        if sel.size == 0:
            raise NumericError("no eigenvalue within tolerance of zero in the zero sector")
        vals = res.eigenvalues[sel]
        vecs = res.eigenvectors[:, sel]
    else:
        # shift slightly into the forbidden Re > 0 half plane, so the
        # factorized matrix is never singular and 0 is the nearest eigenvalue
        part = target_eigenvalues_near(mat, 0.05 * params.gamma, min(4, mat.dim - 2))
        sel = np.nonzero(np.abs(part.eigenvalues) <= ztol)[0]
        if sel.size == 0:
            raise NumericError("no eigenvalue within tolerance of zero in the zero sector")
        vals = part.eigenvalues[sel]
        vecs = part.eigenvectors[:, sel]
    modes = []
    rho = None
    eigenvalue = None
    for i in range(vals.size):
        v = vecs[:, i]
        tr = v.sum()
        if abs(tr) > 1e-12 * np.linalg.norm(v) * np.sqrt(mat.dim):
            v = v / tr
        modes.append((vals[i], v))
        if rho is None and abs(v.sum() - 1.0) < 1e-8:
            rho = v
            eigenvalue = vals[i]
    if rho is None:
        raise NumericError("no trace-normalizable zero mode found")
    imag_max = float(np.max(np.abs(rho.imag)))
    neg_min = float(rho.real.min())
    if imag_max > population_tol or neg_min < -population_tol:
        raise NumericError(
            f"steady-state populations not real nonnegative within {population_tol:g} "
            f"(max imag {imag_max:g}, min real {neg_min:g})"
        )
    return SteadyStateResult(eigenvalue, rho, len(modes) > 1, modes)


def level_populations(params, rho):
    """Collective level occupations <K_aa> of a zero-sector component vector."""
    N, L = params.n_levels, params.n_atoms
    zero = SectorLabel((0,) * N)
    ks = np.asarray([st.k for st in enumerate_basis(L, zero)], dtype=float)
    return ks.T @ np.asarray(rho)


def dissipative_gap(params, dense_limit=DENSE_LIMIT, count=10, degeneracy_tol=1e-9):
    """Smallest |Re| over nonzero eigenvalues, searched where it lives.

    The slowest decaying modes sit in the sectors whose largest entry is 1
    and among the nonzero modes of the zero sector; all of those are scanned.
    Returns (gap, sector, eigenvalue) with gap = |Re| > 0.
    """
    N = params.n_levels
    zero = SectorLabel((0,) * N)
    sectors = [zero] + [s for s in enumerate_sectors(params) if max(s.s) == 1]
    best = None
    for sec in sectors:
        mat = build_sector_matrix(params, sec)
        scale = _matrix_norm1(mat.entries)
        ztol = degeneracy_tol * scale
        if mat.dim <= dense_limit:
            vals = full_spectrum(mat).eigenvalues
        else:
            anchor = -1j * float(np.dot(params.eps, sec.s))
            vals = target_eigenvalues_near(mat, anchor, min(count, mat.dim - 2)).eigenvalues
        for lam in vals:
            if abs(lam) <= ztol:
                continue  # steady-state mode(s)
            width = abs(lam.real)
            if width <= ztol:
                continue
            if best is None or width < best[0]:
                best = (width, sec, lam)
    if best is None:
        raise NumericError("no nonzero decay mode found")
    return GapResult(*best)


def p0_band_check(params, tol=1e-8):
    """Verify the unpumped (p = 0) band structure of a three-level model.

    At p = 0 the spectrum organizes into bands: every eigenvalue has
    Re = (Gamma - Gamma0)/2 sum_a s_a^2 - Gamma (lam^2 + 2 lam) for an
    integer lam in [0, L], with global multiplicity (lam + 1)^3 per lam,
    and Im = -sum_a eps_a s_a inside each sector.
    """
    if params.n_levels != 3:
        raise ValidationError("band check is defined for n_levels = 3")
    if params.p != 0.0:
        raise ValidationError(f"band check requires p = 0, got p = {params.p}")
    L, g, g0 = params.n_atoms, params.gamma, params.gamma0
    lam_values = np.arange(L + 1)
    band_re = -g * (lam_values**2 + 2.0 * lam_values)
    counts = np.zeros(L + 1, dtype=int)
    max_dev = 0.0
    imag_dev = 0.0
    atol = tol * g * (L + 1) ** 2
    for sec in enumerate_sectors(params):
        mat = build_sector_matrix(params, sec)
        vals = full_spectrum(mat).eigenvalues
        s2 = 0.5 * (g - g0) * float(np.dot(sec.s, sec.s))
        im_target = -float(np.dot(params.eps, sec.s))
        imag_dev = max(imag_dev, float(np.max(np.abs(vals.imag - im_target))))
        for lam_val in vals:
            j = int(np.argmin(np.abs(lam_val.real - (band_re + s2))))
            dev = abs(lam_val.real - (band_re[j] + s2))
            max_dev = max(max_dev, dev)
            counts[j] += 1
    rows = []
    ok = max_dev <= atol and imag_dev <= atol
    for lam in lam_values:
        expected = (lam + 1) ** 3
        rows.append(BandRow(int(lam), float(band_re[lam]), expected, int(counts[lam]), max_dev))
        if counts[lam] != expected:
            ok = False
    return BandReport(ok, rows, max_dev, imag_dev)


def evolve_expectation(params, rho0, observable, times, cond_warn=1e8, dense_limit=DENSE_LIMIT):
    """Expectation trace(O rho(t)) on a time grid by sector-wise spectral evolution.

    Parameters
    ----------
    rho0 : (D*D,) complex vector
        Initial density matrix, vectorized row major over the one-copy
        occupation basis (component rho[m, mbar] at index m * D + mbar).
    observable : (D, D) matrix
        Operator O on one copy.
    times : array of float

    Notes
    -----
    Each sector block is diagonalized once and the initial slice expanded in
    its eigenbasis; a warning is emitted when an eigenvector matrix has
    condition number above cond_warn (nearly defective block).
    """
    N, L = params.n_levels, params.n_atoms
    occ = occupation_basis(L, N)
    occ_index = {k: i for i, k in enumerate(occ)}
    D = len(occ)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (D * D,):
        raise ValidationError(f"rho0 must have shape {(D * D,)}, got {rho0.shape}")
    observable = np.asarray(observable, dtype=complex)
    if observable.shape != (D, D):
        raise ValidationError(f"observable must have shape {(D, D)}, got {observable.shape}")
    times = np.asarray(times, dtype=float)
    out = np.zeros(times.shape, dtype=complex)
    for sec in enumerate_sectors(params):
        idx = []
        weights = []
        for st in enumerate_basis(L, sec):
            m = occ_index[st.k]
            mbar = occ_index[st.jbar(sec)]
            idx.append(m * D + mbar)
            weights.append(observable[mbar, m])
        idx = np.asarray(idx, dtype=int)
        weights = np.asarray(weights, dtype=complex)
        v0 = rho0[idx]
        if not np.any(v0) or not np.any(weights):
            continue
        mat = build_sector_matrix(params, sec)
        if mat.dim > dense_limit:
            raise ResourceLimitError(
                f"sector {sec.s} dimension {mat.dim} exceeds dense limit for evolution"
            )
        vals, vecs = sla.eig(mat.toarray())
        cond = np.linalg.cond(vecs)
        if cond > cond_warn:
            warnings.warn(
                f"sector {sec.s} eigenvector matrix has condition number {cond:.3g}; "
                "block is nearly defective and evolution may lose accuracy",
                RuntimeWarning,
                stacklevel=2,
            )
        coef = np.linalg.solve(vecs, v0)
        wproj = weights @ vecs
        out += np.einsum("j,tj->t", wproj * coef, np.exp(np.outer(times, vals)))
    return out


def rho0_level(params, level):
    """Vectorized pure state with all atoms in one level (1-based)."""
    N, L = params.n_levels, params.n_atoms
    if not 1 <= level <= N:
        raise ValidationError(f"level must be in 1..{N}, got {level}")
    occ = occupation_basis(L, N)
    occ_index = {k: i for i, k in enumerate(occ)}
    D = len(occ)
    k = tuple(L if a == level - 1 else 0 for a in range(N))
    rho = np.zeros(D * D, dtype=complex)
    m = occ_index[k]
    rho[m * D + m] = 1.0
    return rho


def rho0_mixed(params):
    """Vectorized maximally mixed state on the symmetric subspace."""
    N, L = params.n_levels, params.n_atoms
    D = len(occupation_basis(L, N))
    rho = np.zeros(D * D, dtype=complex)
    rho[:: D + 1] = 1.0 / D
    return rho


def level_occupation_operator(params, level):
    """Dense matrix of K_aa (1-based level) on one copy."""
    N, L = params.n_levels, params.n_atoms
    if not 1 <= level <= N:
        raise ValidationError(f"level must be in 1..{N}, got {level}")
    return _ladders(N, L)[(level - 1, level - 1)].toarray()


def weak_symmetry_max_commutator(params, full=None):
    """Max over levels of ||[S_a, Liouvillian]||_max on the doubled space.

    S_a acts diagonally with integer eigenvalues s_a, so the commutator is
    exactly zero entry by entry for a correct assembly.
    """
    N, L = params.n_levels, params.n_atoms
    if full is None:
        full = build_oracle_matrix(params)
    occ = occupation_basis(L, N)
    D = len(occ)
    worst = 0.0
    for a in range(N):
        diag = np.empty(D * D)
        for m, km in enumerate(occ):
            for mb, kmb in enumerate(occ):
                diag[m * D + mb] = km[a] - kmb[a]
        comm = diag[:, None] * full - full * diag[None, :]
        worst = max(worst, float(np.max(np.abs(comm))))
    return worst


def spectra_by_sector(params, sectors=None, eigenvectors=False):
    """Dense full_spectrum for each listed sector (default: all sectors)."""
    if sectors is None:
        sectors = enumerate_sectors(params)
    out = []
    for sec in sectors:
        mat = build_sector_matrix(params, sec)
        out.append(full_spectrum(mat, eigenvectors=eigenvectors))
    return out


def spectra_csv_rows(spectra):
    """Export header and rows (sector_s1..sN, re, im, method, residual).

    The residual cell is empty when the spectrum was computed without
    eigenvectors (no per-pair residuals available).
    """
    header = None
    rows = []
    for res in spectra:
        sec = as_sector(res.sector)
        if header is None:
            header = [f"sector_s{a + 1}" for a in range(len(sec.s))] + [
                "re", "im", "method", "residual",
            ]
        rn = res.residual_norms
        for i, v in enumerate(res.eigenvalues):
            cell = float(rn[i]) if rn is not None else ""
            rows.append(tuple(sec.s) + (float(v.real), float(v.imag), res.method, cell))
    return header, rows

"""Thermodynamic-limit structure of the collective Liouvillian.

For 0 < |p| < 1 the steady state condenses into one level (the lowest for
p > 0, the highest for p < 0).  Expanding the boson fields around that
condensate leaves one independent quasiboson pair per non-condensate level,
governed by a quadratic Liouvillian whose rapidities are exact in the limit:

    theta_e(alpha) = -i d_eps(alpha) - |p| gamma_c,
    theta_f(alpha) = +i d_eps(alpha) - |p| gamma_c,

with d_eps(alpha) the level splitting against the condensate and
gamma_c = Gamma * L the collectively enhanced rate (the single rescaling
applied at the thermodynamic boundary).  The sum rule
theta_e + theta_f = -2 |p| gamma_c is exact; the dissipative gap per atom
tends to -|p| Gamma.

Finite sizes approach that limit linearly in 1/L; gap_scaling_fit recovers
the limit and the first correction from exact gap samples by polynomial
extrapolation in 1/L.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import LiouvParams, ValidationError, as_sector


def condensate_level(params):
    """Index of the macroscopically occupied level: 0 for p > 0, N-1 for p < 0."""
    if params.p == 0.0:
        raise ValidationError(
            "no condensate forms at p = 0; the thermodynamic limit is degenerate there"
        )
    return 0 if params.p > 0 else params.n_levels - 1


def quasiboson_blocks(alpha, params, eta=1.0):
    """Linearized 2x2 dynamical blocks of the quasiboson pair at level alpha.

    alpha indexes a non-condensate level.  Keeping the condensate occupation
    at eta * L turns the jumps between alpha and the condensate into linear
    loss and gain of the alpha mode with collective rates

        gamma_loss = x[cond, alpha] * eta * L,
        gamma_gain = x[alpha, cond] * eta * L.

    Returns (creation_block, annihilation_block): the adjoint-action
    matrices on the creation doublet (first-copy creation, second-copy
    annihilation) and its conjugate doublet.  Each block holds one stable
    and one unstable rapidity.
    """
    N, L = params.n_levels, params.n_atoms
    cond = condensate_level(params)
    if not 0 <= alpha < N or alpha == cond:
        raise ValidationError(
            f"alpha must name a non-condensate level in [0, {N}), got {alpha}"
        )
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"condensate fraction must lie in (0, 1], got {eta}")
    x = params.x_table()
    g_loss = x[cond][alpha] * eta * L
    g_gain = x[alpha][cond] * eta * L
    d_eps = params.eps[alpha] - params.eps[cond]
    half = 0.5 * (g_loss + g_gain)
    creation = np.array(
        [[-1j * d_eps - half, g_loss], [-g_gain, -1j * d_eps + half]], dtype=complex
    )
    annihilation = np.array(
        [[1j * d_eps + half, -g_gain], [g_loss, 1j * d_eps - half]], dtype=complex
    )
    return creation, annihilation


def quadratic_block_rates(alpha, params, eta=1.0):
    """Stable rapidity pair (theta_e, theta_f) of the quasiboson at level alpha.

    theta_e comes from the creation doublet, theta_f from the annihilation
    doublet; both are the block eigenvalue with negative real part.  At full
    condensation they equal -+ i d_eps - |p| Gamma L exactly and satisfy
    theta_e + theta_f = -2 |p| Gamma L eta.
    """
    creation, annihilation = quasiboson_blocks(alpha, params, eta)
    theta_e = min(np.linalg.eigvals(creation), key=lambda v: v.real)
    theta_f = min(np.linalg.eigvals(annihilation), key=lambda v: v.real)
    return complex(theta_e), complex(theta_f)


def rate_sum_deviation(alpha, params, eta=1.0):
    """|theta_e + theta_f + 2 |p| Gamma L eta|, zero up to rounding."""
    theta_e, theta_f = quadratic_block_rates(alpha, params, eta)
    target = -2.0 * abs(params.p) * params.gamma * params.n_atoms * eta
    return abs(theta_e + theta_f - target)


def pair_vacuum_constant(alpha, params, eta=1.0, n_cut=240):
    """Vacuum constant of the diagonalized quasiboson pair, per unit eta L.

    The pair Liouvillian conserves the excitation imbalance n - nbar, and on
    the symmetric ladder n = nbar it reduces to a tridiagonal matrix whose
    eigenvalue closest to zero is the constant left over by the non-unitary
    diagonalization.  With the condensate selection rule the gain/loss ratio
    lies below one, the ladder carries a normalizable kernel vector with
    geometric weights, and the constant vanishes; the opposite condensate
    choice returns -2 |p| Gamma instead.
    """
    N = params.n_levels
    cond = condensate_level(params)
    if not 0 <= alpha < N or alpha == cond:
        raise ValidationError(
            f"alpha must name a non-condensate level in [0, {N}), got {alpha}"
        )
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"condensate fraction must lie in (0, 1], got {eta}")
    x = params.x_table()
    loss = x[cond][alpha]
    gain = x[alpha][cond]
    n = np.arange(n_cut + 1)
    ladder = (
        np.diag(-(loss + gain) * n - gain)
        + np.diag(loss * np.arange(1, n_cut + 1), 1)
        + np.diag(gain * np.arange(1, n_cut + 1), -1)
    )
    vals = np.linalg.eigvals(ladder)
    return complex(vals[np.argmax(vals.real)])


@dataclass(frozen=True)
class TLPrediction:
    """Thermodynamic-limit quasiboson rates and the gap rate per atom."""

    condensate_level: int
    quasiboson_rates: tuple
    gap_per_atom: float
    vacuum_constant_zero: bool


def tl_prediction(params):
    """Exact thermodynamic-limit prediction for the slow spectrum.

    Returns the condensate level, the 2(N-1) quasiboson rates ordered by
    level (stable creation branch first), the dissipative gap per atom
    -|p| Gamma, and whether the condensate choice zeroes the vacuum
    constant (checked numerically).  Undefined at p = 0.
    """
    if params.p == 0.0:
        raise ValidationError("the thermodynamic limit is degenerate at p = 0")
    cond = condensate_level(params)
    rates = []
    const_ok = True
    for alpha in range(params.n_levels):
        if alpha == cond:
            continue
        rates.extend(quadratic_block_rates(alpha, params))
        const = pair_vacuum_constant(alpha, params)
        const_ok = const_ok and abs(const) <= 1e-8 * params.gamma
    return TLPrediction(
        cond, tuple(rates), -abs(params.p) * params.gamma, bool(const_ok)
    )


def first_order_gap_coefficient(sector, params):
    """Known 1/L coefficient of the gap per atom in the leading decay sectors.

    For the three-level model at p > 0 the two slowest symmetry sectors obey
    gap(L)/L -> -p Gamma + c1 / L with

        c1 = (+1/2 - 3 p / 2) Gamma   in sector (1, -1, 0),
        c1 = (-1/2 - 3 p / 2) Gamma   in sector (1, 0, -1),

    at Gamma0 = Gamma; away from that the sector constant shifts the
    eigenvalue real part by (Gamma - Gamma0)/2 sum s^2, which lands in the
    1/L coefficient of the per-atom gap.
    """
    sector = as_sector(sector)
    if params.n_levels != 3 or params.p <= 0.0:
        raise ValidationError(
            "the first-order coefficient is tabulated for the three-level model at p > 0"
        )
    shift = 0.5 * (params.gamma - params.gamma0) * sum(v * v for v in sector.s)
    if sector.s == (1, -1, 0):
        return (0.5 - 1.5 * params.p) * params.gamma + shift
    if sector.s == (1, 0, -1):
        return (-0.5 - 1.5 * params.p) * params.gamma + shift
    raise ValidationError(
        f"no tabulated first-order coefficient for sector {sector.s}"
    )


@dataclass(frozen=True)
class GapFit:
    """Polynomial extrapolation of gap samples in powers of 1/L.

    coefficients[k] multiplies (1/L)^k; coefficients[0] is the
    thermodynamic-limit gap per atom.  stderr holds one standard error per
    coefficient (NaN when the fit leaves no degrees of freedom), cond the
    condition number of the centered design matrix.
    """

    coefficients: tuple
    stderr: tuple
    cond: float
    dof: int
    rss: float

    @property
    def limit(self):
        return self.coefficients[0]

    @property
    def slope(self):
        return self.coefficients[1]


def gap_scaling_fit(L_values, gap_per_atom, degree=4):
    """Least-squares fit of gap/L samples to a polynomial in u = 1/L.

    The design matrix is built on centered and scaled u for conditioning and
    the coefficients mapped back to raw powers of u afterwards; standard
    errors follow from the residual variance and the back-transformed
    covariance.
    """
    L = np.asarray(L_values, dtype=float)
    g = np.asarray(gap_per_atom, dtype=float)
    if L.ndim != 1 or L.shape != g.shape or L.size == 0:
        raise ValidationError("L_values and gap_per_atom must be matching 1-d arrays")
    if np.any(L <= 0):
        raise ValidationError("system sizes must be positive")
    if degree < 1:
        raise ValidationError(f"fit degree must be at least 1, got {degree}")
    u = 1.0 / L
    u0 = float(u.mean())
    s = float(u.std()) or 1.0
    uc = (u - u0) / s
    X = np.vander(uc, degree + 1, increasing=True)
    cond = float(np.linalg.cond(X))
    beta, _, _, _ = np.linalg.lstsq(X, g, rcond=None)
    resid = g - X @ beta
    rss = float(resid @ resid)
    dof = int(g.size - (degree + 1))
    T = np.zeros((degree + 1, degree + 1))
    for k in range(degree + 1):
        for m in range(k + 1):
            T[m, k] = math.comb(k, m) * (-u0) ** (k - m) / s**k
    coef = T @ beta
    if dof > 0:
        sigma2 = rss / dof
        cov_beta = sigma2 * np.linalg.inv(X.T @ X)
        stderr = np.sqrt(np.diag(T @ cov_beta @ T.T))
    else:
        stderr = np.full(degree + 1, np.nan)
    return GapFit(tuple(coef), tuple(stderr), cond, dof, rss)


def collect_gap_samples(params, sector, L_values, count=10):
    """Exact sector gap per atom at each system size, by targeted eigenvalues.

    For each L the sector block is built at n_atoms = L and the eigenvalue
    of largest real part located near the thermodynamic anchor
    -i <eps, s> - p Gamma L.  Returns an array of gap(L)/L values.
    """
    from . import ed

    sector = as_sector(sector)
    out = []
    for L in L_values:
        pl = replace(params, n_atoms=int(L))
        anchor = complex(
            -1j * float(np.dot(pl.eps, sector.s)) - pl.p * pl.gamma * pl.n_atoms
        )
        matrix = ed.build_sector_matrix(pl, sector)
        if matrix.dim <= count + 2:
            vals = ed.full_spectrum(matrix).eigenvalues
        else:
            vals = ed.target_eigenvalues_near(matrix, anchor, count=count).eigenvalues
        gap = vals[np.argmax(vals.real)]
        out.append(gap.real / pl.n_atoms)
    return np.asarray(out)


@dataclass(frozen=True)
class ExtrapolationReport:
    passed: bool
    fit: GapFit
    limit_target: float
    slope_target: float
    limit_dev: float
    slope_dev: float


def finite_size_extrapolation_check(params, sector, L_values, degree=4,
                                    limit_tol=1e-3, slope_tol=1e-2, count=10):
    """Fit exact gap samples and compare against the thermodynamic limit.

    Checks that the extrapolated gap per atom matches -p Gamma within
    limit_tol and the 1/L slope matches the tabulated first-order
    coefficient within slope_tol (both absolute, in units of Gamma).
    """
    sector = as_sector(sector)
    samples = collect_gap_samples(params, sector, L_values, count=count)
    fit = gap_scaling_fit(L_values, samples, degree=degree)
    limit_target = -params.p * params.gamma
    slope_target = first_order_gap_coefficient(sector, params)
    limit_dev = abs(fit.limit - limit_target)
    slope_dev = abs(fit.slope - slope_target)
    passed = bool(
        limit_dev <= limit_tol * params.gamma and slope_dev <= slope_tol * params.gamma
    )
    return ExtrapolationReport(passed, fit, limit_target, slope_target, limit_dev, slope_dev)


def fit_report(sector, L_values, samples, fit):
    """JSON-ready fit report dict: sector, coefficients, stderr, samples."""
    return {
        "sector": list(as_sector(sector).s),
        "coefficients": [float(c) for c in fit.coefficients],
        "stderr": [float(s) for s in fit.stderr],
        "samples": [[int(L), float(g)] for L, g in zip(L_values, samples)],
        "cond": float(fit.cond),
        "dof": int(fit.dof),
        "rss": float(fit.rss),
    }


def fit_report_csv_rows(L_values, samples, fit):
    """Plot-ready rows (L, inv_L, gap_per_atom, fitted) for one fit."""
    rows = []
    for L, g in zip(L_values, samples):
        u = 1.0 / float(L)
        fitted = sum(c * u**k for k, c in enumerate(fit.coefficients))
        rows.append((int(L), u, float(g), float(fitted)))
    return rows

"""Parameters, weak-symmetry sectors and bases for collective Lindblad models.

A gas of L identical N-level atoms coupled collectively to its environment is
described, once the density matrix is vectorized, by a non-Hermitian operator
acting on two copies of the totally symmetric su(N) irrep.  Each copy is a
bosonic Fock space with N modes and L quanta (Schwinger representation), so a
basis state is a pair of occupation vectors (k, kbar).  The difference
s = k - kbar is conserved by the dynamics, which makes the operator block
diagonal in integer vectors s = (s_1, ..., s_N) with sum(s) = 0.

This module owns the parameter set and the combinatorics of those blocks:
sector enumeration, sector dimensions, basis states, the counts of spectral
parameters used by the Richardson-Gaudin solver and the effective charges of
its rational N=3 form.

Conventions fixed here and relied on by every other module:

* states inside a sector are labelled by the first-copy occupations
  k = (k_1, ..., k_N), sum(k) = L; the second copy is implied, kbar = k - s;
* basis order is lexicographic in (k_2, ..., k_N) and sector order is
  lexicographic in (s_2, ..., s_N), so output files are diff stable.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when parameters, sectors or CLI inputs violate a precondition."""


class NumericError(RuntimeError):
    """Raised when an iterative solver or eigensolver fails to certify."""


class SingularityError(NumericError):
    """Raised when spectral parameters collide or hit a pole of the equations."""


class ResourceLimitError(RuntimeError):
    """Raised when a requested problem size exceeds the configured budget."""


# Default memory budget for a single dense complex matrix, in entries.
# 2**27 entries of complex128 is 2 GiB.
DEFAULT_BUDGET_ENTRIES = 2**27


def check_memory_budget(n_entries, budget=None, what="matrix"):
    """Reject an allocation of n_entries complex numbers over the budget."""
    limit = DEFAULT_BUDGET_ENTRIES if budget is None else budget
    if n_entries > limit:
        raise ResourceLimitError(
            f"{what} needs {n_entries} complex entries, budget is {limit}; "
            "reduce n_atoms or raise the budget"
        )


@dataclass(frozen=True)
class LiouvParams:
    """Model parameters.

    Attributes
    ----------
    n_levels : int
        Number N >= 2 of atomic levels.
    n_atoms : int
        Number L >= 1 of atoms; also the boson number of each copy.
    eps : tuple of float
        Level energies (eps_1, ..., eps_N).
    gamma : float
        Overall collective rate Gamma > 0 of the level-changing jumps.
    gamma0 : float
        Rate Gamma_0 >= 0 of the collective dephasing jumps.
    p : float
        Pump asymmetry, |p| <= 1.  Jumps alpha <- beta with alpha < beta
        (decay towards lower levels) occur at rate Gamma (1 + p), the
        reversed ones at Gamma (1 - p).
    """

    n_levels: int
    n_atoms: int
    eps: tuple = ()
    gamma: float = 1.0
    gamma0: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if int(self.n_levels) != self.n_levels or self.n_levels < 2:
            raise ValidationError(f"n_levels must be an integer >= 2, got {self.n_levels}")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValidationError(f"n_atoms must be an integer >= 1, got {self.n_atoms}")
        object.__setattr__(self, "n_levels", int(self.n_levels))
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        eps = tuple(float(e) for e in self.eps) if self.eps else (0.0,) * self.n_levels
        if len(eps) != self.n_levels:
            raise ValidationError(
                f"eps has {len(eps)} entries, expected n_levels = {self.n_levels}"
            )
        object.__setattr__(self, "eps", eps)
        for name in ("gamma", "gamma0", "p"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        if self.gamma <= 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if self.gamma0 < 0:
            raise ValidationError(f"gamma0 must be >= 0, got {self.gamma0}")
        if abs(self.p) > 1:
            raise ValidationError(f"p must satisfy |p| <= 1, got {self.p}")

    def x_table(self):
        """Jump-rate table x[a, b] for the jump b -> a (0-based levels).

        Diagonal entries hold the dephasing rate Gamma_0, entries below the
        diagonal (a > b, pumping up) Gamma (1 - p), entries above (a < b,
        decay down) Gamma (1 + p).
        """
        n = self.n_levels
        x = np.empty((n, n))
        x[:] = self.gamma * (1.0 - self.p)
        x[np.triu_indices(n, 1)] = self.gamma * (1.0 + self.p)
        np.fill_diagonal(x, self.gamma0)
        return x

    def to_dict(self):
        return {
            "n_levels": self.n_levels,
            "n_atoms": self.n_atoms,
            "eps": list(self.eps),
            "gamma": self.gamma,
            "gamma0": self.gamma0,
            "p": self.p,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {"n_levels", "n_atoms", "eps", "gamma", "gamma0", "p"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown parameter keys: {sorted(unknown)}")
        missing = {"n_levels", "n_atoms"} - set(d)
        if missing:
            raise ValidationError(f"missing parameter keys: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"parameter JSON does not parse: {exc}") from exc
        if not isinstance(d, dict):
            raise ValidationError("parameter JSON must be an object")
        return cls.from_dict(d)


@dataclass(frozen=True)
class SectorLabel:
    """Weak-symmetry sector s = (s_1, ..., s_N), sum(s) = 0."""

    s: tuple

    def __post_init__(self):
        s = tuple(int(v) for v in self.s)
        if any(int(v) != v for v in self.s):
            raise ValidationError(f"sector entries must be integers, got {self.s}")
        if sum(s) != 0:
            raise ValidationError(f"sector entries must sum to 0, got {s}")
        object.__setattr__(self, "s", s)

    def __iter__(self):
        return iter(self.s)

    def __len__(self):
        return len(self.s)

    def __getitem__(self, i):
        return self.s[i]

    def conjugate(self):
        """Sector of the conjugate-transposed density matrix component."""
        return SectorLabel(tuple(-v for v in self.s))

    def tag(self):
        """Compact file-name tag such as 's1.-1.0'."""
        return "s" + ".".join(str(v) for v in self.s)


def as_sector(s):
    """Coerce a tuple, list or SectorLabel to a SectorLabel."""
    if isinstance(s, SectorLabel):
        return s
    return SectorLabel(tuple(s))


@dataclass(frozen=True)
class SectorBasisState:
    """First-copy occupations k of one basis state; kbar follows from sector."""

    k: tuple

    def jbar(self, sector):
        """Occupations of the second copy, kbar = k - s."""
        return tuple(ka - sa for ka, sa in zip(self.k, as_sector(sector).s))


def _check_sector_range(L, sector):
    for v in sector.s:
        if abs(v) > L:
            raise ValidationError(f"sector {sector.s} has |s_alpha| > n_atoms = {L}")


def enumerate_sectors(params):
    """All nonempty weak-symmetry sectors of the model.

    Sectors are returned lexicographically ordered in (s_2, ..., s_N);
    s_1 = -(s_2 + ... + s_N) is determined.  A sector is nonempty iff
    sum of its positive entries is at most L.

    Parameters
    ----------
    params : LiouvParams

    Returns
    -------
    list of SectorLabel
    """
    N, L = params.n_levels, params.n_atoms
    out = []

    def rec(prefix, pos_sum, total):
        if len(prefix) == N - 1:
            s1 = -total
            if abs(s1) <= L and pos_sum + max(s1, 0) <= L:
                out.append(SectorLabel((s1,) + prefix))
            return
        for v in range(-L, L + 1):
            if pos_sum + max(v, 0) > L:
                continue
            rec(prefix + (v,), pos_sum + max(v, 0), total + v)

    rec((), 0, 0)
    return out


def sector_dimension(L, s):
    """Number of basis states in a sector.

    For N = 3 this is the closed form (L - m + 1)(L - m + 2) / 2 with
    m = max(|s_2|, |s_3|, |s_2 + s_3|); for other N the states are counted
    directly.  Empty sectors report 0.
    """
    sector = as_sector(s)
    _check_sector_range(L, sector)
    N = len(sector)
    pos = sum(max(v, 0) for v in sector.s)
    if pos > L:
        return 0
    if N == 3:
        m = max(abs(sector[1]), abs(sector[2]), abs(sector[1] + sector[2]))
        return (L - m + 1) * (L - m + 2) // 2
    return sum(1 for _ in enumerate_basis(L, sector))


def enumerate_basis(L, s):
    """Basis states of a sector, lexicographic in (k_2, ..., k_N).

    Each state is the first-copy occupation vector k with sum(k) = L and
    k >= max(s, 0) elementwise (so that kbar = k - s is also a valid
    occupation vector).
    """
    sector = as_sector(s)
    _check_sector_range(L, sector)
    N = len(sector)
    lo = [max(v, 0) for v in sector.s]
    out = []

    def gen(idx, prefix, used):
        if idx == N:
            k1 = L - used
            if k1 >= lo[0]:
                out.append(SectorBasisState((k1,) + prefix))
            return
        lo_rest = sum(lo[j] for j in range(idx + 1, N))
        hi = L - used - lo[0] - lo_rest
        for v in range(lo[idx], hi + 1):
            gen(idx + 1, prefix + (v,), used + v)

    gen(1, (), 0)
    return out


def basis_index(L, s):
    """Dict mapping occupation tuple k -> position in enumerate_basis order."""
    return {st.k: i for i, st in enumerate(enumerate_basis(L, s))}


def spectral_counts(L, s):
    """Richardson-Gaudin root counts (M_1, ..., M_{N-1}) of a sector.

    M_a = L - (s_1 + ... + s_a).  Each count lies in [0, 2L].
    """
    sector = as_sector(s)
    _check_sector_range(L, sector)
    counts = []
    acc = 0
    for v in sector.s[:-1]:
        acc += v
        counts.append(L - acc)
    if any(m < 0 or m > 2 * L for m in counts):
        raise ValidationError(f"sector {sector.s} yields root counts {counts} outside [0, 2L]")
    return tuple(counts)


def effective_charges(s):
    """Charges of the rational N = 3 equations, (Qp_e, Qm_e, Qp_w, Qm_w).

    The e-type roots see charges Qp_e = 2 + (s_1 - s_2)/2 at +i and
    Qm_e = (s_1 - s_2)/2 at -i; the w-type roots see Qp_w = 2 + (s_2 - s_3)/2
    and Qm_w = (s_2 - s_3)/2.  Qp - Qm = 2 in both families.
    """
    sector = as_sector(s)
    if len(sector) != 3:
        raise ValidationError(f"effective charges are defined for N = 3, got N = {len(sector)}")
    s1, s2, s3 = sector.s
    qm_e = (s1 - s2) / 2.0
    qm_w = (s2 - s3) / 2.0
    return (2.0 + qm_e, qm_e, 2.0 + qm_w, qm_w)


def occupation_basis(L, N):
    """All occupation vectors of one copy (N modes, L quanta), canonical order.

    This equals the basis of the all-zero sector, so indices agree with
    enumerate_basis(L, (0, ..., 0)).
    """
    return [st.k for st in enumerate_basis(L, SectorLabel((0,) * N))]


def full_space_dimension(L, N):
    """Dimension of the doubled space, the square of one copy's dimension."""
    return math.comb(L + N - 1, N - 1) ** 2

"""Exact spectra, steady states and dissipative gaps of collective
N-level Liouvillians, via three independent routes: sector-wise exact
diagonalization, trigonometric spectral-parameter equations, and the
quadratic thermodynamic-limit theory."""

from .model import (
    LiouvParams,
    NumericError,
    ResourceLimitError,
    SectorBasisState,
    SectorLabel,
    SingularityError,
    ValidationError,
    as_sector,
    effective_charges,
    enumerate_basis,
    enumerate_sectors,
    full_space_dimension,
    occupation_basis,
    sector_dimension,
    spectral_counts,
)

from . import bethe, cli, ed, meanfield, rg

__version__ = "0.1.0"

__all__ = [
    "LiouvParams",
    "NumericError",
    "ResourceLimitError",
    "SectorBasisState",
    "SectorLabel",
    "SingularityError",
    "ValidationError",
    "as_sector",
    "bethe",
    "cli",
    "ed",
    "effective_charges",
    "enumerate_basis",
    "enumerate_sectors",
    "full_space_dimension",
    "meanfield",
    "occupation_basis",
    "rg",
    "sector_dimension",
    "spectral_counts",
    "__version__",
]

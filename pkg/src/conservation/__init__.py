from src.conservation.densities import DensitySet, densities, mass_density, momentum_density, stress_tensor
from src.conservation.residuals import ParaSetting, ParaTerms, ResidualLedger, flat_flux_residual, para_flux_residual, para_terms
from src.conservation.weighted import (
    BilinearSymbol,
    WeightedDensities,
    shell_symbol_pair,
    unit_symbol,
    weighted_flux_residual,
    weighted_mass,
)

__all__ = [
    "BilinearSymbol",
    "DensitySet",
    "ParaSetting",
    "ParaTerms",
    "ResidualLedger",
    "WeightedDensities",
    "densities",
    "flat_flux_residual",
    "mass_density",
    "momentum_density",
    "para_flux_residual",
    "para_terms",
    "shell_symbol_pair",
    "stress_tensor",
    "unit_symbol",
    "weighted_flux_residual",
    "weighted_mass",
]

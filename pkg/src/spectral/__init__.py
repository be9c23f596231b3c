from src.spectral.grid import BoxGrid, Field, SpectralRep, set_fft_workers
from src.spectral.operators import (
    check_support,
    dealias,
    differentiate,
    flat_propagator,
    fractional_multiplier,
    gradient,
    hs_norm,
    inner,
    l2_norm,
    mass_fraction_in_central_half_box,
    product,
    to_physical,
    to_spectral,
    translate,
)
from src.spectral.snapshot import read_snapshot, write_snapshot

__all__ = [
    "BoxGrid",
    "Field",
    "SpectralRep",
    "set_fft_workers",
    "check_support",
    "dealias",
    "differentiate",
    "flat_propagator",
    "fractional_multiplier",
    "gradient",
    "hs_norm",
    "inner",
    "l2_norm",
    "mass_fraction_in_central_half_box",
    "product",
    "to_physical",
    "to_spectral",
    "translate",
    "read_snapshot",
    "write_snapshot",
]

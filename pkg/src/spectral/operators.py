from __future__ import annotations

import logging
from typing import Sequence, Tuple

import numpy as np

from src.common.errors import SupportCheckError
from src.spectral.grid import BoxGrid, Field, SpectralRep, forward, inverse

logger = logging.getLogger(__name__)

SUPPORT_MASS_FRACTION = 0.999


# -----------------------------
# transforms
# -----------------------------
def to_spectral(f: Field) -> SpectralRep:
    return SpectralRep(f.grid, forward(f.values))


def to_physical(F: SpectralRep) -> Field:
    return Field(F.grid, inverse(F.coefficients))


def apply_multiplier(f: Field, symbol: np.ndarray) -> Field:
    """Fourier multiplier with a symbol sampled on (or broadcastable to) the wavenumber grid."""
    return Field(f.grid, inverse(forward(f.values) * symbol))


# -----------------------------
# Fourier multipliers
# -----------------------------
def differentiate(f: Field, axis: int) -> Field:
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {f.grid.dim}")
    return apply_multiplier(f, 1j * f.grid.wavenumbers[axis])


def gradient(f: Field) -> Tuple[Field, ...]:
    F = forward(f.values)
    return tuple(Field(f.grid, inverse(1j * k * F)) for k in f.grid.wavenumbers)


def laplacian(f: Field) -> Field:
    return apply_multiplier(f, -f.grid.xi_squared)


def fractional_symbol(grid: BoxGrid, s: float) -> np.ndarray:
    """|ξ|^s on the lattice. Points with |ξ| = 0 get 1 when s = 0 and 0 otherwise."""
    if s <= -grid.dim:
        raise ValueError(f"fractional exponent must exceed -{grid.dim}, got {s}")
    if s == 0:
        return np.ones(grid.shape)
    xi = grid.xi_abs
    out = np.zeros(grid.shape)
    nz = xi > 0
    out[nz] = xi[nz] ** s
    return out


def fractional_multiplier(f: Field, s: float) -> Field:
    return apply_multiplier(f, fractional_symbol(f.grid, s))


def flat_propagator(f: Field, t: float) -> Field:
    """e^{itΔ}: multiplies each coefficient by e^{-it|ξ|²}."""
    if t == 0:
        return f
    return apply_multiplier(f, np.exp(-1j * t * f.grid.xi_squared))


def translate(f: Field, x0: Sequence[float]) -> Field:
    """f(x - x0) with periodic wrap-around; x0 need not be a grid point."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != f.grid.dim:
        raise ValueError(f"shift has {x0.shape[0]} components, grid has dim {f.grid.dim}")
    phase = np.zeros(f.grid.shape)
    for k, a in zip(f.grid.wavenumbers, x0):
        phase = phase + k * a
    return apply_multiplier(f, np.exp(-1j * phase))


def japanese_bracket(grid: BoxGrid) -> np.ndarray:
    return np.sqrt(1.0 + grid.xi_squared)


# -----------------------------
# norms / pairings
# -----------------------------
def l2_norm(f: Field) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(np.abs(f.values) ** 2)))


def hs_norm(f: Field, s: float) -> float:
    F = forward(f.values)
    w = japanese_bracket(f.grid) ** (2.0 * s)
    return float(np.sqrt(f.grid.volume * np.sum(w * np.abs(F) ** 2)))


def inner(f: Field, g: Field) -> complex:
    """∫ f ḡ dx."""
    f.grid.require_same(g.grid)
    return complex(f.grid.cell_volume * np.sum(f.values * np.conj(g.values)))


def integrate(values: np.ndarray, grid: BoxGrid) -> complex:
    return complex(grid.cell_volume * np.sum(values))


# -----------------------------
# aliasing control
# -----------------------------
def dealias(f: Field) -> Field:
    return apply_multiplier(f, f.grid.dealias_mask)


def dealias_values(values: np.ndarray, grid: BoxGrid) -> np.ndarray:
    return inverse(forward(values) * grid.dealias_mask)


def product(*factors: Field, dealias_output: bool = True) -> Field:
    """Pointwise product of 2/3-truncated factors."""
    if not factors:
        raise ValueError("product needs at least one factor")
    grid = factors[0].grid
    out = np.ones(grid.shape, dtype=np.complex128)
    for f in factors:
        grid.require_same(f.grid)
        out = out * dealias_values(f.values, grid)
    if dealias_output:
        out = dealias_values(out, grid)
    return Field(grid, out)


# -----------------------------
# support check (periodic box standing in for R^n)
# -----------------------------
def central_half_box_mask(grid: BoxGrid) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    half = 0.5 * grid.box_length
    for x in grid.coordinates:
        mask = mask & (np.abs(x - half) < 0.25 * grid.box_length)
    return mask


def mass_fraction_in_central_half_box(f: Field) -> float:
    total = float(np.sum(np.abs(f.values) ** 2))
    if total == 0.0:
        return 1.0
    inside = float(np.sum(np.abs(f.values[central_half_box_mask(f.grid)]) ** 2))
    return inside / total


def check_support(f: Field, *, strict: bool = False, label: str = "field") -> float:
    frac = mass_fraction_in_central_half_box(f)
    if frac < SUPPORT_MASS_FRACTION:
        msg = f"{label}: only {frac:.6f} of the mass lies in the central half-box (need {SUPPORT_MASS_FRACTION})"
        if strict:
            raise SupportCheckError(msg)
        logger.warning(msg)
    return frac

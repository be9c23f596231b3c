from __future__ import annotations

import numpy as np

from src.spectral.grid import BoxGrid, Field, forward, inverse


def band_limited(grid: BoxGrid, rng: np.random.Generator, *, max_mode: int = 3, amplitude: float = 1.0) -> Field:
    """Random field whose coefficients live on |m_a| <= max_mode."""
    m = grid.lattice_index_1d
    keep = np.abs(m) <= max_mode
    mask = np.ones(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.points_per_axis
        mask = mask & keep.reshape(shape)
    coeff = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * mask
    values = inverse(coeff)
    scale = amplitude / max(np.max(np.abs(values)), 1e-300)
    return Field(grid, values * scale)


def gaussian(grid: BoxGrid, *, width: float, center=None, xi0=None, amplitude: float = 1.0) -> Field:
    center = grid.center if center is None else np.asarray(center, dtype=float)
    xi0 = np.zeros(grid.dim) if xi0 is None else np.asarray(xi0, dtype=float)
    r2 = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for x, c, k in zip(grid.coordinates, center, xi0):
        r2 = r2 + (x - c) ** 2
        phase = phase + k * (x - c)
    return Field(grid, amplitude * np.exp(-r2 / (2.0 * width**2) + 1j * phase))


def nyquist_free(f: Field) -> Field:
    return Field(f.grid, inverse(forward(f.values) * f.grid.nyquist_mask))


def rel_err(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))

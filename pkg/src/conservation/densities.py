from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.model.paradiff import MetricField
from src.spectral.grid import BoxGrid, Field, forward, inverse
from src.spectral.operators import integrate

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DensitySet:
    """
    Mass, momentum and momentum-flux densities of one snapshot.

        M = |u|²
        P_j = i(ū∂_ju − u∂_jū)
        E_jm = 2Re(∂_ju ∂_mū − u ∂_j∂_mū)

    With a metric g, `P_up[j] = g^{jk}P_k` and `E_up[k, j]` = E^{kj}
    = 2Re(∂^ku ∂^jū − u ∂^j∂^kū), ∂^j = g^{jl}∂_l.
    """

    grid: BoxGrid
    M: np.ndarray
    P: np.ndarray  # (n, *shape)
    E: np.ndarray  # (n, n, *shape)
    P_up: Optional[np.ndarray] = None
    E_up: Optional[np.ndarray] = None
    E_mixed: Optional[np.ndarray] = None  # E^k_j
    time: Optional[float] = None

    @property
    def total_mass(self) -> float:
        return integrate(self.M, self.grid).real

    def total_momentum(self) -> np.ndarray:
        return np.array([integrate(p, self.grid).real for p in self.P])

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.E - np.swapaxes(self.E, 0, 1))))


def derivatives(values: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """∂_j u stacked, (n, *shape)."""
    U = forward(values)
    return np.stack([inverse(1j * k * U) for k in grid.wavenumbers])


def second_derivatives(values: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """∂_j∂_m u, (n, n, *shape)."""
    U = forward(values)
    ks = grid.wavenumbers
    n = grid.dim
    out = np.empty((n, n) + grid.shape, dtype=np.complex128)
    for j in range(n):
        for m in range(j, n):
            out[j, m] = inverse(-ks[j] * ks[m] * U)
            out[m, j] = out[j, m]
    return out


def spatial_gradient(values: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """Gradient of real or complex arrays; a leading index axis is kept in front."""
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    V = forward(values, axes=axes)
    return np.stack([inverse(1j * k * V, axes=axes) for k in grid.wavenumbers])


def divergence_values(vectors: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """∂_j w^j for (n, *shape); real input yields real output."""
    out = sum(inverse(1j * k * forward(vectors[j])) for j, k in enumerate(grid.wavenumbers))
    return out.real if np.isrealobj(vectors) else out


def mass_density(u: Field) -> np.ndarray:
    return np.abs(u.values) ** 2


def momentum_density(u: Field, du: Optional[np.ndarray] = None) -> np.ndarray:
    du = derivatives(u.values, u.grid) if du is None else du
    return -2.0 * np.imag(np.conj(u.values) * du)


def stress_tensor(u: Field, g: Optional[MetricField] = None) -> np.ndarray:
    """
    E^k_j = 2Re(g^{kl}∂_lu ∂_jū − u ∂_j(g^{kl}∂_lū)); the flat E_kj when g is None.
    """
    grid = u.grid
    v = u.values
    du = derivatives(v, grid)
    if g is None:
        d2 = second_derivatives(v, grid)
        return 2.0 * np.real(du[:, None] * np.conj(du)[None, :] - v * np.conj(d2))
    gdu = g.apply(du)  # ∂^k u
    d_gdu = spatial_gradient(np.conj(gdu), grid)  # [j, k] = ∂_j(g^{kl}∂_lū)
    return 2.0 * np.real(gdu[:, None] * np.conj(du)[None, :] - v * np.swapaxes(d_gdu, 0, 1))


def densities(u: Field, g: Optional[MetricField] = None, *, time: Optional[float] = None) -> DensitySet:
    grid = u.grid
    du = derivatives(u.values, grid)
    M = mass_density(u)
    P = momentum_density(u, du)
    E = stress_tensor(u)
    P_up = E_up = mixed = None
    if g is not None:
        grid.require_same(g.grid)
        P_up = g.apply(P)
        mixed = stress_tensor(u, g)  # E^k_m
        E_up = np.einsum("jm...,km...->kj...", g.components, mixed)
    return DensitySet(grid=grid, M=M, P=P, E=E, P_up=P_up, E_up=E_up, E_mixed=mixed, time=time)

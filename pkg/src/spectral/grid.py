from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.fft as sfft

from src.common.errors import BudgetError, GridMismatchError

logger = logging.getLogger(__name__)

DEFAULT_POINT_BUDGET = 2**21

_FFT_WORKERS: Optional[int] = None


def set_fft_workers(n: Optional[int]) -> None:
    """Worker count for every FFT in the package (None = scipy default)."""
    global _FFT_WORKERS
    _FFT_WORKERS = int(n) if n else None


def fft_workers() -> Optional[int]:
    if _FFT_WORKERS is not None:
        return _FFT_WORKERS
    env = (os.getenv("QNLS_THREADS") or "").strip()
    return int(env) if env else None


@dataclass(frozen=True)
class BoxGrid:
    """
    Periodic box [0, L)^n sampled on N points per axis.

    Wavenumbers live on (2π/L)·ℤ^n, ordered as numpy's fftfreq. The single
    Nyquist mode per axis is given wavenumber 0 so the wavenumber set is
    symmetric under ξ → −ξ.
    """

    dim: int
    points_per_axis: int
    box_length: float
    point_budget: int = field(default=DEFAULT_POINT_BUDGET, compare=False)

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = int(self.points_per_axis)
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {n}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        if n**self.dim > self.point_budget:
            raise BudgetError(f"grid {n}^{self.dim} exceeds the point budget {self.point_budget}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def dx(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.box_length

    @cached_property
    def lattice_index_1d(self) -> np.ndarray:
        """Integer lattice index per axis, Nyquist entry set to 0."""
        n = self.points_per_axis
        m = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64)
        m[n // 2] = 0
        return m

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True away from the Nyquist planes."""
        n = self.points_per_axis
        keep = np.ones(n, dtype=bool)
        keep[n // 2] = False
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            mask &= _along_axis(keep, axis, self.dim)
        return mask

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """Sparse broadcastable ξ_j arrays, one per axis."""
        k = self.dk * self.lattice_index_1d.astype(float)
        return tuple(_along_axis(k, axis, self.dim) for axis in range(self.dim))

    @cached_property
    def xi_squared(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for k in self.wavenumbers:
            out = out + k**2
        return out

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_squared)

    @property
    def xi_max(self) -> float:
        return float(self.xi_abs.max())

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep |m_a| <= N/3 on every axis."""
        cut = self.points_per_axis / 3.0
        keep = np.abs(self.lattice_index_1d) <= cut
        keep[self.points_per_axis // 2] = False
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            mask &= _along_axis(keep, axis, self.dim)
        return mask

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        x = self.dx * np.arange(self.points_per_axis)
        return tuple(_along_axis(x, axis, self.dim) for axis in range(self.dim))

    def mesh(self) -> np.ndarray:
        """Dense coordinates, shape (dim, *shape)."""
        return np.stack(np.broadcast_arrays(*self.coordinates))

    @property
    def center(self) -> np.ndarray:
        return np.full(self.dim, 0.5 * self.box_length)

    def require_same(self, other: "BoxGrid") -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")

    def describe(self) -> dict:
        return {"dim": self.dim, "points_per_axis": self.points_per_axis, "box_length": self.box_length}


def _along_axis(v: np.ndarray, axis: int, dim: int) -> np.ndarray:
    shape = [1] * dim
    shape[axis] = v.shape[0]
    return v.reshape(shape)


@dataclass(frozen=True, eq=False)
class Field:
    """Sampled complex field on a BoxGrid (physical side). Values are read-only."""

    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.complex128, copy=True)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {v.shape} does not match grid shape {self.grid.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: BoxGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: BoxGrid, fn) -> "Field":
        return cls(grid, fn(*grid.coordinates) * np.ones(grid.shape))

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def __add__(self, other: "Field") -> "Field":
        self.grid.require_same(other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self.grid.require_same(other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: complex) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SpectralRep:
    """
    Fourier coefficients with the forward transform carrying 1/N^n, so the
    zero mode equals the field mean and f(x) = Σ_ξ F(ξ) e^{ix·ξ}.
    """

    grid: BoxGrid
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coefficients, dtype=np.complex128, copy=True)
        if c.shape != self.grid.shape:
            raise GridMismatchError(f"coefficient shape {c.shape} does not match grid shape {self.grid.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.volume * np.sum(np.abs(self.coefficients) ** 2)))


def forward(values: np.ndarray, axes=None) -> np.ndarray:
    return sfft.fftn(values, axes=axes, norm="forward", workers=fft_workers())


def inverse(coefficients: np.ndarray, axes=None) -> np.ndarray:
    return sfft.ifftn(coefficients, axes=axes, norm="forward", workers=fft_workers())

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.common.errors import GridMismatchError, ShellRangeError
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.metrics import Metric
from src.model.spec import ModelSpec
from src.spectral.grid import BoxGrid, Field, forward, inverse

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Real symmetric matrix field g^{jk}(x), stored as (n, n, *grid.shape)."""

    grid: BoxGrid
    components: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.components, dtype=float, copy=True)
        n = self.grid.dim
        if c.shape != (n, n) + self.grid.shape:
            raise GridMismatchError(f"metric components have shape {c.shape}, expected {(n, n) + self.grid.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "components", c)

    @classmethod
    def identity(cls, grid: BoxGrid) -> "MetricField":
        n = grid.dim
        eye = np.eye(n).reshape((n, n) + (1,) * n)
        return cls(grid, np.broadcast_to(eye, (n, n) + grid.shape))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def deviation(self) -> np.ndarray:
        n = self.dim
        return self.components - np.eye(n).reshape((n, n) + (1,) * n)

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.components - np.swapaxes(self.components, 0, 1))))

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.deviation())))

    def spectral_radius_max(self) -> float:
        mats = np.moveaxis(self.components, (0, 1), (-2, -1))
        return float(np.max(np.abs(np.linalg.eigvalsh(mats))))

    def gradient(self) -> np.ndarray:
        """∂_a g^{jk}, shape (n_a, n, n, *grid.shape)."""
        G = forward(self.components, axes=tuple(range(2, 2 + self.dim)))
        return np.stack(
            [inverse(1j * k * G, axes=tuple(range(2, 2 + self.dim))).real for k in self.grid.wavenumbers]
        )

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """(g v)^j = g^{jk} v_k for a stacked vector field (n, *shape)."""
        return np.einsum("jk...,k...->j...", self.components, vectors)

    def lerp(self, other: "MetricField", weight: float) -> "MetricField":
        return MetricField(self.grid, (1.0 - weight) * self.components + weight * other.components)


def truncated_metric(
    model: Union[ModelSpec, Metric],
    u: Field,
    k: int,
    *,
    bank: Optional[DyadicFilterBank] = None,
) -> MetricField:
    """
    g_{[<λ]} = P_{<λ} g(P_{≤k−3} u) for λ = 2^k, component-wise.

    Only the deviation g − I is filtered, so u = 0 yields the identity exactly.
    """
    if k < 3:
        raise ShellRangeError(f"truncated metric needs k >= 3, got {k}")
    metric = model.metric if isinstance(model, ModelSpec) else model
    bank = bank or DyadicFilterBank(u.grid)
    u_low = bank.low_pass(u, k - 3)
    dev = metric.deviation(u_low.values)
    low = bank.low_pass_symbol(k - 1)
    n = u.grid.dim
    out = np.zeros((n, n) + u.grid.shape)
    for j in range(n):
        for m in range(j, n):
            comp = inverse(forward(dev[j, m]) * low).real
            out[j, m] = comp
            out[m, j] = comp
    n_eye = np.eye(n).reshape((n, n) + (1,) * n)
    return MetricField(u.grid, out + n_eye)


def full_metric(model: Union[ModelSpec, Metric], u: Field) -> MetricField:
    metric = model.metric if isinstance(model, ModelSpec) else model
    return MetricField(u.grid, metric.evaluate(u.values))

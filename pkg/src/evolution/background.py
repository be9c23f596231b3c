from __future__ import annotations

import logging
from functools import lru_cache
from typing import Optional

import numpy as np

from src.evolution.trajectory import Trajectory, interpolate_field, lagrange_window
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.paradiff import MetricField, truncated_metric
from src.model.spec import ModelSpec
from src.spectral.grid import Field

logger = logging.getLogger(__name__)

# two overlapping four-point windows, t ± h
CACHE_SIZE = 8


class BackgroundCoefficient:
    """
    g_{[<λ]}(u(t)) for a stored background trajectory, λ = 2^k.

    Snapshot metrics are computed lazily and kept in an LRU cache of
    `cache_size` entries, enough for the interpolation windows around the
    current time. Between snapshot times the deviation g − I is interpolated
    with cubic Lagrange weights.
    """

    def __init__(
        self,
        background: Trajectory,
        k: int,
        model: ModelSpec,
        bank: Optional[DyadicFilterBank] = None,
        *,
        cache_size: int = CACHE_SIZE,
    ) -> None:
        self.background = background
        self.k = int(k)
        self.model = model
        self.grid = background.grid
        self.bank = bank or DyadicFilterBank(background.grid)
        self.snapshot_metric = lru_cache(maxsize=int(cache_size))(self._snapshot_metric)

    def _snapshot_metric(self, index: int) -> MetricField:
        return truncated_metric(self.model, self.background.fields[index], self.k, bank=self.bank)

    def deviation_at(self, t: float) -> np.ndarray:
        idx, w = lagrange_window(self.background.times, t)
        return sum(wi * self.snapshot_metric(i).deviation() for i, wi in zip(idx, w))

    def metric_at(self, t: float) -> MetricField:
        n = self.grid.dim
        eye = np.eye(n).reshape((n, n) + (1,) * n)
        return MetricField(self.grid, self.deviation_at(t) + eye)

    def time_derivative_at(self, t: float, step: Optional[float] = None) -> np.ndarray:
        """∂_t g_{[<λ]} by a central difference of the interpolated metric."""
        times = self.background.times
        h = step if step is not None else 0.5 * self.background.spacing
        lo, hi = max(t - h, times[0]), min(t + h, times[-1])
        return (self.deviation_at(hi) - self.deviation_at(lo)) / (hi - lo)


class FieldInterpolant:
    """u(t) between stored snapshots by cubic Lagrange interpolation."""

    def __init__(self, background: Trajectory) -> None:
        self.background = background
        self.grid = background.grid

    def __call__(self, t: float) -> Field:
        return interpolate_field(self.background, t)

    def values(self, t: float) -> np.ndarray:
        return interpolate_field(self.background, t).values

from __future__ import annotations

import numpy as np
import pytest

from src.spectral.grid import BoxGrid


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def grid1d() -> BoxGrid:
    return BoxGrid(dim=1, points_per_axis=64, box_length=2 * np.pi)


@pytest.fixture
def grid2d() -> BoxGrid:
    return BoxGrid(dim=2, points_per_axis=32, box_length=2 * np.pi)


@pytest.fixture
def grid3d() -> BoxGrid:
    return BoxGrid(dim=3, points_per_axis=16, box_length=2 * np.pi)

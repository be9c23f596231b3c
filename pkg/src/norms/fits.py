from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from src.common.errors import ShellRangeError
from src.evolution.solvers import solve_flat
from src.norms.meters import bilinear_l2
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import l2_norm

logger = logging.getLogger(__name__)

# packets start this many widths apart along the direction of travel
PACKET_OFFSET = 3.5
SNAPSHOTS = 64

DEFAULT_SWEEPS = {
    2: {"points_per_axis": 256, "fixed_low": 2, "high": (16, 32, 64), "low": (2, 4, 8), "fixed_high": 64},
    3: {"points_per_axis": 64, "fixed_low": 1, "high": (4, 8, 16), "low": (1, 2, 4), "fixed_high": 16},
}


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    halfwidth: float
    intercept: float
    r_value: float
    x: List[float]
    y: List[float]


@dataclass
class TransversalityFit:
    dim: int
    seed: int
    high: SlopeFit
    low: SlopeFit
    meta: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {"dim": self.dim, "seed": self.seed, "high": asdict(self.high), "low": asdict(self.low), "meta": self.meta}


def loglog_fit(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> SlopeFit:
    """Least-squares slope of log y against log x with its two-sided confidence half-width."""
    if len(x) < 3:
        raise ShellRangeError(f"a scaling fit needs at least 3 dyadic points, got {len(x)}")
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    res = stats.linregress(lx, ly)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, len(x) - 2) * res.stderr)
    return SlopeFit(
        slope=float(res.slope),
        halfwidth=half,
        intercept=float(res.intercept),
        r_value=float(res.rvalue),
        x=[float(v) for v in x],
        y=[float(v) for v in y],
    )


def packet(grid: BoxGrid, width: float, center: np.ndarray, carrier: np.ndarray, phase: float) -> Field:
    """L²-normalised Gaussian packet of the given width and carrier frequency."""
    r2 = np.zeros(grid.shape)
    arg = np.zeros(grid.shape)
    for x, c, k in zip(grid.coordinates, center, carrier):
        r2 = r2 + (x - c) ** 2
        arg = arg + k * (x - c)
    f = Field(grid, np.exp(-r2 / (2.0 * width**2) + 1j * (arg + phase)))
    return f * (1.0 / l2_norm(f))


def transversal_ratio(grid: BoxGrid, low: float, high: float, rng: np.random.Generator) -> float:
    """
    ‖u¹ū²‖_{L²_{t,x}} / (‖u¹(0)‖‖u²(0)‖) for a packet u¹ at frequency scale `low`
    crossed by a packet u² carried at frequency `high` along the first axis.
    Both have width 1/low; the window covers the whole crossing.
    """
    width = 1.0 / low
    offset = PACKET_OFFSET * width
    T = offset / high  # speed 2·high, travel 2·offset
    direction = np.zeros(grid.dim)
    direction[0] = 1.0
    jitter = rng.uniform(-0.2, 0.2, grid.dim) * width
    u1 = packet(grid, width, grid.center + jitter, np.zeros(grid.dim), rng.uniform(0, 2 * np.pi))
    u2 = packet(grid, width, grid.center - offset * direction, high * direction, rng.uniform(0, 2 * np.pi))
    dt = T / SNAPSHOTS
    a, b = solve_flat(u1, T, dt), solve_flat(u2, T, dt)
    return bilinear_l2(a, None, b, None)


def transversality_scaling_fit(
    dim: int,
    *,
    high: Optional[Sequence[float]] = None,
    low: Optional[Sequence[float]] = None,
    fixed_low: Optional[float] = None,
    fixed_high: Optional[float] = None,
    points_per_axis: Optional[int] = None,
    box_length: float = 2 * np.pi,
    seed: int = 0,
) -> TransversalityFit:
    """
    Fit ‖u¹u²‖_{L²} ∝ λ₁^a λ₂^b over dyadic sweeps in λ₂ (λ₁ fixed) and λ₁
    (λ₂ fixed); the sharp transversal bound has a = (n−1)/2 and b = −1/2.
    """
    if dim not in DEFAULT_SWEEPS:
        raise ShellRangeError(f"no transversality sweep for dimension {dim}")
    d = DEFAULT_SWEEPS[dim]
    high = tuple(high or d["high"])
    low = tuple(low or d["low"])
    fixed_low = fixed_low or d["fixed_low"]
    fixed_high = fixed_high or d["fixed_high"]
    if len(high) < 3 or len(low) < 3:
        raise ShellRangeError("each dyadic sweep needs at least 3 frequencies")
    grid = BoxGrid(dim=dim, points_per_axis=points_per_axis or d["points_per_axis"], box_length=box_length)
    if max(high + (fixed_high,)) + 3 * max(low + (fixed_low,)) > grid.xi_max / math.sqrt(dim):
        raise ShellRangeError(f"frequencies up to {max(high)} are not resolved by {grid.points_per_axis} points per axis")
    rng = np.random.default_rng(seed)
    high_fit = loglog_fit(high, [transversal_ratio(grid, fixed_low, h, rng) for h in high])
    low_fit = loglog_fit(low, [transversal_ratio(grid, lo, fixed_high, rng) for lo in low])
    logger.info(
        "transversality fit (%dD): high-frequency slope %.3f ± %.3f, low-frequency slope %.3f ± %.3f",
        dim,
        high_fit.slope,
        high_fit.halfwidth,
        low_fit.slope,
        low_fit.halfwidth,
    )
    return TransversalityFit(
        dim=dim,
        seed=seed,
        high=high_fit,
        low=low_fit,
        meta={"grid": grid.describe(), "fixed_low": fixed_low, "fixed_high": fixed_high, "expected": {"high": -0.5, "low": (dim - 1) / 2}},
    )

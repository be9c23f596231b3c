from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

from src.common.errors import ConfigError
from src.evolution.trajectory import Trajectory
from src.spectral.grid import Field
from src.spectral.operators import flat_propagator, hs_norm

logger = logging.getLogger(__name__)

MIN_PROBES = 3


@dataclass(frozen=True)
class ScatteringProbe:
    """Profiles w(t) = e^{−itΔ}u(t) at probe times and their H^s Cauchy increments."""

    times: List[float]
    candidate: Field
    increments: List[float]
    s: float

    @property
    def ratios(self) -> List[float]:
        return [a / b if b else float("inf") for a, b in zip(self.increments, self.increments[1:])]

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.increments, self.increments[1:]))

    @property
    def min_decrease(self) -> float:
        """Smallest factor by which an increment shrinks between consecutive checkpoints."""
        return min(self.ratios)


def scattering_extract(traj: Trajectory, probe_times: Sequence[float], *, s: float = 1.0) -> ScatteringProbe:
    if len(probe_times) < MIN_PROBES:
        raise ConfigError(f"need at least {MIN_PROBES} probe times, got {len(probe_times)}")
    times = sorted(float(t) for t in probe_times)
    profiles = [flat_propagator(traj.field_at(t), -t) for t in times]
    increments = [hs_norm(b - a, s) for a, b in zip(profiles, profiles[1:])]
    probe = ScatteringProbe(times=times, candidate=profiles[-1], increments=increments, s=s)
    if not probe.monotone:
        logger.warning("scattering increments are not decreasing: %s", increments)
    return probe

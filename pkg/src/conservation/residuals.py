from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.common.errors import StencilError
from src.common.io_utils import write_csv
from src.conservation.densities import (
    DensitySet,
    derivatives,
    densities,
    divergence_values,
    spatial_gradient,
)
from src.evolution.background import BackgroundCoefficient
from src.evolution.solvers import Forcing, shell_forcing
from src.evolution.trajectory import Trajectory
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.paradiff import MetricField
from src.model.spec import ModelSpec
from src.spectral.grid import BoxGrid

logger = logging.getLogger(__name__)

STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
STENCIL_HALF_WIDTH = 2

LEDGER_COLUMNS = ["time", "identity", "l1", "l2", "linf", "source_l2"]


def residual_norms(values: np.ndarray, grid: BoxGrid) -> Dict[str, float]:
    a = np.abs(values)
    return {
        "l1": float(grid.cell_volume * np.sum(a)),
        "l2": float(np.sqrt(grid.cell_volume * np.sum(a**2))),
        "linf": float(np.max(a)),
    }


def require_stencil(traj: Trajectory) -> None:
    if len(traj) < 2 * STENCIL_HALF_WIDTH + 1:
        raise StencilError(f"need at least {2 * STENCIL_HALF_WIDTH + 1} snapshots for the time stencil, got {len(traj)}")
    if not traj.is_uniform():
        raise StencilError("snapshot times are not uniformly spaced")


def central_difference(series: Sequence[np.ndarray], i: int, dt: float) -> np.ndarray:
    """Fourth-order central d/dt at index i."""
    return sum(w * series[i + o] for w, o in zip(STENCIL, range(-2, 3)) if w) / dt


@dataclass
class ResidualLedger:
    """Append-only table of density-flux residuals per time and identity."""

    rows: List[Dict[str, Any]] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def add(self, t: float, identity: str, residual: np.ndarray, grid: BoxGrid, source: Optional[np.ndarray] = None) -> None:
        row: Dict[str, Any] = {"time": float(t), "identity": identity, **residual_norms(residual, grid)}
        row["source_l2"] = residual_norms(source, grid)["l2"] if source is not None else 0.0
        self.rows.append(row)

    @property
    def identities(self) -> List[str]:
        return sorted({r["identity"] for r in self.rows})

    def max_norm(self, identity: Optional[str] = None, norm: str = "l2") -> float:
        vals = [r[norm] for r in self.rows if identity is None or r["identity"] == identity]
        return max(vals, default=0.0)

    def max_momentum(self, prefix: str = "momentum_", norm: str = "l2") -> float:
        return max((r[norm] for r in self.rows if r["identity"].startswith(prefix)), default=0.0)

    def summary(self) -> Dict[str, float]:
        return {name: self.max_norm(name) for name in self.identities}

    def to_csv(self, path: Path) -> Path:
        return write_csv(path, LEDGER_COLUMNS, self.rows)


# -----------------------------
# flat flow
# -----------------------------
def flat_flux_residual(traj: Trajectory) -> ResidualLedger:
    """
    r_M = D_tM − ∂_jP_j and r_P_j = D_tP_j − ∂_mE_jm on interior snapshots,
    D_t the fourth-order central difference.
    """
    require_stencil(traj)
    grid = traj.grid
    dt = traj.spacing
    sets = [densities(f, time=t) for t, f in traj.items()]
    Ms = [d.M for d in sets]
    Ps = [d.P for d in sets]
    ledger = ResidualLedger(meta={"kind": "flat", "dt": dt, "snapshots": len(traj)})
    for i in range(STENCIL_HALF_WIDTH, len(sets) - STENCIL_HALF_WIDTH):
        t = traj.times[i]
        d = sets[i]
        ledger.add(t, "mass", central_difference(Ms, i, dt) - divergence_values(d.P, grid), grid)
        dP = central_difference(Ps, i, dt)
        for j in range(grid.dim):
            ledger.add(t, f"momentum_{j}", dP[j] - divergence_values(d.E[j], grid), grid)
    logger.info("flat flux residual over %d times: %s", len(ledger.rows) // (1 + grid.dim), ledger.summary())
    return ledger


# -----------------------------
# paradifferential flow
# -----------------------------
@dataclass(frozen=True)
class ParaSetting:
    """Everything needed to rebuild g_{[<λ]} and f_λ along a shell trajectory."""

    background: Trajectory
    model: ModelSpec
    k: int
    forcing: Optional[Forcing] = None
    bank: Optional[DyadicFilterBank] = None


@dataclass(frozen=True, eq=False)
class ParaTerms:
    """Densities and source terms of one shell snapshot."""

    time: float
    densities: DensitySet
    metric: MetricField
    quad: np.ndarray  # ∂_av(∂_jg^{ab})∂_bv̄
    G: np.ndarray
    mass_source: Optional[np.ndarray] = None  # 2Im(f v̄)
    momentum_source: Optional[np.ndarray] = None  # F_j

    @property
    def covariant_source(self) -> np.ndarray:
        """G^j + g^{jk}F_k."""
        if self.momentum_source is None:
            return self.G
        return self.G + self.metric.apply(self.momentum_source)


def _forcing_terms(v: np.ndarray, dv: np.ndarray, f: Optional[np.ndarray], grid: BoxGrid):
    """Mass source 2Im(f v̄) and momentum source −2Re(f∂_jv̄) + 2Re(v∂_jf̄)."""
    if f is None:
        return None, None
    df = derivatives(f, grid)
    mass = 2.0 * np.imag(f * np.conj(v))
    mom = -2.0 * np.real(f * np.conj(dv)) + 2.0 * np.real(v * np.conj(df))
    return mass, mom


def para_terms(traj: Trajectory, setting: ParaSetting) -> List[ParaTerms]:
    grid = traj.grid
    grid.require_same(setting.background.grid)
    bank = setting.bank or DyadicFilterBank(grid)
    coef = BackgroundCoefficient(setting.background, setting.k, setting.model, bank)
    f_k = shell_forcing(setting.forcing, setting.k, bank)

    out: List[ParaTerms] = []
    for t, field_t in traj.items():
        g = coef.metric_at(t)
        d = densities(field_t, g, time=t)
        v = field_t.values
        dv = derivatives(v, grid)
        src_mass, src_mom = _forcing_terms(v, dv, f_k(t).values if f_k is not None else None, grid)
        dg = spatial_gradient(g.components, grid).real  # [l, a, b] = ∂_l g^{ab}
        quad = np.einsum("a...,lab...,b...->l...", dv, dg, np.conj(dv)).real
        G = (
            2.0 * g.apply(quad)
            + np.einsum("jk...,k...->j...", coef.time_derivative_at(t), d.P)
            - np.einsum("kjm...,km...->j...", dg, d.E_mixed)
        )
        out.append(ParaTerms(time=t, densities=d, metric=g, quad=quad, G=G, mass_source=src_mass, momentum_source=src_mom))
    return out


def para_flux_residual(
    traj: Trajectory,
    background: Trajectory,
    model: ModelSpec,
    k: int,
    f: Optional[Forcing] = None,
    *,
    bank: Optional[DyadicFilterBank] = None,
) -> ResidualLedger:
    """
    Residuals of the paradifferential density-flux identities for v = v_λ:

        mass:          ∂_tM = ∂_jP^j + 2Im(f v̄)
        momentum_cov:  ∂_tP^j = ∂_kE^{kj} + G^j + g^{jk}F_k
        momentum:      ∂_tP_j = ∂_kE^k_j + 2∂_av(∂_jg^{ab})∂_bv̄ + F_j

    with G^j = 2∂_av(∂^jg^{ab})∂_bv̄ + (∂_tg^{jk})P_k − (∂_kg^{jm})E^k_m and
    F_j = −2Re(f∂_jv̄) + 2Re(v∂_jf̄). ∂_tg comes from differencing the background.
    """
    require_stencil(traj)
    grid = traj.grid
    terms = para_terms(traj, ParaSetting(background, model, k, f, bank))
    dt = traj.spacing
    Ms = [p.densities.M for p in terms]
    P_ups = [p.densities.P_up for p in terms]
    Ps = [p.densities.P for p in terms]

    ledger = ResidualLedger(meta={"kind": "paradifferential", "k": int(k), "dt": dt, "snapshots": len(traj)})
    for i in range(STENCIL_HALF_WIDTH, len(terms) - STENCIL_HALF_WIDTH):
        p = terms[i]
        t, d = p.time, p.densities

        r_mass = central_difference(Ms, i, dt) - divergence_values(d.P_up, grid)
        if p.mass_source is not None:
            r_mass = r_mass - p.mass_source
        ledger.add(t, "mass", r_mass, grid, p.mass_source)

        dP_up = central_difference(P_ups, i, dt)
        dP = central_difference(Ps, i, dt)
        cov = p.covariant_source
        for j in range(grid.dim):
            r_cov = dP_up[j] - divergence_values(d.E_up[:, j], grid) - cov[j]
            ledger.add(t, f"momentum_cov_{j}", r_cov, grid, p.G[j])

            r = dP[j] - divergence_values(d.E_mixed[:, j], grid) - 2.0 * p.quad[j]
            if p.momentum_source is not None:
                r = r - p.momentum_source[j]
            ledger.add(t, f"momentum_{j}", r, grid, 2.0 * p.quad[j])
    logger.info("paradifferential flux residual (k=%d): %s", k, ledger.summary())
    return ledger

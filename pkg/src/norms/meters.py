from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.common.errors import ConfigError, InadmissiblePairError
from src.common.io_utils import write_csv, write_json
from src.evolution.trajectory import Trajectory
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.spectral.grid import Field
from src.spectral.operators import fractional_multiplier, hs_norm, l2_norm, translate

logger = logging.getLogger(__name__)

ADMISSIBILITY_TOLERANCE = 1e-12


# -----------------------------
# helpers
# -----------------------------
def _time_norm(times: Sequence[float], values: Sequence[float], p: float) -> float:
    """‖g‖_{L^p_t} of nonnegative samples by the trapezoid rule; p = ∞ is the max."""
    g = np.asarray(values, dtype=float)
    if math.isinf(p):
        return float(np.max(g))
    if len(g) == 1:
        return 0.0
    return float(trapezoid(g**p, np.asarray(times, dtype=float)) ** (1.0 / p))


def spatial_norm(f: Field, q: float) -> float:
    a = np.abs(f.values)
    if math.isinf(q):
        return float(np.max(a))
    return float((f.grid.cell_volume * np.sum(a**q)) ** (1.0 / q))


def is_admissible(dim: int, p: float, q: float) -> bool:
    """2/p + n/q = n/2 with 2 ≤ p, q ≤ ∞, excluding the forbidden endpoint (2, ∞)."""
    if p < 2 or q < 2:
        return False
    if p == 2 and math.isinf(q):
        return False
    lhs = (0.0 if math.isinf(p) else 2.0 / p) + (0.0 if math.isinf(q) else dim / q)
    return abs(lhs - dim / 2.0) <= ADMISSIBILITY_TOLERANCE


def thin(traj: Trajectory, factor: int = 2) -> Trajectory:
    """Every `factor`-th snapshot, used to measure stride sensitivity."""
    out = Trajectory(grid=traj.grid, dt=traj.dt * factor, scheme=traj.scheme, model=dict(traj.model), dealiased=traj.dealiased)
    for t, f in list(traj.items())[::factor]:
        out.append(t, f)
    return out


# -----------------------------
# meters
# -----------------------------
def lebesgue_norm(traj: Trajectory, p: float, q: float) -> float:
    """‖u‖_{L^p_tL^q_x} over the stored window, no admissibility requirement."""
    return _time_norm(traj.times, [spatial_norm(f, q) for f in traj.fields], p)


def strichartz_norm(traj: Trajectory, p: float, q: float, *, allow_nonsharp: bool = False) -> float:
    if not is_admissible(traj.grid.dim, p, q):
        if not allow_nonsharp:
            raise InadmissiblePairError(f"(p, q) = ({p}, {q}) is not Strichartz admissible in {traj.grid.dim}D")
        logger.info("measuring non-admissible pair (%s, %s)", p, q)
    return lebesgue_norm(traj, p, q)


def sobolev_profile(traj: Trajectory, s: float) -> np.ndarray:
    """‖u(t)‖_{H^s} per stored time."""
    return np.array([hs_norm(f, s) for f in traj.fields])


def stride_sensitivity(meter: Callable[[Trajectory], float], traj: Trajectory) -> Dict[str, float]:
    full = meter(traj)
    coarse = meter(thin(traj))
    rel = abs(coarse - full) / abs(full) if full else abs(coarse)
    return {"value": full, "double_stride": coarse, "relative_change": rel}


def _shell(f: Field, k: Optional[int], bank: Optional[DyadicFilterBank]) -> Field:
    if k is None:
        return f
    return (bank or DyadicFilterBank(f.grid)).project(f, k)


def bilinear_l2(
    traj_u: Trajectory,
    k_u: Optional[int],
    traj_v: Trajectory,
    k_v: Optional[int],
    x0: Optional[Sequence[float]] = None,
    exponent: float = 0.0,
    *,
    bank: Optional[DyadicFilterBank] = None,
) -> float:
    """
    ‖|D|^s(u_λ ū_μ^{x0})‖_{L²_{t,x}} with v^{x0}(x) = v(x − x0) and s ∈ {0, (3−n)/2}.
    A shell index of None leaves that factor unprojected.
    """
    grid = traj_u.grid
    grid.require_same(traj_v.grid)
    if len(traj_u) != len(traj_v) or not np.allclose(traj_u.times, traj_v.times):
        raise ConfigError("bilinear meter needs trajectories on the same time grid")
    allowed = (0.0, (3.0 - grid.dim) / 2.0)
    if not any(abs(exponent - a) < 1e-12 for a in allowed):
        raise ConfigError(f"fractional exponent must be one of {allowed}, got {exponent}")
    bank = bank or DyadicFilterBank(grid)
    per_time = []
    for u, v in zip(traj_u.fields, traj_v.fields):
        a = _shell(u, k_u, bank)
        b = _shell(v, k_v, bank)
        if x0 is not None:
            b = translate(b, x0)
        w = Field(grid, a.values * np.conj(b.values))
        if exponent:
            w = fractional_multiplier(w, exponent)
        per_time.append(l2_norm(w))
    return _time_norm(traj_u.times, per_time, 2.0)


def shift_lattice(grid, per_axis: int = 8) -> List[np.ndarray]:
    """Finite family of shifts x0 = L·m/per_axis, m ∈ {0..per_axis−1}ⁿ."""
    step = grid.box_length / per_axis
    axes = np.meshgrid(*[np.arange(per_axis) * step] * grid.dim, indexing="ij")
    return [np.array(p) for p in zip(*(a.ravel() for a in axes))]


def _l1_pair(traj_v: Trajectory, traj_f: Trajectory, x0) -> float:
    per_time = [
        float(v.grid.cell_volume * np.sum(np.abs(v.values * translate(f, x0).values)))
        for v, f in zip(traj_v.fields, traj_f.fields)
    ]
    return _time_norm(traj_v.times, per_time, 1.0)


def d_lambda(
    v_family: Mapping[int, Trajectory],
    f_family: Mapping[int, Trajectory],
    k: int,
    *,
    shifts_per_axis: int = 8,
) -> float:
    """
    d_λ² = sup_{μ≈λ} ‖v_μ(0)‖² + sup_{μ,ν≈λ, x0} ‖v_μ f_ν^{x0}‖_{L¹_{t,x}},
    μ, ν ranging over the shells k−1, k, k+1 present in the families.
    """
    near = (k - 1, k, k + 1)
    vs = {m: v_family[m] for m in near if m in v_family}
    fs = {m: f_family[m] for m in near if m in f_family}
    if not vs:
        raise ConfigError(f"no shell trajectories near k={k}")
    mass = max(l2_norm(t.fields[0]) ** 2 for t in vs.values())
    pairing = 0.0
    for v in vs.values():
        for f in fs.values():
            v.grid.require_same(f.grid)
            for x0 in shift_lattice(v.grid, shifts_per_axis):
                pairing = max(pairing, _l1_pair(v, f, x0))
    return math.sqrt(mass + pairing)


# -----------------------------
# ledger
# -----------------------------
NORM_COLUMNS = ["norm", "shell_u", "shell_v", "shift", "value", "t_start", "t_end"]


@dataclass
class NormLedger:
    """Measured norms keyed by (norm id, shells, shift) with their time window."""

    grid: Dict[str, Any] = field(default_factory=dict)
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def add(
        self,
        norm: str,
        value: float,
        traj: Trajectory,
        *,
        shell_u: Optional[int] = None,
        shell_v: Optional[int] = None,
        shift: Optional[Sequence[float]] = None,
        window: Optional[Sequence[float]] = None,
    ) -> None:
        if not value >= 0:
            raise ValueError(f"norm {norm!r} measured as {value}")
        t0, t1 = window if window is not None else (traj.times[0], traj.times[-1])
        if t0 < traj.times[0] - 1e-12 or t1 > traj.times[-1] + 1e-12:
            raise ValueError(f"window [{t0}, {t1}] leaves the trajectory span")
        self.grid = self.grid or traj.grid.describe()
        self.rows.append(
            {
                "norm": norm,
                "shell_u": shell_u,
                "shell_v": shell_v,
                "shift": None if shift is None else " ".join(f"{c:.6g}" for c in shift),
                "value": float(value),
                "t_start": float(t0),
                "t_end": float(t1),
            }
        )

    def get(self, norm: str) -> List[float]:
        return [r["value"] for r in self.rows if r["norm"] == norm]

    def to_csv(self, path: Path) -> Path:
        return write_csv(path, NORM_COLUMNS, self.rows)

    def to_json(self, path: Path) -> Path:
        return write_json(path, {"grid": self.grid, "rows": self.rows})

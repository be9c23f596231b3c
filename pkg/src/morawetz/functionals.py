from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma

from src.common.errors import BudgetError, ConfigError
from src.common.io_utils import write_csv
from src.conservation.densities import derivatives, densities
from src.conservation.residuals import STENCIL_HALF_WIDTH, ParaSetting, central_difference, para_terms, require_stencil
from src.evolution.trajectory import Trajectory
from src.morawetz.weights import WeightSpec
from src.spectral.grid import BoxGrid, Field, forward, inverse
from src.spectral.operators import check_support, fractional_multiplier, integrate, l2_norm

logger = logging.getLogger(__name__)

# points per axis for O(N^{2n}) double quadrature
GRID_CAPS = {1: 512, 2: 32, 3: 16}
BLOCK = 256

MORAWETZ_COLUMNS = ["time", "I", "J4", "K", "residual"]


def check_budget(grid: BoxGrid) -> None:
    cap = GRID_CAPS.get(grid.dim)
    if cap is None or grid.points_per_axis > cap:
        raise BudgetError(
            f"double quadrature is capped at {cap} points per axis in {grid.dim}D, got {grid.points_per_axis}"
        )


def _points(grid: BoxGrid) -> np.ndarray:
    return grid.mesh().reshape(grid.dim, -1)


def _blocks(grid: BoxGrid, w: WeightSpec, x0, order: int) -> Iterator[Tuple[slice, np.ndarray]]:
    """Kernel rows a_j (order 1) or a_{jm} (order 2) for blocks of outer points."""
    pts = _points(grid)
    for start in range(0, pts.shape[1], BLOCK):
        sl = slice(start, min(start + BLOCK, pts.shape[1]))
        z = w.displacement(grid, pts[:, sl], pts, x0)
        yield sl, (w.gradient(z) if order == 1 else w.hessian(z, grid))


def _prepare(u: Field, v: Field, w: Optional[WeightSpec], strict: bool) -> WeightSpec:
    u.grid.require_same(v.grid)
    check_budget(u.grid)
    w = w or WeightSpec()
    if w.minimal_image:
        check_support(u, strict=strict, label="u")
        check_support(v, strict=strict, label="v")
    return w


def _flat(a: np.ndarray, grid: BoxGrid) -> np.ndarray:
    lead = a.shape[: a.ndim - grid.dim]
    return a.reshape(lead + (-1,))


# -----------------------------
# pair sums over density arrays (flattened)
# -----------------------------
def _interaction(grid, w, x0, Mu, Pu, Mv, Pv) -> float:
    total = 0.0
    for sl, A in _blocks(grid, w, x0, 1):
        total += np.einsum("jxy,x,jy->", A, Mu[sl], Pv) - np.einsum("jxy,jx,y->", A, Pu[:, sl], Mv)
    return float(total) * grid.cell_volume**2


def _j4(grid, w, x0, Mu, Pu, Eu, Mv, Pv, Ev) -> float:
    total = 0.0
    for sl, H in _blocks(grid, w, x0, 2):
        total += (
            np.einsum("jmxy,x,jmy->", H, Mu[sl], Ev)
            + np.einsum("jmxy,jmx,y->", H, Eu[:, :, sl], Mv)
            - 2.0 * np.einsum("jmxy,jx,my->", H, Pu[:, sl], Pv)
        )
    return float(total) * grid.cell_volume**2


def _k_term(grid, w, x0, Mu, Pu, Su_M, Su_P, Mv, Pv, Sv_M, Sv_P) -> float:
    """∬a_j(S_M(u)P^j(v)' + M(u)S_P^j(v)' − S_P^j(u)M(v)' − P^j(u)S_M(v)')."""
    total = 0.0
    for sl, A in _blocks(grid, w, x0, 1):
        total += (
            np.einsum("jxy,x,jy->", A, Su_M[sl], Pv)
            + np.einsum("jxy,x,jy->", A, Mu[sl], Sv_P)
            - np.einsum("jxy,jx,y->", A, Su_P[:, sl], Mv)
            - np.einsum("jxy,jx,y->", A, Pu[:, sl], Sv_M)
        )
    return float(total) * grid.cell_volume**2


# -----------------------------
# functionals
# -----------------------------
def interaction_functional(
    u: Field, v: Field, x0: Optional[Sequence[float]] = None, w: Optional[WeightSpec] = None, *, strict: bool = False
) -> float:
    """I(u, v) = ∬ a_j(x − y)(M(u)(x)P_j(v)(y) − P_j(u)(x)M(v)(y)) dx dy, with y shifted by x0."""
    w = _prepare(u, v, w, strict)
    grid = u.grid
    du, dv = densities(u), densities(v)
    return _interaction(grid, w, x0, _flat(du.M, grid), _flat(du.P, grid), _flat(dv.M, grid), _flat(dv.P, grid))


def j4(u: Field, v: Field, x0: Optional[Sequence[float]] = None, w: Optional[WeightSpec] = None, *, strict: bool = False) -> float:
    """
    ∬ a_jm(x − y)(M(u)E_jm(v) + E_jm(u)M(v) − 2P_j(u)P_m(v)) dx dy,
    the exact time derivative of I along the flat flow.
    """
    w = _prepare(u, v, w, strict)
    grid = u.grid
    a, b = densities(u), densities(v)
    return _j4(grid, w, x0, *(_flat(q, grid) for q in (a.M, a.P, a.E, b.M, b.P, b.E)))


def j4_main(u: Field, v: Field, x0: Optional[Sequence[float]] = None, w: Optional[WeightSpec] = None, *, strict: bool = False) -> float:
    """4∬ a_jm(x − y) F_j F̄_m dx dy with F_j = u(x)∂_jv̄(y) + ∂_ju(x)v̄(y); ≥ 0 for convex a."""
    w = _prepare(u, v, w, strict)
    grid = u.grid
    uf, vf = _flat(u.values, grid), _flat(v.values, grid)
    du, dv = _flat(derivatives(u.values, grid), grid), _flat(derivatives(v.values, grid), grid)
    total = 0.0
    for sl, H in _blocks(grid, w, x0, 2):
        F = uf[sl][None, :, None] * np.conj(dv)[:, None, :] + du[:, sl, None] * np.conj(vf)[None, None, :]
        total += np.einsum("jmxy,jxy,mxy->", H, F, np.conj(F)).real
    return 4.0 * float(total) * grid.cell_volume**2


def j4_closed_form_quadratic(u: Field, v: Field) -> float:
    """8‖(∂_x + ∂_y)(u(x)v̄(y))‖² in L²(dx dy), the value of j4 for a = |x|²."""
    u.grid.require_same(v.grid)
    grid = u.grid
    du = derivatives(u.values, grid)
    dv = derivatives(v.values, grid)
    nu, nv = l2_norm(u) ** 2, l2_norm(v) ** 2
    gu = sum(integrate(np.abs(d) ** 2, grid).real for d in du)
    gv = sum(integrate(np.abs(d) ** 2, grid).real for d in dv)
    cross = sum(
        (integrate(u.values * np.conj(a), grid) * integrate(v.values * np.conj(b), grid)).real for a, b in zip(du, dv)
    )
    return 8.0 * (nu * gv + gu * nv + 2.0 * cross)


# -----------------------------
# fractional-norm identity for a = |x|
# -----------------------------
def closed_form_cn(dim: int) -> float:
    """2ⁿ π^{(n−1)/2} Γ((n+1)/2): 2 in 1D, 2π in 2D, 8π in 3D."""
    return 2.0**dim * math.pi ** ((dim - 1) / 2) * float(gamma((dim + 1) / 2))


@dataclass(frozen=True)
class ImClean:
    lhs: float
    rhs: float
    c_n: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else float("nan")


# per-axis points of the quadrature grid for the fractional-norm identity
IM_CLEAN_POINTS = {1: 1024, 2: 256, 3: 64}
MAX_RHS_PAD = 8


def rhs_pad(grid: BoxGrid) -> int:
    """Largest power-of-two pad ≤ MAX_RHS_PAD whose padded box stays inside the point budget."""
    pad = MAX_RHS_PAD
    while pad > 1 and (grid.points_per_axis * pad) ** grid.dim > grid.point_budget:
        pad //= 2
    return pad


def fractional_mass_norm(u: Field, *, pad: Optional[int] = None) -> float:
    """‖|D|^{(3−n)/2}|u|²‖²_{L²}, evaluated on a box `pad` times larger so the lattice resolves ℝⁿ."""
    grid = u.grid
    n = grid.dim
    pad = rhs_pad(grid) if pad is None else int(pad)
    M = np.abs(u.values) ** 2
    big = BoxGrid(
        dim=n, points_per_axis=grid.points_per_axis * pad, box_length=grid.box_length * pad, point_budget=grid.point_budget
    )
    padded = np.zeros(big.shape)
    padded[tuple(slice(0, grid.points_per_axis) for _ in range(n))] = M
    return l2_norm(fractional_multiplier(Field(big, padded), (3.0 - n) / 2.0)) ** 2


def displacement_lattice(grid: BoxGrid) -> np.ndarray:
    """Minimal-image displacements k·dx for every lattice offset k, shape (n, N, ..., N)."""
    offsets = np.fft.fftfreq(grid.points_per_axis, d=1.0 / grid.points_per_axis) * grid.dx
    return np.stack(np.meshgrid(*([offsets] * grid.dim), indexing="ij"))


def hessian_pair_sum(grid: BoxGrid, w: WeightSpec, D: np.ndarray) -> float:
    """
    Σ_{x,y} a_jm(x − y) D_j(x) D_m(y) h^{2n} for real D of shape (n, N, ..., N).

    With minimal-image displacements the kernel is periodic, so the double
    sum is a circular convolution and costs O(Nⁿ log N).
    """
    if not w.minimal_image:
        raise ConfigError("the convolution form needs minimal-image displacements")
    n = grid.dim
    axes = tuple(range(1, n + 1))
    H = w.hessian(displacement_lattice(grid), grid)
    D_hat = forward(D, axes=axes)
    total = 0.0
    for j in range(n):
        conv_hat = sum(forward(H[j, m], axes=None) * D_hat[m] for m in range(n))
        conv = inverse(conv_hat).real * grid.points_per_axis**n
        total += float(np.sum(D[j] * conv))
    return total * grid.cell_volume**2


def im_clean(u: Field, w: Optional[WeightSpec] = None, *, pad: Optional[int] = None, strict: bool = False) -> ImClean:
    """
    lhs = ∬ a_jm(x − y) ∂_j|u|²(x) ∂_m|u|²(y) dx dy for a = |x| against
    rhs = ‖|D|^{(3−n)/2}|u|²‖²; in the continuum lhs = c_n·rhs.
    """
    w = w or WeightSpec("abs")
    if w.kind != "abs":
        raise ConfigError(f"the fractional-norm identity holds for the abs weight, got {w.kind!r}")
    grid = u.grid
    dM = derivatives(np.abs(u.values) ** 2, grid).real
    if w.minimal_image:
        check_support(u, strict=strict, label="u")
        lhs = hessian_pair_sum(grid, w, dM)
    else:
        check_budget(grid)
        flat = _flat(dM, grid)
        lhs = 0.0
        for sl, H in _blocks(grid, w, None, 2):
            lhs += np.einsum("jmxy,jx,my->", H, flat[:, sl], flat)
        lhs = float(lhs) * grid.cell_volume**2
    return ImClean(lhs=lhs, rhs=fractional_mass_norm(u, pad=pad), c_n=closed_form_cn(grid.dim))


def im_clean_grid(grid: BoxGrid, points: Optional[int] = None) -> BoxGrid:
    """Quadrature grid for the identity: same box as `grid`, IM_CLEAN_POINTS per axis unless given."""
    n = int(points) if points is not None else IM_CLEAN_POINTS[grid.dim]
    return BoxGrid(dim=grid.dim, points_per_axis=n, box_length=grid.box_length)


@dataclass(frozen=True)
class CnCalibration:
    dim: int
    value: float
    error: float
    closed_form: float
    spacings: Tuple[float, ...]
    ratios: Tuple[float, ...]
    order: Optional[float]


CALIBRATION_POINTS = {1: (256, 512, 1024), 2: (64, 128, 256), 3: (16, 32, 64)}
CALIBRATION_BOX = 2 * np.pi


def reference_bump(grid: BoxGrid, width: float = 0.6) -> Field:
    r2 = sum((x - c) ** 2 for x, c in zip(grid.coordinates, grid.center))
    return Field(grid, np.exp(-r2 / (2.0 * width**2)) * np.ones(grid.shape))


@lru_cache(maxsize=None)
def calibrate_cn(dim: int, diagonal: str = "lattice") -> CnCalibration:
    """
    lhs/rhs of the fractional-norm identity on a fixed bump at three grid
    spacings (fixed box, doubling points), extrapolated to h = 0 with a
    fitted order.
    """
    w = WeightSpec("abs", diagonal=diagonal)
    grids = [BoxGrid(dim=dim, points_per_axis=N, box_length=CALIBRATION_BOX) for N in CALIBRATION_POINTS[dim]]
    # same padded box at every level
    pad = rhs_pad(grids[-1])
    h, c = [], []
    for grid in grids:
        c.append(im_clean(reference_bump(grid), w, pad=pad).ratio)
        h.append(grid.dx)
    (h1, h2, h3), (c1, c2, c3) = h, c

    def mismatch(p: float) -> float:
        return (c1 - c2) * (h2**p - h3**p) - (c2 - c3) * (h1**p - h2**p)

    order: Optional[float] = None
    value = c3
    try:
        if mismatch(0.5) * mismatch(8.0) < 0:
            order = brentq(mismatch, 0.5, 8.0)
            value = c3 - (c2 - c3) * h3**order / (h2**order - h3**order)
    except (ValueError, ZeroDivisionError):
        order = None
    error = abs(value - c3) if order is not None else abs(c3 - c2)
    result = CnCalibration(
        dim=dim,
        value=float(value),
        error=float(error),
        closed_form=closed_form_cn(dim),
        spacings=tuple(h),
        ratios=tuple(float(x) for x in c),
        order=order,
    )
    logger.info("c_%d calibrated to %.6g ± %.2g (closed form %.6g)", dim, result.value, result.error, result.closed_form)
    return result




# -----------------------------
# identity along trajectories
# -----------------------------
@dataclass
class MorawetzLedger:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def add(self, t: float, I: float, J4: float, K: float, residual: float) -> None:
        self.rows.append({"time": float(t), "I": I, "J4": J4, "K": K, "residual": residual})

    def max_residual(self) -> float:
        return max((abs(r["residual"]) for r in self.rows), default=0.0)

    def max_relative_residual(self) -> float:
        """max |residual| / max(|J4|, 1)."""
        return max((abs(r["residual"]) / max(abs(r["J4"]), 1.0) for r in self.rows), default=0.0)

    def to_csv(self, path: Path) -> Path:
        return write_csv(path, MORAWETZ_COLUMNS, self.rows)


def _flat_series(traj: Trajectory):
    grid = traj.grid
    out = []
    for _, f in traj.items():
        d = densities(f)
        out.append({"M": _flat(d.M, grid), "P": _flat(d.P, grid), "E": _flat(d.E, grid), "SM": None, "SP": None})
    return out


def _para_series(traj: Trajectory, setting: ParaSetting):
    grid = traj.grid
    out = []
    for p in para_terms(traj, setting):
        d = p.densities
        S_M = p.mass_source if p.mass_source is not None else np.zeros(grid.shape)
        out.append(
            {
                "M": _flat(d.M, grid),
                "P": _flat(d.P_up, grid),
                "E": _flat(d.E_up, grid),
                "SM": _flat(S_M, grid),
                "SP": _flat(p.covariant_source, grid),
            }
        )
    return out


def morawetz_identity_residual(
    u_traj: Trajectory,
    v_traj: Optional[Trajectory] = None,
    w: Optional[WeightSpec] = None,
    *,
    x0: Optional[Sequence[float]] = None,
    para_u: Optional[ParaSetting] = None,
    para_v: Optional[ParaSetting] = None,
) -> MorawetzLedger:
    """
    D_tI − J4 − K on interior snapshots, D_t the fourth-order central difference.

    Flat trajectories have K = 0. With ParaSetting for both factors the
    densities are the metric ones (P^j, E^{kj}) and K collects the mass and
    covariant momentum sources of each factor.
    """
    v_traj = u_traj if v_traj is None else v_traj
    require_stencil(u_traj)
    grid = u_traj.grid
    grid.require_same(v_traj.grid)
    check_budget(grid)
    if len(u_traj) != len(v_traj) or not np.allclose(u_traj.times, v_traj.times):
        raise ConfigError("the two trajectories must share their snapshot times")
    if (para_u is None) != (para_v is None):
        raise ConfigError("paradifferential mode needs a setting for both factors")
    w = w or WeightSpec()
    if w.minimal_image:
        check_support(u_traj.fields[0], label="u(0)")
        check_support(v_traj.fields[0], label="v(0)")

    paradiff = para_u is not None
    su = _para_series(u_traj, para_u) if paradiff else _flat_series(u_traj)
    sv = _para_series(v_traj, para_v) if paradiff else _flat_series(v_traj)
    I_series = [_interaction(grid, w, x0, a["M"], a["P"], b["M"], b["P"]) for a, b in zip(su, sv)]

    dt = u_traj.spacing
    ledger = MorawetzLedger(meta={"weight": w.describe(), "dt": dt, "paradifferential": paradiff})
    for i in range(STENCIL_HALF_WIDTH, len(su) - STENCIL_HALF_WIDTH):
        a, b = su[i], sv[i]
        J = _j4(grid, w, x0, a["M"], a["P"], a["E"], b["M"], b["P"], b["E"])
        K = _k_term(grid, w, x0, a["M"], a["P"], a["SM"], a["SP"], b["M"], b["P"], b["SM"], b["SP"]) if paradiff else 0.0
        dI = float(central_difference(I_series, i, dt))
        ledger.add(u_traj.times[i], I_series[i], J, K, dI - J - K)
    logger.info("Morawetz identity: max residual %.3g over %d times", ledger.max_residual(), len(ledger.rows))
    return ledger

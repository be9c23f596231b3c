from __future__ import annotations

import logging
import time
from typing import Any, Callable, Dict, Optional

import numpy as np

from src.common.errors import ConfigError, ModelValidationError, NumericalAbort
from src.evolution.background import BackgroundCoefficient, FieldInterpolant
from src.evolution.integrators import LawsonRK4, PostStep, advance, coefficient_mass, guarded_step
from src.evolution.trajectory import Trajectory, coefficient_aliasing_fraction
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.metrics import IdentityMetric
from src.model.paradiff import MetricField
from src.model.spec import ModelSpec
from src.model.structure import validate_cubic
from src.spectral.grid import BoxGrid, Field, forward, inverse
from src.spectral.operators import hs_norm

logger = logging.getLogger(__name__)

CFL_CONSTANT = 0.5
LEAKAGE_TOLERANCE = 1e-8

Forcing = Callable[[float], Field]


# -----------------------------
# spectral building blocks
# -----------------------------
def _gradient_values(U: np.ndarray, grid: BoxGrid) -> np.ndarray:
    return np.stack([inverse(1j * k * U) for k in grid.wavenumbers])


def divergence(vectors: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """Coefficients of ∂_j w^j for a physical-space vector field (n, *shape)."""
    return sum(1j * k * forward(vectors[j]) for j, k in enumerate(grid.wavenumbers))


def divergence_term(coeff: np.ndarray, vectors: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """Coefficients of ∂_j(c^{jk} w_k) for a matrix field c and vector field w."""
    return divergence(np.einsum("jk...,k...->j...", coeff, vectors), grid)


def hessian_term(coeff: np.ndarray, U: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """Coefficients of c^{jk}∂_j∂_k u."""
    ks = grid.wavenumbers
    out = np.zeros(grid.shape, dtype=np.complex128)
    for j in range(grid.dim):
        for m in range(grid.dim):
            out = out + coeff[j, m] * inverse(-ks[j] * ks[m] * U)
    return forward(out)


def principal_part(coeff: np.ndarray, U: np.ndarray, grid: BoxGrid, *, divergence_form: bool) -> np.ndarray:
    if divergence_form:
        return divergence_term(coeff, _gradient_values(U, grid), grid)
    return hessian_term(coeff, U, grid)


def cfl_advisory(model: ModelSpec, u0: Field, constant: float = CFL_CONSTANT) -> float:
    """dt ≤ C / (max g · ξ_max²) evaluated on the initial data."""
    g_max = MetricField(u0.grid, model.g(u0.values)).spectral_radius_max()
    return constant / (g_max * u0.grid.xi_max**2)


def _step_count(T: float, dt: float) -> tuple[int, float]:
    if not (T > 0 and dt > 0):
        raise ValueError(f"T and dt must be positive, got T={T}, dt={dt}")
    steps = max(1, int(round(T / dt)))
    h = T / steps
    if abs(h - dt) > 1e-12 * dt:
        logger.debug("dt adjusted from %.6g to %.6g to land on T=%.6g", dt, h, T)
    return steps, h


def _integrate(
    stepper: LawsonRK4,
    traj: Trajectory,
    U0: np.ndarray,
    T: float,
    dt: float,
    *,
    stride: int = 1,
    post_step: Optional[PostStep] = None,
) -> Trajectory:
    """Guarded stepping from t = 0, storing every `stride`-th state and the final one."""
    grid = traj.grid
    steps, h = _step_count(T, dt)
    stride = max(1, int(stride))
    traj.dt = h
    traj.meta.setdefault("stride", stride)
    traj.meta.setdefault("steps", steps)
    traj.append(0.0, Field(grid, inverse(U0)))
    U = U0
    worst_alias = 0.0
    started = time.perf_counter()
    for i in range(steps):
        t = i * h
        U = guarded_step(stepper, U, t, h, step_index=i, partial=traj)
        if post_step is not None:
            U = post_step(t + h, U, h)
        worst_alias = max(worst_alias, coefficient_aliasing_fraction(U, grid))
        if (i + 1) % stride == 0 or i + 1 == steps:
            t_next = (i + 1) * h
            traj.append(t_next, Field(grid, inverse(U)))
            traj.flag_aliasing(t_next, worst_alias)
            worst_alias = 0.0
        if i and i % 1000 == 0:
            logger.debug("%s: step %d/%d, t=%.4g", traj.scheme, i, steps, t + h)
    logger.info(
        "%s: %d steps of dt=%.3g to T=%.4g in %.2fs (%d snapshots)",
        traj.scheme,
        steps,
        h,
        T,
        time.perf_counter() - started,
        len(traj),
    )
    return traj


# -----------------------------
# flat flow
# -----------------------------
def solve_flat(u0: Field, T: float, dt: float, *, stride: int = 1) -> Trajectory:
    """e^{itΔ}u0 sampled on the time grid; exact in time."""
    steps, h = _step_count(T, dt)
    grid = u0.grid
    U0 = forward(u0.values)
    traj = Trajectory(grid=grid, dt=h, scheme="exact-flat", model={"name": "flat"}, dealiased=False)
    traj.meta["stride"] = max(1, int(stride))
    for i in range(steps + 1):
        if i % traj.meta["stride"] and i != steps:
            continue
        t = i * h
        traj.append(t, Field(grid, inverse(U0 * np.exp(-1j * t * grid.xi_squared))))
    return traj


# -----------------------------
# full quasilinear flow
# -----------------------------
def qnls_stepper(model: ModelSpec, grid: BoxGrid, *, divergence_form: bool = True) -> LawsonRK4:
    """Stepper for u_t = iΔu + i[(g(u)−I)∂∂u] − iN(u, ∂u) with 2/3-rule dealiasing."""
    mask = grid.dealias_mask
    flat_metric = isinstance(model.metric, IdentityMetric)
    no_nonlinearity = model.nonlinearity.is_zero
    if flat_metric and no_nonlinearity:
        return LawsonRK4.schrodinger(grid)

    def remainder(t: float, U: np.ndarray) -> np.ndarray:
        u = inverse(U)
        out = np.zeros(grid.shape, dtype=np.complex128)
        if not flat_metric:
            dev = model.metric.deviation(u)
            out = out + 1j * principal_part(dev, U, grid, divergence_form=divergence_form)
        if not no_nonlinearity:
            out = out - 1j * forward(model.N_values(u, grid))
        return out * mask

    return LawsonRK4.schrodinger(grid, remainder)


def solve_qnls(
    model: ModelSpec,
    u0: Field,
    T: float,
    dt: Optional[float] = None,
    *,
    stride: int = 1,
    divergence_form: bool = True,
    eps_max: Optional[float] = None,
    sobolev_index: float = 1.0,
    override_cubic: bool = False,
    cfl_constant: float = CFL_CONSTANT,
) -> Trajectory:
    if model.dim != u0.grid.dim:
        raise ModelValidationError(f"model dim {model.dim} does not match grid dim {u0.grid.dim}")
    if not override_cubic:
        rep = validate_cubic(model)
        if not rep.passed:
            raise ModelValidationError(
                f"model {model.name!r} failed the cubic-structure check "
                f"(metric slope {rep.metric_slope}, nonlinearity slope {rep.nonlinearity_slope})"
            )
    if eps_max is not None:
        size = hs_norm(u0, sobolev_index)
        if size > eps_max:
            raise ConfigError(f"initial data too large: ||u0||_H^{sobolev_index:g} = {size:.4g} > eps_max = {eps_max:g}")

    dt_cfl = cfl_advisory(model, u0, cfl_constant)
    if dt is None:
        dt = dt_cfl
        logger.info("dt not given; using the CFL advisory value %.3g", dt)
    elif dt > dt_cfl:
        logger.warning("dt=%.3g exceeds the CFL advisory %.3g (C=%g)", dt, dt_cfl, cfl_constant)

    grid = u0.grid
    stepper = qnls_stepper(model, grid, divergence_form=divergence_form)
    traj = Trajectory(grid=grid, dt=dt, scheme=LawsonRK4.scheme, model=model.describe())
    traj.meta.update({"divergence_form": divergence_form, "cfl_dt": dt_cfl, "override_cubic": override_cubic})

    if not divergence_form and not isinstance(model.metric, IdentityMetric):
        U0 = forward(u0.values)
        dev = model.metric.deviation(u0.values)
        gap = principal_part(dev, U0, grid, divergence_form=True) - hessian_term(dev, U0, grid)
        commutator = float(np.sqrt(grid.volume * coefficient_mass(gap * grid.dealias_mask)))
        traj.meta["form_commutator_l2"] = commutator
        logger.info("non-divergence form: ||(∂_j g ∂_k − g ∂_j∂_k)u0||_L2 = %.3g", commutator)

    return _integrate(stepper, traj, forward(u0.values), T, dt, stride=stride)


def time_reversal_check(
    model: ModelSpec,
    u0: Field,
    T: float,
    dt: float,
    *,
    divergence_form: bool = True,
    factor: float = 10.0,
) -> Dict[str, Any]:
    """
    Evolve to T and back to 0, compare with u0; the round-trip error is judged
    against the one-way self-convergence error (dt versus dt/2).
    """
    grid = u0.grid
    stepper = qnls_stepper(model, grid, divergence_form=divergence_form)
    steps, h = _step_count(T, dt)
    U0 = forward(u0.values)
    U_T = advance(stepper, U0, 0.0, steps, h)
    U_back = advance(stepper, U_T, T, steps, -h)
    U_T_fine = advance(stepper, U0, 0.0, 2 * steps, 0.5 * h)

    scale = float(np.sqrt(coefficient_mass(U0))) or 1.0
    roundtrip = float(np.sqrt(coefficient_mass(U_back - U0))) / scale
    one_way = float(np.sqrt(coefficient_mass(U_T - U_T_fine))) / scale
    passed = roundtrip <= factor * max(one_way, 1e-12)
    logger.info("time reversal: roundtrip %.3g, one-way %.3g, passed=%s", roundtrip, one_way, passed)
    return {"T": T, "dt": h, "roundtrip_error": roundtrip, "self_convergence_error": one_way, "passed": passed}


# -----------------------------
# paradifferential flow
# -----------------------------
def shell_forcing(f: Optional[Forcing], k: int, bank: DyadicFilterBank) -> Optional[Forcing]:
    """f_λ = P_k f(t) as a callable, or None."""
    if f is None:
        return None
    return lambda t: bank.project(f(t), k)


def solve_paradifferential(
    background: Trajectory,
    v0: Field,
    f: Optional[Forcing],
    k: int,
    T: float,
    dt: float,
    *,
    model: ModelSpec,
    stride: int = 1,
    bank: Optional[DyadicFilterBank] = None,
) -> Trajectory:
    """
    i ∂_t v + ∂_j g^{jk}_{[<λ]} ∂_k v = f_λ with λ = 2^k.

    v0 and f are projected to shell k; after every step the state is
    re-projected to the widened shell and the removed mass is booked as leakage.
    """
    grid = v0.grid
    grid.require_same(background.grid)
    bank = bank or DyadicFilterBank(grid)
    if T > background.times[-1] + 1e-12 * max(1.0, T):
        raise ValueError(f"background trajectory ends at {background.times[-1]}, before T={T}")
    coef = BackgroundCoefficient(background, k, model, bank)
    f_k = shell_forcing(f, k, bank)
    mask = grid.dealias_mask
    widened = bank.widened_symbol(k)

    def remainder(t: float, V: np.ndarray) -> np.ndarray:
        dev = coef.deviation_at(t)
        out = 1j * divergence_term(dev, _gradient_values(V, grid), grid)
        if f_k is not None:
            out = out - 1j * forward(f_k(t).values)
        return out * mask

    leak = {"total": 0.0}

    def reproject(t: float, V: np.ndarray, h: float) -> np.ndarray:
        kept = V * widened
        leak["total"] += grid.volume * (coefficient_mass(V) - coefficient_mass(kept))
        return kept

    v0k = bank.project(v0, k)
    traj = Trajectory(grid=grid, dt=dt, scheme=f"paradifferential-{LawsonRK4.scheme}", model=model.describe())
    traj.meta.update({"k": int(k), "forced": f is not None})
    try:
        _integrate(LawsonRK4.schrodinger(grid, remainder), traj, forward(v0k.values), T, dt, stride=stride, post_step=reproject)
    finally:
        mass0 = grid.volume * coefficient_mass(forward(v0k.values))
        rate = leak["total"] / (mass0 * T) if mass0 > 0 else 0.0
        traj.meta["leakage"] = {"total": leak["total"], "relative_per_unit_time": rate}
    if rate > LEAKAGE_TOLERANCE:
        logger.warning("frequency leakage %.3g of mass per unit time exceeds %.0e", rate, LEAKAGE_TOLERANCE)
    return traj


# -----------------------------
# linearized flow
# -----------------------------
def linearized_stepper(
    model: ModelSpec,
    background: Trajectory,
    *,
    divergence_form: bool = True,
) -> LawsonRK4:
    """Stepper for the Fréchet derivative of the full right-hand side along u(t)."""
    grid = background.grid
    u_at = FieldInterpolant(background)
    mask = grid.dealias_mask
    flat_metric = isinstance(model.metric, IdentityMetric)

    def remainder(t: float, V: np.ndarray) -> np.ndarray:
        u = u_at.values(t)
        v = inverse(V)
        out = np.zeros(grid.shape, dtype=np.complex128)
        if not flat_metric:
            dev = model.metric.deviation(u)
            ddev = model.metric.deviation_derivative(u, v)
            U = forward(u)
            if divergence_form:
                vectors = np.einsum("jk...,k...->j...", dev, _gradient_values(V, grid)) + np.einsum(
                    "jk...,k...->j...", ddev, _gradient_values(U, grid)
                )
                out = out + 1j * divergence(vectors, grid)
            else:
                out = out + 1j * (hessian_term(dev, V, grid) + hessian_term(ddev, U, grid))
        if not model.nonlinearity.is_zero:
            out = out - 1j * forward(model.nonlinearity.directional_values(u, v, grid))
        return out * mask

    return LawsonRK4.schrodinger(grid, remainder)


def solve_linearized(
    model: ModelSpec,
    background: Trajectory,
    v0: Field,
    T: float,
    dt: float,
    *,
    stride: int = 1,
    divergence_form: bool = True,
) -> Trajectory:
    grid = v0.grid
    grid.require_same(background.grid)
    if T > background.times[-1] + 1e-12 * max(1.0, T):
        raise ValueError(f"background trajectory ends at {background.times[-1]}, before T={T}")
    stepper = linearized_stepper(model, background, divergence_form=divergence_form)
    traj = Trajectory(grid=grid, dt=dt, scheme=f"linearized-{LawsonRK4.scheme}", model=model.describe())
    traj.meta["divergence_form"] = divergence_form
    return _integrate(stepper, traj, forward(v0.values), T, dt, stride=stride)


def self_convergence(
    model: ModelSpec,
    u0: Field,
    T: float,
    dts,
    *,
    reference_dt: Optional[float] = None,
    divergence_form: bool = True,
) -> Dict[str, Any]:
    """Errors at T against a fine reference run and the fitted log-log order."""
    grid = u0.grid
    stepper = qnls_stepper(model, grid, divergence_form=divergence_form)
    dts = sorted(float(d) for d in dts)
    ref_dt = reference_dt if reference_dt is not None else dts[0] / 4.0
    U0 = forward(u0.values)
    steps, h = _step_count(T, ref_dt)
    U_ref = advance(stepper, U0, 0.0, steps, h)
    errors = []
    for d in dts:
        s, hh = _step_count(T, d)
        U = advance(stepper, U0, 0.0, s, hh)
        errors.append(float(np.sqrt(grid.volume * coefficient_mass(U - U_ref))))
    if any(e <= 0 for e in errors):
        raise NumericalAbort("self-convergence errors vanished; cannot fit an order", {"errors": errors})
    order = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
    return {"dts": dts, "reference_dt": ref_dt, "errors": errors, "order": order}

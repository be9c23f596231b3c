from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.common.errors import NumericalAbort
from src.model.paradiff import MetricField
from src.spectral.grid import forward

logger = logging.getLogger(__name__)

H_DRIFT_TOL = 1e-6
MAX_HALVINGS = 20


class SpectralInterpolant:
    """Trigonometric interpolation of g^{jk} and ∂_a g^{jk} at arbitrary points."""

    def __init__(self, g: MetricField) -> None:
        grid = g.grid
        self.dim = grid.dim
        axes = tuple(range(2, 2 + self.dim))
        coeff = forward(g.components, axes=axes) * grid.nyquist_mask
        self._k1d = grid.dk * grid.lattice_index_1d.astype(float)
        self._coeff = coeff
        self._dcoeff = np.stack([1j * k * coeff for k in grid.wavenumbers])
        letters = "abc"[: self.dim]
        self._value_expr = "jk" + letters + "," + ",".join(letters) + "->jk"
        self._grad_expr = "djk" + letters + "," + ",".join(letters) + "->djk"

    def _exponentials(self, x: np.ndarray) -> list:
        return [np.exp(1j * self._k1d * xa) for xa in x]

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.einsum(self._value_expr, self._coeff, *self._exponentials(x)).real

    def value_and_gradient(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        e = self._exponentials(x)
        return np.einsum(self._value_expr, self._coeff, *e).real, np.einsum(self._grad_expr, self._dcoeff, *e).real


@dataclass(frozen=True)
class Bicharacteristic:
    times: np.ndarray
    x: np.ndarray  # (M+1, n), unwrapped positions
    xi: np.ndarray  # (M+1, n)
    velocity: np.ndarray  # ẋ = 2 g ξ, (M+1, n)
    H: np.ndarray
    halvings: int

    @property
    def max_xi_deviation(self) -> float:
        return float(np.max(np.linalg.norm(self.xi - self.xi[0], axis=1)))

    @property
    def max_velocity_deviation(self) -> float:
        return float(np.max(np.linalg.norm(self.velocity - self.velocity[0], axis=1)))

    @property
    def max_relative_H_drift(self) -> float:
        return float(np.max(np.abs(self.H / self.H[0] - 1.0)))

    @property
    def xi_bounds(self) -> Tuple[float, float]:
        """min and max of |ξ(t)|/|ξ(0)|."""
        r = np.linalg.norm(self.xi, axis=1) / np.linalg.norm(self.xi[0])
        return float(r.min()), float(r.max())

    def exit_time(self, radius: float) -> Optional[float]:
        """First sampled time with |x(t) − x(0)| ≥ radius; None if the ray stays inside."""
        d = np.linalg.norm(self.x - self.x[0], axis=1)
        hit = np.nonzero(d >= radius)[0]
        return float(self.times[hit[0]]) if hit.size else None

    def straight_line_exit_time(self, radius: float) -> float:
        return float(radius / np.linalg.norm(self.velocity[0]))

    def summary(self, radius: Optional[float] = None) -> dict:
        out = {
            "max_xi_deviation": self.max_xi_deviation,
            "max_velocity_deviation": self.max_velocity_deviation,
            "max_relative_H_drift": self.max_relative_H_drift,
            "xi_ratio_min": self.xi_bounds[0],
            "xi_ratio_max": self.xi_bounds[1],
            "halvings": self.halvings,
        }
        if radius is not None:
            out["exit_time"] = self.exit_time(radius)
            out["straight_line_exit_time"] = self.straight_line_exit_time(radius)
        return out


def _rhs(interp: SpectralInterpolant, y: np.ndarray) -> np.ndarray:
    n = interp.dim
    x, xi = y[:n], y[n:]
    g, dg = interp.value_and_gradient(x)
    xdot = 2.0 * g @ xi
    xidot = -np.einsum("ajk,j,k->a", dg, xi, xi)
    return np.concatenate([xdot, xidot])


def _hamiltonian(interp: SpectralInterpolant, y: np.ndarray) -> float:
    n = interp.dim
    g = interp.value(y[:n])
    return float(y[n:] @ g @ y[n:])


def _rk4(interp: SpectralInterpolant, y: np.ndarray, h: float) -> np.ndarray:
    k1 = _rhs(interp, y)
    k2 = _rhs(interp, y + 0.5 * h * k1)
    k3 = _rhs(interp, y + 0.5 * h * k2)
    k4 = _rhs(interp, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def bicharacteristic_trace(
    g: MetricField,
    x0: Sequence[float],
    xi0: Sequence[float],
    T: float,
    dt: float,
    *,
    h_tol: float = H_DRIFT_TOL,
    max_halvings: int = MAX_HALVINGS,
) -> Bicharacteristic:
    """
    RK4 on ẋ = ∂_ξH = 2gξ, ξ̇ = −∂_xH with H = g^{jk}(x)ξ_jξ_k. Each output
    step of size dt is retried with 2^m substeps (m ≤ max_halvings) until
    |H − H(0)| ≤ h_tol·|H(0)|.
    """
    n = g.dim
    x0 = np.asarray(x0, dtype=float).reshape(n)
    xi0 = np.asarray(xi0, dtype=float).reshape(n)
    if abs(np.linalg.norm(xi0) - 1.0) > 1e-12:
        raise ValueError(f"initial covector must have unit length, got |ξ0| = {np.linalg.norm(xi0)}")
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")

    interp = SpectralInterpolant(g)
    steps = int(round(T / dt))
    y = np.concatenate([x0, xi0])
    H0 = _hamiltonian(interp, y)
    ys = [y]
    Hs = [H0]
    worst = 0
    for i in range(steps):
        for m in range(max_halvings + 1):
            sub = 2**m
            h = dt / sub
            trial = y
            for _ in range(sub):
                trial = _rk4(interp, trial, h)
            H = _hamiltonian(interp, trial)
            if abs(H - H0) <= h_tol * abs(H0):
                break
        else:
            raise NumericalAbort(
                "bicharacteristic H drift not controlled by step halving",
                {"step": i, "t": i * dt, "H0": H0, "H": H, "halvings": max_halvings},
            )
        worst = max(worst, m)
        y = trial
        ys.append(y)
        Hs.append(H)

    Y = np.array(ys)
    vel = np.array([2.0 * interp.value(row[:n]) @ row[n:] for row in Y])
    if worst:
        logger.debug("bicharacteristic needed up to %d halvings", worst)
    return Bicharacteristic(
        times=dt * np.arange(steps + 1),
        x=Y[:, :n],
        xi=Y[:, n:],
        velocity=vel,
        H=np.array(Hs),
        halvings=worst,
    )

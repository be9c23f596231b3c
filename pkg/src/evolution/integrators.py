from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from src.common.errors import NumericalAbort
from src.spectral.grid import BoxGrid

logger = logging.getLogger(__name__)

# (t, U) -> dU/dt of the non-stiff remainder, both in coefficient space
Remainder = Callable[[float, np.ndarray], np.ndarray]
# (t, U, h) -> U after a completed step (re-projection, bookkeeping)
PostStep = Callable[[float, np.ndarray, float], np.ndarray]

BLOWUP_FACTOR = 10.0


class LawsonRK4:
    """
    Integrating-factor RK4 for U_t = L U + R(t, U) with a diagonal linear symbol L.

    With E(h) = exp(hL):
        k1 = R(t, U)
        k2 = R(t + h/2, E(h/2)(U + h/2 k1))
        k3 = R(t + h/2, E(h/2)U + h/2 k2)
        k4 = R(t + h, E(h)U + h E(h/2) k3)
        U⁺ = E(h)U + h/6 (E(h)k1 + 2E(h/2)(k2 + k3) + k4)

    The linear part is propagated exactly; h may be negative.
    """

    scheme = "lawson-rk4"

    def __init__(self, linear_symbol: np.ndarray, remainder: Optional[Remainder] = None) -> None:
        self.linear_symbol = np.asarray(linear_symbol)
        self.remainder = remainder
        self._h: Optional[float] = None
        self._E = None
        self._E_half = None

    @classmethod
    def schrodinger(cls, grid: BoxGrid, remainder: Optional[Remainder] = None) -> "LawsonRK4":
        """Stiff part iΔ, i.e. L(ξ) = −i|ξ|²."""
        return cls(-1j * grid.xi_squared, remainder)

    def setup(self, h: float) -> None:
        if self._h == h:
            return
        self._h = h
        self._E = np.exp(h * self.linear_symbol)
        self._E_half = np.exp(0.5 * h * self.linear_symbol)

    def step(self, U: np.ndarray, t: float, h: float) -> np.ndarray:
        self.setup(h)
        E, Eh = self._E, self._E_half
        if self.remainder is None:
            return E * U
        R = self.remainder
        k1 = R(t, U)
        k2 = R(t + 0.5 * h, Eh * (U + 0.5 * h * k1))
        k3 = R(t + 0.5 * h, Eh * U + 0.5 * h * k2)
        k4 = R(t + h, E * U + h * Eh * k3)
        return E * U + (h / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)


def coefficient_mass(U: np.ndarray) -> float:
    return float(np.sum(np.abs(U) ** 2))


def guarded_step(
    stepper: LawsonRK4,
    U: np.ndarray,
    t: float,
    h: float,
    *,
    step_index: int = 0,
    blowup_factor: float = BLOWUP_FACTOR,
    partial=None,
) -> np.ndarray:
    """One step with the blow-up guard: non-finite values or L² growth above blowup_factor abort."""
    before = coefficient_mass(U)
    out = stepper.step(U, t, h)
    after = coefficient_mass(out)
    if not np.isfinite(after):
        raise NumericalAbort(
            "non-finite values after time step",
            {"step": step_index, "t": t, "h": h, "l2_before": np.sqrt(before)},
            partial=partial,
        )
    if before > 0 and np.sqrt(after / before) > blowup_factor:
        raise NumericalAbort(
            f"L2 norm grew by more than {blowup_factor:g}x in one step",
            {"step": step_index, "t": t, "h": h, "l2_before": np.sqrt(before), "l2_after": np.sqrt(after)},
            partial=partial,
        )
    return out


def advance(
    stepper: LawsonRK4,
    U: np.ndarray,
    t0: float,
    steps: int,
    h: float,
    *,
    post_step: Optional[PostStep] = None,
) -> np.ndarray:
    """`steps` guarded steps of size h from t0 without storing intermediates."""
    t = t0
    for i in range(steps):
        U = guarded_step(stepper, U, t, h, step_index=i)
        t = t0 + (i + 1) * h
        if post_step is not None:
            U = post_step(t, U, h)
    return U

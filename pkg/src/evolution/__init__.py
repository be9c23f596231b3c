from src.evolution.background import BackgroundCoefficient, FieldInterpolant
from src.evolution.integrators import LawsonRK4, advance
from src.evolution.solvers import (
    cfl_advisory,
    qnls_stepper,
    self_convergence,
    solve_flat,
    solve_linearized,
    solve_paradifferential,
    solve_qnls,
    time_reversal_check,
)
from src.evolution.trajectory import Trajectory, aliasing_fraction, interpolate_field

__all__ = [
    "BackgroundCoefficient",
    "FieldInterpolant",
    "LawsonRK4",
    "Trajectory",
    "advance",
    "aliasing_fraction",
    "cfl_advisory",
    "interpolate_field",
    "qnls_stepper",
    "self_convergence",
    "solve_flat",
    "solve_linearized",
    "solve_paradifferential",
    "solve_qnls",
    "time_reversal_check",
]

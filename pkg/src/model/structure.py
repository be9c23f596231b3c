from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from src.model.spec import ModelSpec
from src.multilinear.symbols import conservative_check, cubic_symbol_of
from src.spectral.grid import BoxGrid, Field, inverse

logger = logging.getLogger(__name__)

EPSILONS = tuple(2.0 ** (-e) for e in range(3, 11))
SLOPE_TOLERANCE = 0.05


@dataclass(frozen=True)
class CubicityReport:
    metric_slope: Optional[float]
    nonlinearity_slope: Optional[float]
    metric_vanishes: bool
    nonlinearity_vanishes: bool
    passed: bool
    epsilons: Sequence[float] = EPSILONS

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["epsilons"] = list(self.epsilons)
        return d


def _probe_field(dim: int, seed: int) -> Field:
    grid = BoxGrid(dim=dim, points_per_axis=16, box_length=2.0 * np.pi)
    rng = np.random.default_rng(seed)
    coeff = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    mask = np.ones(grid.shape, dtype=bool)
    for axis in range(dim):
        keep = np.abs(grid.lattice_index_1d) <= 3
        shape = [1] * dim
        shape[axis] = grid.points_per_axis
        mask &= keep.reshape(shape)
    values = inverse(coeff * mask)
    return Field(grid, values / np.max(np.abs(values)))


def _slope(eps: Sequence[float], norms: Sequence[float]) -> Optional[float]:
    norms = np.asarray(norms, dtype=float)
    if np.all(norms == 0):
        return None
    if np.any(norms <= 0):
        return 0.0
    return float(np.polyfit(np.log2(eps), np.log2(norms), 1)[0])


def validate_cubic(
    model: ModelSpec,
    *,
    seed: int = 0,
    epsilons: Sequence[float] = EPSILONS,
    tolerance: float = SLOPE_TOLERANCE,
) -> CubicityReport:
    """
    Log-log slopes of ‖g(εu) − I‖ and ‖N(εu, ε∇u)‖ against ε for a fixed
    random u; needs ≥ 2 and ≥ 3 (minus tolerance). Identically zero maps pass.
    """
    u = _probe_field(model.dim, seed)
    g_norms = []
    n_norms = []
    for eps in epsilons:
        v = eps * u.values
        dev = model.g_minus_identity(v)
        g_norms.append(float(np.sqrt(u.grid.cell_volume * np.sum(dev**2))))
        nv = model.N_values(v, u.grid)
        n_norms.append(float(np.sqrt(u.grid.cell_volume * np.sum(np.abs(nv) ** 2))))
    gs = _slope(epsilons, g_norms)
    ns = _slope(epsilons, n_norms)
    ok_g = gs is None or gs >= 2.0 - tolerance
    ok_n = ns is None or ns >= 3.0 - tolerance
    report = CubicityReport(
        metric_slope=gs,
        nonlinearity_slope=ns,
        metric_vanishes=gs is None,
        nonlinearity_vanishes=ns is None,
        passed=bool(ok_g and ok_n),
        epsilons=tuple(epsilons),
    )
    if report.passed:
        logger.info("model %s is cubic at zero (g slope %s, N slope %s)", model.name, gs, ns)
    else:
        logger.warning("model %s fails the cubic check (g slope %s, N slope %s)", model.name, gs, ns)
    return report


# -----------------------------
# derived structure flags
# -----------------------------
def derived_phase_rotation(model: ModelSpec, *, samples: int = 64, seed: int = 0) -> bool:
    """Every monomial has charge +1 and g(e^{iθ}u) = g(u) on sampled points."""
    if any(m.phase_charge != 1 for m in model.nonlinearity.monomials if m.coefficient != 0):
        return False
    rng = np.random.default_rng(seed)
    values = 0.5 * (rng.standard_normal(samples) + 1j * rng.standard_normal(samples))
    rotated = values * np.exp(1j * rng.uniform(0, 2 * np.pi, samples))
    return bool(np.allclose(model.g(values), model.g(rotated), rtol=0, atol=1e-13))


@dataclass
class StructureReport:
    cubic: CubicityReport
    phase_rotation: bool
    conservative: Optional[bool]
    conservative_detail: Optional[Dict] = None
    mismatches: Dict[str, Dict[str, Optional[bool]]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.cubic.passed and not self.mismatches

    def to_dict(self) -> Dict:
        return {
            "cubic": self.cubic.to_dict(),
            "phase_rotation": self.phase_rotation,
            "conservative": self.conservative,
            "conservative_detail": self.conservative_detail,
            "mismatches": self.mismatches,
            "passed": self.passed,
        }


def validate_structure(model: ModelSpec, *, seed: int = 0) -> StructureReport:
    cubic = validate_cubic(model, seed=seed)
    phase = derived_phase_rotation(model, seed=seed)
    conservative: Optional[bool] = None
    detail = None
    if phase:
        rep = conservative_check(cubic_symbol_of(model), model.dim, seed=seed)
        conservative = rep.passed
        detail = rep.to_dict()
    derived = {"is_cubic": cubic.passed, "has_phase_rotation": phase, "is_conservative": conservative}
    mismatches = {}
    for name, value in derived.items():
        declared = getattr(model, name)
        if declared is not None and value is not None and bool(declared) != bool(value):
            mismatches[name] = {"declared": declared, "derived": value}
            logger.warning("model %s declares %s=%s but the check gives %s", model.name, name, declared, value)
    return StructureReport(cubic=cubic, phase_rotation=phase, conservative=conservative, conservative_detail=detail, mismatches=mismatches)

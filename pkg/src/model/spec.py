from __future__ import annotations

import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.common.errors import ModelValidationError
from src.model.metrics import Metric, make_metric
from src.spectral.grid import Field, forward, inverse

logger = logging.getLogger(__name__)

_VAR = re.compile(r"^(u|ubar|du[0-2]|dubar[0-2])$")


# -----------------------------
# nonlinearity as a sum of monomials
# -----------------------------
@dataclass(frozen=True)
class Monomial:
    """
    coefficient · Π var^power over var ∈ {u, ubar, du<j>, dubar<j>}, where
    du<j> = ∂_j u and dubar<j> = ∂_j ū.
    """

    coefficient: complex
    powers: Mapping[str, int]

    def __post_init__(self) -> None:
        clean: Dict[str, int] = {}
        for k, p in dict(self.powers).items():
            if not _VAR.match(k):
                raise ModelValidationError(f"unknown monomial variable {k!r}")
            p = int(p)
            if p < 0:
                raise ModelValidationError(f"negative power for {k!r}")
            if p:
                clean[k] = p
        object.__setattr__(self, "powers", dict(sorted(clean.items())))
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @property
    def degree(self) -> int:
        return sum(self.powers.values())

    @property
    def phase_charge(self) -> int:
        """(# of u-type factors) − (# of ū-type factors)."""
        plus = sum(p for k, p in self.powers.items() if k == "u" or (k.startswith("du") and not k.startswith("dubar")))
        return plus - (self.degree - plus)

    @property
    def derivative_count(self) -> int:
        return sum(p for k, p in self.powers.items() if k.startswith("d"))

    def max_axis(self) -> int:
        axes = [int(k[-1]) for k in self.powers if k.startswith("d")]
        return max(axes) if axes else -1

    def evaluate(self, variables: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.coefficient
        for k, p in self.powers.items():
            out = out * variables[k] ** p
        return out

    def directional(self, variables: Mapping[str, np.ndarray], tangents: Mapping[str, np.ndarray]) -> np.ndarray:
        """Product rule: Σ_k p_k var_k^{p_k−1} δvar_k Π_{other} var^p."""
        total = 0.0
        for k, p in self.powers.items():
            term = self.coefficient * p * variables[k] ** (p - 1) * tangents[k]
            for k2, p2 in self.powers.items():
                if k2 != k:
                    term = term * variables[k2] ** p2
            total = total + term
        return total

    def to_dict(self) -> Dict[str, Any]:
        return {"coefficient": [self.coefficient.real, self.coefficient.imag], "powers": dict(self.powers)}


def field_variables(values: np.ndarray, grid) -> Dict[str, np.ndarray]:
    F = forward(values)
    out: Dict[str, np.ndarray] = {"u": values, "ubar": np.conj(values)}
    for j, k in enumerate(grid.wavenumbers):
        d = inverse(1j * k * F)
        out[f"du{j}"] = d
        out[f"dubar{j}"] = np.conj(d)
    return out


@dataclass(frozen=True)
class Nonlinearity:
    monomials: Tuple[Monomial, ...] = ()

    @property
    def is_zero(self) -> bool:
        return all(m.coefficient == 0 for m in self.monomials)

    @property
    def min_degree(self) -> Optional[int]:
        degs = [m.degree for m in self.monomials if m.coefficient != 0]
        return min(degs) if degs else None

    def evaluate_values(self, values: np.ndarray, grid) -> np.ndarray:
        out = np.zeros(np.shape(values), dtype=np.complex128)
        if self.is_zero:
            return out
        variables = field_variables(values, grid)
        for m in self.monomials:
            out = out + m.evaluate(variables)
        return out

    def directional_values(self, values: np.ndarray, direction: np.ndarray, grid) -> np.ndarray:
        out = np.zeros(np.shape(values), dtype=np.complex128)
        if self.is_zero:
            return out
        variables = field_variables(values, grid)
        tangents = field_variables(direction, grid)
        for m in self.monomials:
            out = out + m.directional(variables, tangents)
        return out


# -----------------------------
# the model
# -----------------------------
@dataclass(frozen=True)
class ModelSpec:
    """
    i u_t + g^{jk}(u) ∂_j∂_k u = N(u, ∂u) on the n-torus standing in for R^n.

    Declared flags are kept as given; structure.validate_structure derives
    them from the metric and monomials and reports disagreements.
    """

    name: str
    dim: int
    metric: Metric
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    is_cubic: Optional[bool] = None
    is_conservative: Optional[bool] = None
    has_phase_rotation: Optional[bool] = None
    positivity_radius: float = 0.5

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ModelValidationError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.metric.dim != self.dim:
            raise ModelValidationError(f"metric dim {self.metric.dim} does not match model dim {self.dim}")
        for m in self.nonlinearity.monomials:
            if m.max_axis() >= self.dim:
                raise ModelValidationError(f"monomial {m.powers} differentiates along an axis >= dim {self.dim}")
        if m_derivs := [m for m in self.nonlinearity.monomials if m.derivative_count > 2]:
            raise ModelValidationError(f"N is at most quadratic in ∂u; offending monomials: {[m.powers for m in m_derivs]}")
        g0 = self.metric.evaluate(np.zeros(1, dtype=complex))[..., 0]
        if not np.array_equal(g0, np.eye(self.dim)):
            raise ModelValidationError(f"g(0) must equal the identity exactly, got {g0.tolist()}")
        margin = ellipticity_margin(self.metric, self.positivity_radius)
        if margin <= 0:
            raise ModelValidationError(
                f"g(u) is not positive definite for |u| <= {self.positivity_radius} (min eigenvalue {margin:.3g})"
            )

    def g(self, values: np.ndarray) -> np.ndarray:
        return self.metric.evaluate(values)

    def g_minus_identity(self, values: np.ndarray) -> np.ndarray:
        return self.metric.deviation(values)

    def N(self, u: Field) -> Field:
        return Field(u.grid, self.nonlinearity.evaluate_values(u.values, u.grid))

    def N_values(self, values: np.ndarray, grid) -> np.ndarray:
        return self.nonlinearity.evaluate_values(values, grid)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "dim": self.dim,
            "metric": self.metric.describe(),
            "nonlinearity": [m.to_dict() for m in self.nonlinearity.monomials],
            "flags": {
                "is_cubic": self.is_cubic,
                "is_conservative": self.is_conservative,
                "has_phase_rotation": self.has_phase_rotation,
            },
        }


def ellipticity_margin(metric: Metric, radius: float, *, samples: int = 512, seed: int = 0) -> float:
    """Smallest eigenvalue of g(u) over |u| ≤ radius (sampled, boundary included)."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, samples))
    r[: samples // 4] = radius
    theta = rng.uniform(0.0, 2.0 * np.pi, samples)
    values = r * np.exp(1j * theta)
    G = metric.evaluate(values)
    mats = np.moveaxis(G, (0, 1), (-2, -1))
    if not np.allclose(mats, np.swapaxes(mats, -1, -2), rtol=0, atol=1e-14):
        return -np.inf
    return float(np.min(np.linalg.eigvalsh(mats)))


# -----------------------------
# loading model files (TOML / JSON)
# -----------------------------
def _coefficient(raw: Any) -> complex:
    if isinstance(raw, (list, tuple)):
        if len(raw) != 2:
            raise ModelValidationError(f"complex coefficient must be [re, im], got {raw}")
        return complex(float(raw[0]), float(raw[1]))
    if isinstance(raw, Mapping):
        return complex(float(raw.get("re", 0.0)), float(raw.get("im", 0.0)))
    return complex(raw)


def model_from_dict(data: Mapping[str, Any]) -> ModelSpec:
    try:
        dim = int(data["dim"])
        metric_block = dict(data.get("metric") or {"kind": "identity"})
        kind = metric_block.pop("kind")
    except (KeyError, TypeError, ValueError) as e:
        raise ModelValidationError(f"model description incomplete: {e}") from e
    metric = make_metric(kind, dim, metric_block)
    monomials = tuple(
        Monomial(coefficient=_coefficient(m.get("coefficient", 1.0)), powers=dict(m.get("powers") or {}))
        for m in (data.get("nonlinearity") or [])
    )
    flags = dict(data.get("flags") or {})
    return ModelSpec(
        name=str(data.get("name") or f"{kind}-{dim}d"),
        dim=dim,
        metric=metric,
        nonlinearity=Nonlinearity(monomials),
        is_cubic=flags.get("is_cubic"),
        is_conservative=flags.get("is_conservative"),
        has_phase_rotation=flags.get("has_phase_rotation"),
        positivity_radius=float(data.get("positivity_radius", 0.5)),
    )


def load_model(path: Path) -> ModelSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        data = tomllib.loads(text)
    elif path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        raise ModelValidationError(f"model file must be .toml or .json: {path}")
    model = model_from_dict(data)
    logger.info("loaded model %s (dim=%d, metric=%s, %d monomials)", model.name, model.dim, model.metric.kind, len(model.nonlinearity.monomials))
    return model


# -----------------------------
# built-in models
# -----------------------------
def cubic_monomial(coefficient: complex = 1.0) -> Monomial:
    """|u|² u."""
    return Monomial(coefficient, {"u": 2, "ubar": 1})


def flat_model(dim: int) -> ModelSpec:
    return ModelSpec(name=f"flat-{dim}d", dim=dim, metric=make_metric("identity", dim), is_cubic=True, has_phase_rotation=True)


def semilinear_cubic_model(dim: int, coefficient: float = 1.0) -> ModelSpec:
    return ModelSpec(
        name=f"cubic-nls-{dim}d",
        dim=dim,
        metric=make_metric("identity", dim),
        nonlinearity=Nonlinearity((cubic_monomial(coefficient),)),
        is_cubic=True,
        is_conservative=True,
        has_phase_rotation=True,
    )


def quasilinear_cubic_model(
    dim: int,
    *,
    alpha: float = 1.0,
    coefficient: float = 1.0,
    anisotropic: Optional[Sequence[float]] = None,
) -> ModelSpec:
    if anisotropic is None:
        metric = make_metric("identity-plus-|u|^2", dim, {"alpha": alpha})
    else:
        metric = make_metric("identity-plus-|u|^2-anisotropic", dim, {"alpha": alpha, "weights": list(anisotropic)})
    return ModelSpec(
        name=f"qnls-{metric.kind}-{dim}d",
        dim=dim,
        metric=metric,
        nonlinearity=Nonlinearity((cubic_monomial(coefficient),)),
        is_cubic=True,
        is_conservative=True,
        has_phase_rotation=True,
    )

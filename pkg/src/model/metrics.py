from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from src.common.errors import ModelValidationError

logger = logging.getLogger(__name__)


class Metric:
    """
    Pointwise metric map u ↦ g(u), a real symmetric n×n matrix per point.

    Subclasses implement `deviation` (g − I) and its directional derivative.
    Arrays returned have shape (n, n, *values.shape).
    """

    kind: str = ""
    dim: int = 1

    def deviation(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def deviation_derivative(self, values: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """d/dε (g(u + εw) − I) at ε = 0."""
        raise NotImplementedError

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        return _identity(self.dim, values.shape) + self.deviation(values)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind}


def _identity(dim: int, shape) -> np.ndarray:
    eye = np.eye(dim).reshape((dim, dim) + (1,) * len(shape))
    return np.broadcast_to(eye, (dim, dim) + tuple(shape)).copy()


def _outer(matrix: np.ndarray, scalar: np.ndarray) -> np.ndarray:
    scalar = np.asarray(scalar, dtype=float)
    return matrix.reshape(matrix.shape + (1,) * scalar.ndim) * scalar[None, None, ...]


@dataclass(frozen=True)
class IdentityMetric(Metric):
    dim: int = 1
    kind: str = "identity"

    def deviation(self, values: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim, self.dim) + np.shape(values))

    def deviation_derivative(self, values: np.ndarray, direction: np.ndarray) -> np.ndarray:
        return np.zeros((self.dim, self.dim) + np.shape(values))


@dataclass(frozen=True)
class QuadraticMetric(Metric):
    """g = I + α|u|² A with a constant symmetric matrix A."""

    dim: int = 1
    alpha: float = 1.0
    matrix: Optional[np.ndarray] = field(default=None, compare=False)
    kind: str = "identity-plus-|u|^2"

    def __post_init__(self) -> None:
        A = np.eye(self.dim) if self.matrix is None else np.asarray(self.matrix, dtype=float)
        if A.shape != (self.dim, self.dim):
            raise ModelValidationError(f"metric matrix must be {self.dim}x{self.dim}, got {A.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=0):
            raise ModelValidationError("metric matrix must be symmetric")
        object.__setattr__(self, "matrix", A)

    def deviation(self, values: np.ndarray) -> np.ndarray:
        return _outer(self.alpha * self.matrix, np.abs(values) ** 2)

    def deviation_derivative(self, values: np.ndarray, direction: np.ndarray) -> np.ndarray:
        return _outer(self.alpha * self.matrix, 2.0 * np.real(np.conj(values) * direction))

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alpha": self.alpha, "matrix": self.matrix.tolist()}


@dataclass(frozen=True)
class LinearRealPartMetric(Metric):
    """g = (1 + α Re u) I. Not cubic; kept to exercise the structure validators."""

    dim: int = 1
    alpha: float = 1.0
    kind: str = "identity-plus-re-u"

    def deviation(self, values: np.ndarray) -> np.ndarray:
        return _outer(self.alpha * np.eye(self.dim), np.real(values))

    def deviation_derivative(self, values: np.ndarray, direction: np.ndarray) -> np.ndarray:
        return _outer(self.alpha * np.eye(self.dim), np.real(direction))

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alpha": self.alpha}


# -----------------------------
# registry
# -----------------------------
MetricFactory = Callable[[int, Mapping[str, Any]], Metric]

_REGISTRY: Dict[str, MetricFactory] = {}


def register_metric(kind: str, factory: MetricFactory) -> None:
    if kind in _REGISTRY:
        logger.warning("metric kind %r re-registered", kind)
    _REGISTRY[kind] = factory


def metric_kinds() -> list[str]:
    return sorted(_REGISTRY)


def make_metric(kind: str, dim: int, params: Optional[Mapping[str, Any]] = None) -> Metric:
    params = dict(params or {})
    if kind not in _REGISTRY:
        raise ModelValidationError(f"unknown metric kind {kind!r}; known: {', '.join(metric_kinds())}")
    return _REGISTRY[kind](dim, params)


def _anisotropic(dim: int, p: Mapping[str, Any]) -> Metric:
    if "matrix" in p:
        A = np.asarray(p["matrix"], dtype=float)
    else:
        weights = p.get("weights") or [1.0 + a for a in range(dim)]
        if len(weights) != dim:
            raise ModelValidationError(f"anisotropic weights need {dim} entries, got {len(weights)}")
        A = np.diag(np.asarray(weights, dtype=float))
    return QuadraticMetric(dim=dim, alpha=float(p.get("alpha", 1.0)), matrix=A, kind="identity-plus-|u|^2-anisotropic")


register_metric("identity", lambda dim, p: IdentityMetric(dim=dim))
register_metric("identity-plus-|u|^2", lambda dim, p: QuadraticMetric(dim=dim, alpha=float(p.get("alpha", 1.0))))
register_metric("identity-plus-|u|^2-anisotropic", _anisotropic)
register_metric("identity-plus-re-u", lambda dim, p: LinearRealPartMetric(dim=dim, alpha=float(p.get("alpha", 1.0))))

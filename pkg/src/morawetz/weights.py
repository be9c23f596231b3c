from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from src.common.errors import ConfigError
from src.spectral.grid import BoxGrid

logger = logging.getLogger(__name__)

DIAGONAL_RULES = ("exclude", "lattice")

# lim_{R→∞} (Σ'_{m∈ℤⁿ, |m|<R} 1/|m| − ∫_{|x|<R} dx/|x|)
LATTICE_ZETA = {2: -3.900264920001955, 3: -2.837297479480620}

Radial = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RadialProfile:
    """
    a(x) = φ(|x|) through φ', φ'' and φ'(r)/r.

    `smooth` profiles have a finite Hessian φ''(0)I at the origin; the others
    are handled by the diagonal rule of the weight.
    """

    name: str
    dphi: Radial
    d2phi: Radial
    dphi_over_r: Radial
    smooth: bool = True


def _safe(r: np.ndarray) -> np.ndarray:
    return np.where(r > 0, r, 1.0)


_PROFILES: Dict[str, RadialProfile] = {}


def register_weight(profile: RadialProfile) -> None:
    if profile.name in _PROFILES:
        raise ConfigError(f"weight kind {profile.name!r} already registered")
    _PROFILES[profile.name] = profile


def weight_kinds():
    return sorted(_PROFILES)


register_weight(
    RadialProfile(
        "abs",
        dphi=lambda r: np.ones_like(r),
        d2phi=lambda r: np.zeros_like(r),
        dphi_over_r=lambda r: np.where(r > 0, 1.0 / _safe(r), 0.0),
        smooth=False,
    )
)
register_weight(
    RadialProfile(
        "quadratic",
        dphi=lambda r: 2.0 * r,
        d2phi=lambda r: np.full_like(r, 2.0),
        dphi_over_r=lambda r: np.full_like(r, 2.0),
    )
)
register_weight(
    RadialProfile(
        "bracket",
        dphi=lambda r: r / np.sqrt(1.0 + r**2),
        d2phi=lambda r: (1.0 + r**2) ** -1.5,
        dphi_over_r=lambda r: 1.0 / np.sqrt(1.0 + r**2),
    )
)


@dataclass(frozen=True)
class WeightSpec:
    """
    Convex radial weight a with gradient a_j and Hessian a_{jm}.

    `minimal_image` measures x − y on the torus by the shortest representative;
    it defaults to on for every kind except `quadratic`, whose plain
    differences keep x ↦ |x|² polynomial. `diagonal` decides the Hessian of a
    non-smooth profile at z = 0: "exclude" drops the cell, "lattice" puts the
    lattice-sum corrected principal value there.
    """

    kind: str = "abs"
    minimal_image: Optional[bool] = None
    diagonal: str = "exclude"
    profile: RadialProfile = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in _PROFILES:
            raise ConfigError(f"unknown weight kind {self.kind!r}; known: {weight_kinds()}")
        if self.diagonal not in DIAGONAL_RULES:
            raise ConfigError(f"diagonal rule must be one of {DIAGONAL_RULES}, got {self.diagonal!r}")
        object.__setattr__(self, "profile", _PROFILES[self.kind])
        if self.minimal_image is None:
            object.__setattr__(self, "minimal_image", self.kind != "quadratic")

    def displacement(self, grid: BoxGrid, x: np.ndarray, y: np.ndarray, x0=None) -> np.ndarray:
        """z = x − y − x0 for point sets x (n, A) and y (n, B); shape (n, A, B)."""
        z = x[:, :, None] - y[:, None, :]
        if x0 is not None:
            z = z - np.asarray(x0, dtype=float).reshape(-1, 1, 1)
        if self.minimal_image:
            L = grid.box_length
            z = z - L * np.round(z / L)
        return z

    def gradient(self, z: np.ndarray) -> np.ndarray:
        """a_j(z) = φ'(r) z_j / r, zero at r = 0."""
        r = np.sqrt(np.sum(z**2, axis=0))
        return np.where(r > 0, self.profile.dphi(r) / _safe(r), 0.0) * z

    def hessian(self, z: np.ndarray, grid: Optional[BoxGrid] = None) -> np.ndarray:
        """a_{jm}(z) = φ''ẑ_jẑ_m + (φ'/r)(δ_jm − ẑ_jẑ_m), shape (n, n, ...)."""
        n = z.shape[0]
        r = np.sqrt(np.sum(z**2, axis=0))
        zhat = np.where(r > 0, z / _safe(r), 0.0)
        outer = zhat[:, None] * zhat[None, :]
        eye = np.eye(n).reshape((n, n) + (1,) * r.ndim)
        h = self.profile.d2phi(r) * outer + self.profile.dphi_over_r(r) * (eye - outer)
        origin = r == 0
        if np.any(origin):
            h = np.where(origin, self.origin_hessian(n, grid).reshape((n, n) + (1,) * r.ndim), h)
        return h

    def origin_hessian(self, n: int, grid: Optional[BoxGrid] = None) -> np.ndarray:
        p = self.profile
        if p.smooth:
            return float(p.d2phi(np.zeros(1))[0]) * np.eye(n)
        if self.diagonal == "exclude":
            return np.zeros((n, n))
        if grid is None:
            raise ConfigError("the lattice diagonal rule needs the grid spacing")
        if n == 1:
            # |x|'' = 2δ
            return np.array([[2.0 / grid.dx]])
        if n not in LATTICE_ZETA:
            raise ConfigError(f"no lattice constant for dimension {n}")
        return ((n - 1) / n) * (-LATTICE_ZETA[n] / grid.dx) * np.eye(n)

    def check_convex(self, dim: int, *, samples: int = 512, radius: float = 8.0, seed: int = 0) -> float:
        """Smallest Hessian eigenvalue over random z ≠ 0; raises when clearly negative."""
        rng = np.random.default_rng(seed)
        z = rng.uniform(-radius, radius, (dim, samples))
        h = np.moveaxis(self.hessian(z), (0, 1), (-2, -1))
        low = float(np.min(np.linalg.eigvalsh(h)))
        if low < -1e-12:
            raise ConfigError(f"weight {self.kind!r} is not convex: Hessian eigenvalue {low:.3g}")
        return low

    def describe(self) -> dict:
        return {"kind": self.kind, "minimal_image": self.minimal_image, "diagonal": self.diagonal}

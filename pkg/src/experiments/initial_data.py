from __future__ import annotations

import hashlib
from typing import Any, Callable, Dict, List, Mapping

import numpy as np
from numpy.random import Generator, SeedSequence

from src.common.errors import ConfigError
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.spectral.grid import BoxGrid, Field

InitialBuilder = Callable[[BoxGrid, Mapping[str, Any], Generator], Field]

_REGISTRY: Dict[str, InitialBuilder] = {}


def stable_hash_int(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little", signed=False)


def tagged_rng(seed: int, tag: str) -> Generator:
    """Independent stream per (seed, tag); adding a consumer never shifts another's numbers."""
    return np.random.default_rng(SeedSequence(entropy=[int(seed), stable_hash_int(tag)]))


def register_initial(kind: str, builder: InitialBuilder) -> None:
    _REGISTRY[kind] = builder


def initial_kinds() -> List[str]:
    return sorted(_REGISTRY)


def build_initial(grid: BoxGrid, spec: Mapping[str, Any], rng: Generator) -> Field:
    kind = spec.get("kind")
    if kind not in _REGISTRY:
        raise ConfigError(f"unknown initial-data kind {kind!r}; known: {', '.join(initial_kinds())}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    return _REGISTRY[kind](grid, params, rng)


def _vector(raw: Any, dim: int, name: str) -> np.ndarray:
    if raw is None:
        return np.zeros(dim)
    v = np.asarray(raw, dtype=float).reshape(-1)
    if v.size == 1:
        v = np.full(dim, float(v[0]))
    if v.size != dim:
        raise ConfigError(f"{name} needs {dim} components, got {v.size}")
    return v


def _normalise(values: np.ndarray, amplitude: float, label: str) -> np.ndarray:
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        raise ConfigError(f"{label} produced a zero field on this grid")
    return values * (amplitude / peak)


def shell_noise(grid: BoxGrid, k: int, rng: Generator, bank: DyadicFilterBank) -> np.ndarray:
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    try:
        return bank.project(Field(grid, noise), int(k)).values
    except ValueError as e:
        raise ConfigError(f"shell {k}: {e}") from e


# -----------------------------
# built-in kinds
# -----------------------------
def gaussian_bump(grid: BoxGrid, p: Mapping[str, Any], rng: Generator) -> Field:
    """A e^{-|x-c|²/2w²} e^{iξ₀·(x-c)}, centred at the box centre plus `offset`."""
    width = float(p.get("width", 0.6))
    if not width > 0:
        raise ConfigError(f"gaussian-bump width must be positive, got {width}")
    center = grid.center + _vector(p.get("offset"), grid.dim, "offset")
    xi0 = _vector(p.get("xi0"), grid.dim, "xi0")
    r2 = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for x, c, k in zip(grid.coordinates, center, xi0):
        r2 = r2 + (x - c) ** 2
        phase = phase + k * (x - c)
    return Field(grid, float(p.get("amplitude", 1.0)) * np.exp(-r2 / (2.0 * width**2) + 1j * phase))


def shell_random(grid: BoxGrid, p: Mapping[str, Any], rng: Generator) -> Field:
    """Complex Gaussian noise projected to shell k, scaled to peak modulus `amplitude`."""
    bank = DyadicFilterBank(grid)
    k = int(p.get("shell", 1))
    values = shell_noise(grid, k, rng, bank)
    return Field(grid, _normalise(values, float(p.get("amplitude", 1.0)), f"shell-random (shell {k})"))


def plane_wave(grid: BoxGrid, p: Mapping[str, Any], rng: Generator) -> Field:
    """A e^{iξ·x} with ξ = (2π/L)·mode on the lattice."""
    mode = np.asarray(p.get("mode", [1] + [0] * (grid.dim - 1)), dtype=int).reshape(-1)
    if mode.size != grid.dim:
        raise ConfigError(f"plane-wave mode needs {grid.dim} entries, got {mode.size}")
    if np.any(np.abs(mode) >= grid.points_per_axis // 2):
        raise ConfigError(f"plane-wave mode {mode.tolist()} is not below the Nyquist index {grid.points_per_axis // 2}")
    phase = sum(grid.dk * m * x for m, x in zip(mode, grid.coordinates))
    return Field(grid, float(p.get("amplitude", 1.0)) * np.exp(1j * phase))


def two_shell(grid: BoxGrid, p: Mapping[str, Any], rng: Generator) -> Field:
    """Two shell-random pieces; piece i has peak modulus amplitude·weights[i]."""
    shells = list(p.get("shells", [1, 3]))
    weights = list(p.get("weights", [1.0, 0.5]))
    if len(shells) != 2 or len(weights) != 2:
        raise ConfigError("two-shell needs shells = [k1, k2] and weights = [w1, w2]")
    if shells[0] == shells[1]:
        raise ConfigError(f"two-shell needs distinct shells, got {shells}")
    bank = DyadicFilterBank(grid)
    amplitude = float(p.get("amplitude", 1.0))
    total = np.zeros(grid.shape, dtype=np.complex128)
    for k, w in zip(shells, weights):
        total = total + _normalise(shell_noise(grid, k, rng, bank), amplitude * float(w), f"two-shell (shell {k})")
    return Field(grid, total)


register_initial("gaussian-bump", gaussian_bump)
register_initial("shell-random", shell_random)
register_initial("plane-wave", plane_wave)
register_initial("two-shell", two_shell)

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from src.common.errors import ShellRangeError
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import apply_multiplier

logger = logging.getLogger(__name__)


def _phi(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C^∞ step: 0 for t <= 0, 1 for t >= 1."""
    a = _phi(t)
    b = _phi(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def psi(r: np.ndarray) -> np.ndarray:
    """Even bump, 1 on [-1, 1], 0 outside (-2, 2)."""
    return smooth_step(2.0 - np.abs(np.asarray(r, dtype=float)))


@dataclass(frozen=True)
class DyadicFilterBank:
    """
    Shells k = 1..K with K = ⌊log₂ ξ_max⌋:

        p_1 = ψ(ξ/2),  p_k = ψ(2^{-k}ξ) − ψ(2^{-k+1}ξ),  p_K = 1 − ψ(2^{-K+1}ξ).

    The top shell takes everything above 2^{K-1}, so Σ_k p_k = 1 on the whole lattice.
    """

    grid: BoxGrid

    @cached_property
    def shell_count(self) -> int:
        xi_max = self.grid.xi_max
        return max(1, int(math.floor(math.log2(xi_max)))) if xi_max > 1 else 1

    @property
    def shells(self) -> range:
        return range(1, self.shell_count + 1)

    def _check(self, k: int) -> None:
        if k not in self.shells:
            raise ShellRangeError(f"shell {k} outside 1..{self.shell_count}")

    def leq_symbol(self, k: int) -> np.ndarray:
        """ψ(2^{-k}|ξ|); any integer k is allowed here."""
        return psi(self.grid.xi_abs * 2.0 ** (-k))

    def low_pass_symbol(self, k: int) -> np.ndarray:
        """Symbol of project_leq."""
        if k >= self.shell_count:
            return np.ones(self.grid.shape)
        return self.leq_symbol(k)

    def shell_symbol(self, k: int) -> np.ndarray:
        return self.shell_profile(k, self.grid.xi_abs)

    def shell_profile(self, k: int, r: np.ndarray) -> np.ndarray:
        """p_k as a function of |ξ| = r, for off-lattice evaluation."""
        self._check(k)
        r = np.asarray(r, dtype=float)
        K = self.shell_count
        if K == 1:
            return np.ones_like(r)
        if k == 1:
            return psi(r / 2.0)
        if k == K:
            return 1.0 - psi(r * 2.0 ** (-K + 1))
        return psi(r * 2.0 ** (-k)) - psi(r * 2.0 ** (-k + 1))

    def widened_symbol(self, k: int) -> np.ndarray:
        """Smooth multiplier equal to 1 on [2^{k-2}, 2^{k+2}] and supported in [2^{k-3}, 2^{k+3}]."""
        return self.leq_symbol(k + 2) - self.leq_symbol(k - 3)

    def project(self, f: Field, k: int) -> Field:
        f.grid.require_same(self.grid)
        return apply_multiplier(f, self.shell_symbol(k))

    def low_pass(self, f: Field, k: int) -> Field:
        """ψ(2^{-k}D) for any integer k, the identity once k ≥ K."""
        f.grid.require_same(self.grid)
        if k >= self.shell_count:
            return f
        return apply_multiplier(f, self.low_pass_symbol(k))

    def project_leq(self, f: Field, k: int) -> Field:
        """P_{≤k} for a shell k in 1..K."""
        self._check(k)
        return self.low_pass(f, k)

    def project_gt(self, f: Field, k: int) -> Field:
        """P_{>k} = 1 − P_{≤k} for a shell k in 1..K."""
        self._check(k)
        f.grid.require_same(self.grid)
        if k == self.shell_count:
            return Field.zeros(self.grid)
        return apply_multiplier(f, 1.0 - self.leq_symbol(k))

    def project_widened(self, f: Field, k: int) -> Field:
        f.grid.require_same(self.grid)
        return apply_multiplier(f, self.widened_symbol(k))

    def decompose(self, f: Field) -> list[Field]:
        return [self.project(f, k) for k in self.shells]

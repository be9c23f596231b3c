from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from src.common.errors import SymbolError
from src.littlewood_paley.filter_bank import psi, smooth_step
from src.multilinear.symbols import TrilinearSymbol, Wavevector, closed_form_symbol

DIAGONAL_THRESHOLD = 1.0 / 8.0


def _norm(xi: Wavevector) -> np.ndarray:
    return np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in xi))


def _bracket(xi: Wavevector) -> np.ndarray:
    return np.sqrt(1.0 + _norm(xi) ** 2)


def _diff(a: Wavevector, b: Wavevector) -> list:
    return [np.asarray(x, dtype=float) - np.asarray(y, dtype=float) for x, y in zip(a, b)]


def diagonal_ratio(x1: Wavevector, x2: Wavevector, x3: Wavevector) -> np.ndarray:
    spread = _norm(_diff(x1, x2)) + _norm(_diff(x1, x3)) + _norm(_diff(x2, x3))
    return spread / (_bracket(x1) + _bracket(x2) + _bracket(x3))


def c_diag(x1: Wavevector, x2: Wavevector, x3: Wavevector, theta: float = DIAGONAL_THRESHOLD) -> np.ndarray:
    """1 where the spread ratio is below θ/2, 0 above θ, smooth in between."""
    r = diagonal_ratio(x1, x2, x3)
    return 1.0 - smooth_step((r - 0.5 * theta) / (0.5 * theta))


def shell_weight(xi: Wavevector, k: int) -> np.ndarray:
    """p_λ(|ξ|) for λ = 2^k, with the same profile as the filter bank's interior shells."""
    r = _norm(xi)
    if k <= 1:
        return psi(r / 2.0)
    return psi(r * 2.0 ** (-k)) - psi(r * 2.0 ** (-k + 1))


@dataclass(frozen=True)
class CubicSplit:
    resonant: TrilinearSymbol
    low: TrilinearSymbol
    nonresonant: TrilinearSymbol
    transversal: TrilinearSymbol
    k: int
    theta: float

    def parts(self) -> Dict[str, TrilinearSymbol]:
        return {"res": self.resonant, "low": self.low, "nr": self.nonresonant, "tr": self.transversal}

    def total(self, x1: Wavevector, x2: Wavevector, x3: Wavevector) -> np.ndarray:
        return self.resonant(x1, x2, x3) + self.low(x1, x2, x3) + self.nonresonant(x1, x2, x3) + self.transversal(x1, x2, x3)


def split_weights(x1: Wavevector, x2: Wavevector, x3: Wavevector, k: int, theta: float, phase_rotation: bool) -> Dict[str, np.ndarray]:
    top = np.maximum(np.maximum(_norm(x1), _norm(x2)), _norm(x3))
    low = psi(top)
    d = c_diag(x1, x2, x3, theta)
    if phase_rotation:
        out_freq = [np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + np.asarray(c, dtype=float) for a, b, c in zip(x1, x2, x3)]
        p = shell_weight(out_freq, k)
    else:
        p = np.zeros_like(d)
    return {
        "res": p * d * (1.0 - low),
        "low": low + 0.0 * d,
        "nr": (1.0 - low) * d * (1.0 - p),
        "tr": (1.0 - low) * (1.0 - d),
    }


def split_cubic(sym: TrilinearSymbol, k: int, *, theta: float = DIAGONAL_THRESHOLD) -> CubicSplit:
    """
    C = C^res_λ + C^0 + C^nr + C^tr at λ = 2^k. The low part carries max|ξ_i| ≲ 1,
    the resonant part is the diagonal cutoff times the output shell p_λ(ξ¹−ξ²+ξ³)
    (phase-rotation patterns only), the transversal part is off the diagonal.
    """
    if sym.arity != 3:
        raise SymbolError(f"split_cubic needs a cubic symbol, got arity {sym.arity}")
    if k < 1:
        raise SymbolError(f"dyadic index must be >= 1, got {k}")
    phase = sym.is_phase_rotation

    def part(name: str) -> TrilinearSymbol:
        def fn(x1, x2, x3):
            w = split_weights(x1, x2, x3, k, theta, phase)[name]
            return w * sym(x1, x2, x3)

        return closed_form_symbol(fn, sym.pattern, name=f"{sym.name}[{name},k={k}]")

    return CubicSplit(
        resonant=part("res"),
        low=part("low"),
        nonresonant=part("nr"),
        transversal=part("tr"),
        k=k,
        theta=theta,
    )

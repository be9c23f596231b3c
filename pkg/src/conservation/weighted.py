from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.common.errors import SymbolError
from src.conservation.residuals import STENCIL_HALF_WIDTH, ResidualLedger, central_difference, require_stencil
from src.conservation.densities import divergence_values
from src.evolution.trajectory import Trajectory
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.multilinear.symbols import Factor, SeparableTerm, one, xi_component
from src.spectral.grid import BoxGrid, Field, forward, inverse

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BilinearSymbol:
    """
    a(ξ, η) = Σ_r c_r α_r(ξ) β_r(η) for the form A(u, w̄): ξ is the frequency
    of u, η the frequency of w in the conjugated slot.
    """

    terms: Tuple[SeparableTerm, ...]
    name: str = ""

    def __post_init__(self) -> None:
        if not self.terms:
            raise SymbolError("bilinear symbol needs at least one term")
        for t in self.terms:
            if len(t.factors) != 2:
                raise SymbolError(f"bilinear term has {len(t.factors)} factors")

    def __call__(self, xi, eta) -> np.ndarray:
        out = 0.0
        for t in self.terms:
            out = out + t.coefficient * t.factors[0](xi) * t.factors[1](eta)
        return np.asarray(out, dtype=complex)

    def hermitian_defect(self, dim: int, *, samples: int = 256, radius: float = 16.0, seed: int = 0) -> float:
        """max |a(η, ξ) − conj a(ξ, η)| over random pairs."""
        rng = np.random.default_rng(seed)
        xi = list(rng.uniform(-radius, radius, (dim, samples)))
        eta = list(rng.uniform(-radius, radius, (dim, samples)))
        return float(np.max(np.abs(self(eta, xi) - np.conj(self(xi, eta)))))

    def times(self, left: Optional[Factor], right: Optional[Factor]) -> "BilinearSymbol":
        """a(ξ, η)·l(ξ)·r(η) as a new separable symbol."""
        terms = []
        for t in self.terms:
            a, b = t.factors
            if left is not None:
                a = Factor(f"{left.label}*{a.label}", lambda xi, a=a, f=left: f(xi) * a(xi))
            if right is not None:
                b = Factor(f"{right.label}*{b.label}", lambda xi, b=b, f=right: f(xi) * b(xi))
            terms.append(SeparableTerm(t.coefficient, (a, b)))
        return BilinearSymbol(tuple(terms), name=self.name)


def unit_symbol() -> BilinearSymbol:
    return BilinearSymbol((SeparableTerm(1.0, (one(), one())),), name="1")


def shell_symbol_pair(bank: DyadicFilterBank, k: int) -> BilinearSymbol:
    """a(ξ, η) = p_k(ξ) p_k(η)."""
    bank._check(k)

    def p(xi) -> np.ndarray:
        return bank.shell_profile(k, np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in xi)))

    f = Factor(f"p_{k}", p)
    return BilinearSymbol((SeparableTerm(1.0, (f, f)),), name=f"p_{k}(xi)p_{k}(eta)")


def bilinear_values(a: BilinearSymbol, u: Field, w: Optional[Field] = None) -> np.ndarray:
    """Physical values of A(u, w̄); w defaults to u."""
    w = u if w is None else w
    grid = u.grid
    grid.require_same(w.grid)
    U, W = forward(u.values), forward(w.values)
    xi = grid.wavenumbers
    out = np.zeros(grid.shape, dtype=np.complex128)
    for t in a.terms:
        alpha, beta = t.factors
        left = inverse(U * np.broadcast_to(alpha(xi), grid.shape))
        right = np.conj(inverse(W * np.conj(np.broadcast_to(beta(xi), grid.shape))))
        out = out + t.coefficient * left * right
    return out


@dataclass(frozen=True, eq=False)
class WeightedDensities:
    """M_a, P_{j,a} and E_{jm,a} for one snapshot; real parts kept."""

    grid: BoxGrid
    M: np.ndarray
    P: np.ndarray
    E: np.ndarray
    imaginary_residue: float


def weighted_mass(u: Field, a: BilinearSymbol, *, check_hermitian: bool = True) -> WeightedDensities:
    """
    M_a = A(u, ū), with flux symbols p_{j,a} = −(ξ_j + η_j)a and
    e_{jm,a} = (ξ_j + η_j)(ξ_m + η_m)a.
    """
    grid = u.grid
    n = grid.dim
    if check_hermitian:
        defect = a.hermitian_defect(n)
        if defect > HERMITIAN_TOLERANCE:
            raise SymbolError(f"symbol {a.name!r} is not Hermitian-symmetric (defect {defect:.3g})")
    M = bilinear_values(a, u)
    xs = [xi_component(j) for j in range(n)]
    P = np.empty((n,) + grid.shape, dtype=np.complex128)
    E = np.empty((n, n) + grid.shape, dtype=np.complex128)
    for j in range(n):
        P[j] = -(bilinear_values(a.times(xs[j], None), u) + bilinear_values(a.times(None, xs[j]), u))
    for j in range(n):
        for m in range(j, n):
            E[j, m] = (
                bilinear_values(a.times(_product(xs[j], xs[m]), None), u)
                + bilinear_values(a.times(xs[j], xs[m]), u)
                + bilinear_values(a.times(xs[m], xs[j]), u)
                + bilinear_values(a.times(None, _product(xs[j], xs[m])), u)
            )
            E[m, j] = E[j, m]
    residue = max(float(np.max(np.abs(M.imag))), float(np.max(np.abs(P.imag))), float(np.max(np.abs(E.imag))))
    scale = max(float(np.max(np.abs(M))), 1e-300)
    if residue > 1e-10 * scale:
        logger.warning("weighted densities carry an imaginary residue %.3g (scale %.3g)", residue, scale)
    return WeightedDensities(grid=grid, M=M.real, P=P.real, E=E.real, imaginary_residue=residue)


def _product(a: Factor, b: Factor) -> Factor:
    return Factor(f"{a.label}*{b.label}", lambda xi: a(xi) * b(xi))


def weighted_flux_residual(traj: Trajectory, a: BilinearSymbol) -> ResidualLedger:
    """Flat-flow residuals of ∂_tM_a = ∂_jP_{j,a} and ∂_tP_{j,a} = ∂_mE_{jm,a}."""
    require_stencil(traj)
    grid = traj.grid
    dt = traj.spacing
    sets = [weighted_mass(f, a, check_hermitian=(i == 0)) for i, (_, f) in enumerate(traj.items())]
    Ms = [d.M for d in sets]
    Ps = [d.P for d in sets]
    ledger = ResidualLedger(meta={"kind": "weighted", "symbol": a.name, "dt": dt})
    for i in range(STENCIL_HALF_WIDTH, len(sets) - STENCIL_HALF_WIDTH):
        t = traj.times[i]
        d = sets[i]
        ledger.add(t, "weighted_mass", central_difference(Ms, i, dt) - divergence_values(d.P, grid), grid)
        dP = central_difference(Ps, i, dt)
        for j in range(grid.dim):
            ledger.add(t, f"weighted_momentum_{j}", dP[j] - divergence_values(d.E[j], grid), grid)
    return ledger

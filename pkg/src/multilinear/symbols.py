from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.common.errors import SymbolError
from src.spectral.grid import Field, forward, inverse
from src.spectral.operators import integrate, product

logger = logging.getLogger(__name__)

MAX_RANK = 64
PHASE_ROTATION_CUBIC = (False, True, False)

# A wavevector is a sequence of component arrays (xi[0], ..., xi[n-1]); factor
# callables take one wavevector and return an array broadcastable against them.
Wavevector = Sequence[np.ndarray]
FactorFn = Callable[[Wavevector], np.ndarray]


# -----------------------------
# single-slot factors a(ξ)
# -----------------------------
@dataclass(frozen=True)
class Factor:
    label: str
    fn: FactorFn = field(compare=False)

    def __call__(self, xi: Wavevector) -> np.ndarray:
        return self.fn(xi)


def one() -> Factor:
    return Factor("1", lambda xi: np.ones_like(np.asarray(xi[0], dtype=float)))


def xi_component(j: int) -> Factor:
    return Factor(f"xi_{j}", lambda xi: np.asarray(xi[j], dtype=float))


def derivative(j: int) -> Factor:
    """Symbol of ∂_j, i.e. iξ_j."""
    return Factor(f"i*xi_{j}", lambda xi: 1j * np.asarray(xi[j], dtype=float))


def xi_abs_power(s: float) -> Factor:
    def fn(xi: Wavevector) -> np.ndarray:
        r = np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in xi))
        return r**s

    return Factor(f"|xi|^{s}", fn)


def scaled(f: Factor, c: complex) -> Factor:
    return Factor(f"{c}*{f.label}", lambda xi: c * f(xi))


def conjugate(f: Factor) -> Factor:
    return Factor(f"conj({f.label})", lambda xi: np.conj(f(xi)))


@dataclass(frozen=True)
class SeparableTerm:
    coefficient: complex
    factors: Tuple[Factor, ...]


# -----------------------------
# multilinear symbols
# -----------------------------
@dataclass(frozen=True)
class TrilinearSymbol:
    """
    Symbol of a translation-invariant k-linear form, k in {3, 4}.

    `pattern[i]` is True when slot i carries a conjugated input. For a
    conjugated slot the symbol variable is the frequency of the input itself,
    so the frequency sum of the output is Σ ±ξ^i with minus on conjugated slots.
    Either `terms` (rank-separable) or `closed_form` is set.
    """

    arity: int
    pattern: Tuple[bool, ...]
    terms: Optional[Tuple[SeparableTerm, ...]] = None
    closed_form: Optional[Callable[..., np.ndarray]] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self) -> None:
        if self.arity not in (3, 4):
            raise SymbolError(f"arity must be 3 or 4, got {self.arity}")
        if len(self.pattern) != self.arity:
            raise SymbolError(f"pattern has {len(self.pattern)} slots, arity is {self.arity}")
        if (self.terms is None) == (self.closed_form is None):
            raise SymbolError("exactly one of terms / closed_form must be given")
        if self.terms is not None:
            if not 1 <= len(self.terms) <= MAX_RANK:
                raise SymbolError(f"rank must be in 1..{MAX_RANK}, got {len(self.terms)}")
            for t in self.terms:
                if len(t.factors) != self.arity:
                    raise SymbolError(f"term has {len(t.factors)} factors, arity is {self.arity}")

    @property
    def is_separable(self) -> bool:
        return self.terms is not None

    @property
    def rank(self) -> int:
        return len(self.terms) if self.terms is not None else 0

    @property
    def signs(self) -> Tuple[int, ...]:
        return tuple(-1 if c else 1 for c in self.pattern)

    @property
    def is_phase_rotation(self) -> bool:
        """Alternating u, ū, u, ... starting with u."""
        return all(c == bool(i % 2) for i, c in enumerate(self.pattern))

    def __call__(self, *xis: Wavevector) -> np.ndarray:
        if len(xis) != self.arity:
            raise SymbolError(f"symbol takes {self.arity} wavevectors, got {len(xis)}")
        if self.closed_form is not None:
            return np.asarray(self.closed_form(*xis), dtype=complex)
        out = 0.0
        for t in self.terms:
            val = t.coefficient
            for a, xi in zip(t.factors, xis):
                val = val * a(xi)
            out = out + val
        return np.asarray(out, dtype=complex)


def constant_symbol(c: complex, pattern: Sequence[bool], name: str = "") -> TrilinearSymbol:
    pattern = tuple(bool(p) for p in pattern)
    return TrilinearSymbol(
        arity=len(pattern),
        pattern=pattern,
        terms=(SeparableTerm(complex(c), tuple(one() for _ in pattern)),),
        name=name or f"const({c})",
    )


def separable_symbol(terms: Sequence[SeparableTerm], pattern: Sequence[bool], name: str = "") -> TrilinearSymbol:
    pattern = tuple(bool(p) for p in pattern)
    return TrilinearSymbol(arity=len(pattern), pattern=pattern, terms=tuple(terms), name=name)


def closed_form_symbol(fn: Callable[..., np.ndarray], pattern: Sequence[bool], name: str = "") -> TrilinearSymbol:
    pattern = tuple(bool(p) for p in pattern)
    return TrilinearSymbol(arity=len(pattern), pattern=pattern, closed_form=fn, name=name)


# -----------------------------
# field evaluation
# -----------------------------
def _slot_values(a: Factor, f: Field, conjugated: bool) -> np.ndarray:
    xi = f.grid.wavenumbers
    F = forward(f.values)
    if conjugated:
        return np.conj(inverse(np.conj(a(xi)) * F))
    return inverse(a(xi) * F)


def evaluate_form(sym: TrilinearSymbol, inputs: Sequence[Field]) -> Field:
    """
    Σ_r c_r Π_i a_{r,i}(D) u_i on the physical side, with conjugated slots
    evaluated as conj(conj(a)(D) u). Factors and output are 2/3-dealiased.
    """
    if len(inputs) != sym.arity:
        raise SymbolError(f"form takes {sym.arity} inputs, got {len(inputs)}")
    if not sym.is_separable:
        raise SymbolError(f"symbol {sym.name or '<closed form>'} is not rank-separable; field evaluation unsupported")
    grid = inputs[0].grid
    for f in inputs:
        grid.require_same(f.grid)
    out = np.zeros(grid.shape, dtype=np.complex128)
    for term in sym.terms:
        slots = [Field(grid, _slot_values(a, f, c)) for a, f, c in zip(term.factors, inputs, sym.pattern)]
        out = out + term.coefficient * product(*slots).values
    return Field(grid, out)


def evaluate_functional(sym: TrilinearSymbol, inputs: Sequence[Field]) -> complex:
    """∫ of the multilinear form over the box."""
    f = evaluate_form(sym, inputs)
    return integrate(f.values, f.grid)


# -----------------------------
# symbols read off a model's cubic nonlinearity
# -----------------------------
def _monomial_factors(powers) -> Tuple[list, list]:
    plain: list = []
    conj: list = []
    for key, p in powers.items():
        for _ in range(int(p)):
            if key == "u":
                plain.append(one())
            elif key == "ubar":
                conj.append(one())
            elif key.startswith("dubar"):
                j = int(key[len("dubar"):])
                # ∂_j ū = conj(iξ_j (D) u), so the slot symbol is -iξ_j
                conj.append(scaled(xi_component(j), -1j))
            elif key.startswith("du"):
                plain.append(derivative(int(key[len("du"):])))
            else:
                raise SymbolError(f"unknown monomial variable {key!r}")
    return plain, conj


def cubic_symbol_of(model) -> TrilinearSymbol:
    """
    Phase-rotation cubic symbol c(ξ¹, ξ², ξ³) of the model's cubic monomials,
    symmetrised in the two unconjugated slots. Monomials of other degrees or
    other phase are ignored.
    """
    terms = []
    for mono in model.nonlinearity.monomials:
        plain, conj = _monomial_factors(mono.powers)
        if len(plain) != 2 or len(conj) != 1:
            continue
        a, b = plain
        c = complex(mono.coefficient)
        terms.append(SeparableTerm(0.5 * c, (a, conj[0], b)))
        terms.append(SeparableTerm(0.5 * c, (b, conj[0], a)))
    if not terms:
        terms.append(SeparableTerm(0.0, (one(), one(), one())))
    return separable_symbol(terms, PHASE_ROTATION_CUBIC, name=f"cubic({model.name})")


# -----------------------------
# conservative / defocusing diagonal checks
# -----------------------------
CONSERVATIVE_TOL = 1e-10


@dataclass(frozen=True)
class ConservativeReport:
    max_imag_diagonal: float
    max_imag_gradient: Optional[float]
    defocusing_margin: Optional[float]
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_imag_diagonal": self.max_imag_diagonal,
            "max_imag_gradient": self.max_imag_gradient,
            "defocusing_margin": self.defocusing_margin,
            "samples": self.samples,
            "passed": self.passed,
        }


def conservative_check(
    sym: TrilinearSymbol,
    dim: int,
    *,
    samples: int = 256,
    radius: float = 16.0,
    fd_step: float = 1e-5,
    seed: int = 0,
) -> ConservativeReport:
    """
    max |Im c(ξ,ξ,ξ)| over sampled ξ; in 1D also the imaginary part of each
    slot derivative ∂_{ξ_j} c at the diagonal (central differences) and the
    defocusing margin min Re c(ξ,ξ,ξ)/(1+ξ²).
    """
    if sym.arity != 3 or not sym.is_phase_rotation:
        raise SymbolError("conservative_check needs a cubic symbol with pattern (u, ū, u)")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-radius, radius, size=(dim, samples))
    pts[:, 0] = 0.0
    xi = tuple(pts[j] for j in range(dim))
    diag = sym(xi, xi, xi)
    max_im = float(np.max(np.abs(diag.imag)))

    max_im_grad: Optional[float] = None
    margin: Optional[float] = None
    if dim == 1:
        grads = []
        for slot in range(3):
            plus = [xi, xi, xi]
            minus = [xi, xi, xi]
            plus[slot] = (xi[0] + fd_step,)
            minus[slot] = (xi[0] - fd_step,)
            grads.append((sym(*plus) - sym(*minus)) / (2.0 * fd_step))
        max_im_grad = float(max(np.max(np.abs(g.imag)) for g in grads))
        margin = float(np.min(diag.real / (1.0 + xi[0] ** 2)))

    passed = max_im <= CONSERVATIVE_TOL and (max_im_grad is None or max_im_grad <= CONSERVATIVE_TOL)
    report = ConservativeReport(max_im, max_im_grad, margin, samples, passed)
    logger.info("conservative check %s: max Im c(ξ,ξ,ξ)=%.3g", "passed" if passed else "failed", max_im)
    return report

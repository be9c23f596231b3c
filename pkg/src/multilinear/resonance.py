from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, Sequence, Tuple

from src.common.io_utils import write_csv

PHASE_ROTATION_SIGNS = (1, -1, 1, -1)
# nonzero net charge: no phase rotation symmetry
CHARGED_SIGN_PATTERNS = tuple(s for s in itertools.product((1, -1), repeat=4) if sum(s) != 0)

RESONANT = "resonant"
DOUBLY_RESONANT = "doubly_resonant"
TRANSVERSAL = "transversal"
NONRESONANT = "nonresonant"

# which branch of the classification decided the label
PHASE_ROTATION = "phase-rotation"
AT_MOST_TWO_EQUAL = "at-most-two-equal"
THREE_EQUAL = "three-equal"
ALL_EQUAL = "all-equal"
ORIGIN = "origin"

IntVec = Tuple[int, ...]


@dataclass(frozen=True)
class InteractionQuadruple:
    """
    Four lattice wavevectors given as integer indices (ξ = (2π/L)·m; the
    resonance conditions are homogeneous so the scale drops out).
    """

    xis: Tuple[IntVec, IntVec, IntVec, IntVec]
    signs: Tuple[int, int, int, int] = PHASE_ROTATION_SIGNS

    def __post_init__(self) -> None:
        xis = tuple(tuple(int(c) for c in x) for x in self.xis)
        if len(xis) != 4:
            raise ValueError(f"a quadruple has 4 wavevectors, got {len(xis)}")
        if len({len(x) for x in xis}) != 1:
            raise ValueError("wavevectors must share one dimension")
        signs = tuple(int(s) for s in self.signs)
        if len(signs) != 4 or any(s not in (1, -1) for s in signs):
            raise ValueError(f"signs must be four entries of ±1, got {self.signs}")
        object.__setattr__(self, "xis", xis)
        object.__setattr__(self, "signs", signs)

    @property
    def dim(self) -> int:
        return len(self.xis[0])

    @property
    def delta_xi(self) -> IntVec:
        return tuple(sum(s * x[a] for s, x in zip(self.signs, self.xis)) for a in range(self.dim))

    @property
    def delta_xi2(self) -> int:
        return sum(s * sum(c * c for c in x) for s, x in zip(self.signs, self.xis))

    @property
    def charge(self) -> int:
        return sum(self.signs)

    @property
    def is_phase_rotation(self) -> bool:
        """Invariant under u → e^{iθ}u: two u and two ū in any order."""
        return self.charge == 0


@dataclass(frozen=True)
class ResonanceReport:
    label: str  # doubly_resonant | resonant | nonresonant
    transversal: bool
    delta_xi: IntVec
    delta_xi2: int
    case: str = PHASE_ROTATION

    @property
    def classes(self) -> FrozenSet[str]:
        out = {self.label}
        if self.label == DOUBLY_RESONANT:
            out.add(RESONANT)
        if self.transversal:
            out.add(TRANSVERSAL)
        return frozenset(out)

    @property
    def resonant(self) -> bool:
        return self.label in (RESONANT, DOUBLY_RESONANT)


def classify(q: InteractionQuadruple) -> ResonanceReport:
    if q.is_phase_rotation:
        return _classify_by_delta(q, PHASE_ROTATION)
    return _classify_without_phase_rotation(q)


def _classify_by_delta(q: InteractionQuadruple, case: str) -> ResonanceReport:
    dx = q.delta_xi
    dx2 = q.delta_xi2
    resonant = all(c == 0 for c in dx) and dx2 == 0
    if resonant and len(set(q.xis)) == 1:
        label = DOUBLY_RESONANT
    elif resonant:
        label = RESONANT
    else:
        label = NONRESONANT
    transversal = max(Counter(q.xis).values()) <= 2
    return ResonanceReport(label=label, transversal=transversal, delta_xi=dx, delta_xi2=dx2, case=case)


def _classify_without_phase_rotation(q: InteractionQuadruple) -> ResonanceReport:
    """
    Net charge ±2 or ±4. A non-transversal interaction has three equal
    frequencies ξ (signs summing to T) and a fourth η with sign s; resonance
    needs η = −sTξ and |η|² = −sT|ξ|², so |ξ|²·T(T + s) = 0. T + s is the
    net charge, nonzero here, hence ξ = η = 0. Four equal nonzero
    frequencies leave Δ⁴ξ = (net charge)·ξ ≠ 0.
    """
    dx = q.delta_xi
    dx2 = q.delta_xi2
    counts = Counter(q.xis)
    top = max(counts.values())
    if top <= 2:
        return _classify_by_delta(q, AT_MOST_TWO_EQUAL)
    if all(c == 0 for x in q.xis for c in x):
        return ResonanceReport(label=DOUBLY_RESONANT, transversal=False, delta_xi=dx, delta_xi2=dx2, case=ORIGIN)
    case = ALL_EQUAL if top == 4 else THREE_EQUAL
    return ResonanceReport(label=NONRESONANT, transversal=False, delta_xi=dx, delta_xi2=dx2, case=case)


def is_rectangle(q: InteractionQuadruple) -> bool:
    """Vertices ξ¹, ξ², ξ³, ξ⁴ in order: parallelogram closure plus a right angle at ξ²."""
    x1, x2, x3, x4 = q.xis
    closes = all(a - b + c - d == 0 for a, b, c, d in zip(x1, x2, x3, x4))
    right = sum((a - b) * (c - b) for a, b, c in zip(x1, x2, x3)) == 0
    return closes and right


def classification_rows(quads: Iterable[InteractionQuadruple]) -> list:
    rows = []
    for q in quads:
        r = classify(q)
        row = {}
        for i, x in enumerate(q.xis, start=1):
            for a, c in enumerate(x):
                row[f"xi{i}_{a}"] = c
        row.update(
            {
                "signs": "".join("+" if s > 0 else "-" for s in q.signs),
                "delta_xi": " ".join(str(c) for c in r.delta_xi),
                "delta_xi2": r.delta_xi2,
                "label": r.label,
                "transversal": r.transversal,
                "case": r.case,
            }
        )
        rows.append(row)
    return rows


def write_classification_table(path: Path, quads: Sequence[InteractionQuadruple]) -> Path:
    if not quads:
        return write_csv(path, ["label"], [])
    dim = quads[0].dim
    cols = [f"xi{i}_{a}" for i in range(1, 5) for a in range(dim)]
    cols += ["signs", "delta_xi", "delta_xi2", "label", "transversal", "case"]
    return write_csv(path, cols, classification_rows(quads))

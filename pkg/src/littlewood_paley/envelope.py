from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.common.errors import ShellRangeError
from src.common.io_utils import write_csv
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.spectral.grid import Field
from src.spectral.operators import hs_norm

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.1
DEFAULT_RATIO_FACTOR = 2.0


def envelope_sum_bound(delta: float) -> float:
    """C(δ) = Σ_d 2^{-2δ|d|}, so that Σ c_k² ≤ C(δ) Σ ‖P_k f‖²."""
    q = 2.0 ** (-2.0 * delta)
    return (1.0 + q) / (1.0 - q)


@dataclass(frozen=True)
class Envelope:
    coefficients: np.ndarray  # c_k for k = 1..K, stored at index k-1
    delta: float
    s: float

    @property
    def shells(self) -> range:
        return range(1, len(self.coefficients) + 1)

    def c(self, k: int) -> float:
        if k not in self.shells:
            raise ShellRangeError(f"envelope has shells 1..{len(self.coefficients)}, got {k}")
        return float(self.coefficients[k - 1])

    def is_slowly_varying(self, *, rtol: float = 1e-12) -> bool:
        c = np.asarray(self.coefficients, dtype=float)
        ks = np.arange(1, len(c) + 1)
        gap = np.abs(ks[:, None] - ks[None, :])
        bound = 2.0 ** (self.delta * gap) * c[None, :]
        return bool(np.all(c[:, None] <= bound * (1.0 + rtol) + 1e-300))

    def dominates(self, f: Field, bank: Optional[DyadicFilterBank] = None, *, rtol: float = 1e-12) -> bool:
        bank = bank or DyadicFilterBank(f.grid)
        norms = shell_norms(f, self.s, bank)
        return bool(np.all(norms <= self.coefficients * (1.0 + rtol) + 1e-300))

    def is_valid_for(self, f: Field, bank: Optional[DyadicFilterBank] = None) -> Dict[str, bool]:
        c = np.asarray(self.coefficients, dtype=float)
        return {
            "nonnegative": bool(np.all(c >= 0)),
            "square_summable": bool(np.isfinite(np.sum(c**2))),
            "slowly_varying": self.is_slowly_varying(),
            "dominates": self.dominates(f, bank),
        }

    def rows(self) -> List[Dict[str, float]]:
        return [{"k": k, "lambda": 2**k, "c_k": float(c)} for k, c in zip(self.shells, self.coefficients)]

    def to_csv(self, path: Path) -> Path:
        return write_csv(path, ["k", "lambda", "c_k"], self.rows())


def shell_norms(f: Field, s: float, bank: DyadicFilterBank) -> np.ndarray:
    return np.array([hs_norm(bank.project(f, k), s) for k in bank.shells])


def minimal_envelope(
    f: Field,
    s: float,
    delta: float = DEFAULT_DELTA,
    *,
    bank: Optional[DyadicFilterBank] = None,
) -> Envelope:
    """c_k = max_j 2^{-δ|j-k|} ‖P_j f‖_{H^s}."""
    if not 0.0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 1/2], got {delta}")
    bank = bank or DyadicFilterBank(f.grid)
    norms = shell_norms(f, s, bank)
    ks = np.arange(1, len(norms) + 1)
    decay = 2.0 ** (-delta * np.abs(ks[:, None] - ks[None, :]))
    c = np.max(decay * norms[None, :], axis=1)
    return Envelope(coefficients=c, delta=delta, s=s)


# -----------------------------
# envelope tracking along a trajectory
# -----------------------------
@dataclass
class EnvelopeReport:
    factor: float
    rows: List[Dict[str, float]] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max((r["ratio"] for r in self.rows), default=0.0)

    @property
    def flagged(self) -> List[Dict[str, float]]:
        return [r for r in self.rows if r["flagged"]]

    @property
    def passed(self) -> bool:
        return not self.flagged

    def to_csv(self, path: Path) -> Path:
        return write_csv(path, ["t", "k", "lambda", "norm", "c_k0", "ratio", "flagged"], self.rows)


def envelope_report(
    snapshots: Iterable[Tuple[float, Field]],
    envelope0: Envelope,
    s: float,
    *,
    factor: float = DEFAULT_RATIO_FACTOR,
    bank: Optional[DyadicFilterBank] = None,
) -> EnvelopeReport:
    """Ratios ‖P_k u(t)‖_{H^s} / c_k(0) per shell and time; accepts a Trajectory or any (t, field) iterable."""
    report = EnvelopeReport(factor=factor)
    if hasattr(snapshots, "items"):
        snapshots = snapshots.items()
    for t, u in snapshots:
        bank = bank or DyadicFilterBank(u.grid)
        norms = shell_norms(u, s, bank)
        for k, nk in zip(bank.shells, norms):
            ck = envelope0.c(k)
            if ck > 0:
                ratio = nk / ck
            else:
                ratio = 0.0 if nk == 0 else float("inf")
            report.rows.append(
                {
                    "t": float(t),
                    "k": k,
                    "lambda": 2**k,
                    "norm": float(nk),
                    "c_k0": ck,
                    "ratio": float(ratio),
                    "flagged": bool(ratio > factor),
                }
            )
    if report.flagged:
        logger.warning("envelope ratio exceeded %.3g on %d (t, k) cells; max %.4g", factor, len(report.flagged), report.max_ratio)
    else:
        logger.info("envelope ratios within %.3g (max %.4g)", factor, report.max_ratio)
    return report

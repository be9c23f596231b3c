from src.littlewood_paley.envelope import (
    Envelope,
    EnvelopeReport,
    envelope_report,
    envelope_sum_bound,
    minimal_envelope,
    shell_norms,
)
from src.littlewood_paley.filter_bank import DyadicFilterBank, psi, smooth_step

__all__ = [
    "DyadicFilterBank",
    "Envelope",
    "EnvelopeReport",
    "envelope_report",
    "envelope_sum_bound",
    "minimal_envelope",
    "psi",
    "shell_norms",
    "smooth_step",
]

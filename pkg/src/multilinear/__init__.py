from src.multilinear.resonance import InteractionQuadruple, ResonanceReport, classify, is_rectangle
from src.multilinear.splitting import CubicSplit, split_cubic
from src.multilinear.symbols import (
    ConservativeReport,
    TrilinearSymbol,
    closed_form_symbol,
    conservative_check,
    constant_symbol,
    cubic_symbol_of,
    evaluate_form,
    evaluate_functional,
    separable_symbol,
)

__all__ = [
    "ConservativeReport",
    "CubicSplit",
    "InteractionQuadruple",
    "ResonanceReport",
    "TrilinearSymbol",
    "classify",
    "closed_form_symbol",
    "conservative_check",
    "constant_symbol",
    "cubic_symbol_of",
    "evaluate_form",
    "evaluate_functional",
    "is_rectangle",
    "separable_symbol",
    "split_cubic",
]

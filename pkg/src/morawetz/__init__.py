from src.morawetz.functionals import (
    ImClean,
    MorawetzLedger,
    calibrate_cn,
    closed_form_cn,
    im_clean,
    interaction_functional,
    j4,
    j4_closed_form_quadratic,
    j4_main,
    morawetz_identity_residual,
)
from src.morawetz.weights import RadialProfile, WeightSpec, register_weight, weight_kinds

__all__ = [
    "ImClean",
    "MorawetzLedger",
    "RadialProfile",
    "WeightSpec",
    "calibrate_cn",
    "closed_form_cn",
    "im_clean",
    "interaction_functional",
    "j4",
    "j4_closed_form_quadratic",
    "j4_main",
    "morawetz_identity_residual",
    "register_weight",
    "weight_kinds",
]

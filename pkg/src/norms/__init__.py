from src.norms.fits import SlopeFit, TransversalityFit, loglog_fit, transversality_scaling_fit
from src.norms.meters import (
    NormLedger,
    bilinear_l2,
    d_lambda,
    is_admissible,
    lebesgue_norm,
    sobolev_profile,
    strichartz_norm,
    stride_sensitivity,
)
from src.norms.scattering import ScatteringProbe, scattering_extract

__all__ = [
    "NormLedger",
    "ScatteringProbe",
    "SlopeFit",
    "TransversalityFit",
    "bilinear_l2",
    "d_lambda",
    "is_admissible",
    "lebesgue_norm",
    "loglog_fit",
    "scattering_extract",
    "sobolev_profile",
    "strichartz_norm",
    "stride_sensitivity",
    "transversality_scaling_fit",
]

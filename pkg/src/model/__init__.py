from src.model.metrics import Metric, make_metric, metric_kinds, register_metric
from src.model.paradiff import MetricField, full_metric, truncated_metric
from src.model.rays import Bicharacteristic, bicharacteristic_trace
from src.model.spec import (
    ModelSpec,
    Monomial,
    Nonlinearity,
    flat_model,
    load_model,
    model_from_dict,
    quasilinear_cubic_model,
    semilinear_cubic_model,
)
from src.model.structure import CubicityReport, StructureReport, validate_cubic, validate_structure

__all__ = [
    "Bicharacteristic",
    "CubicityReport",
    "Metric",
    "MetricField",
    "ModelSpec",
    "Monomial",
    "Nonlinearity",
    "StructureReport",
    "bicharacteristic_trace",
    "flat_model",
    "full_metric",
    "load_model",
    "make_metric",
    "metric_kinds",
    "model_from_dict",
    "quasilinear_cubic_model",
    "register_metric",
    "semilinear_cubic_model",
    "truncated_metric",
    "validate_cubic",
    "validate_structure",
]

from src.experiments.config import ExperimentConfig, apply_overrides, config_from_dict, load_config, parse_vary
from src.experiments.initial_data import build_initial, initial_kinds, register_initial, tagged_rng
from src.experiments.report import RunReport, build_report, diff_reports, load_manifest, render_diff
from src.experiments.runner import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, RunResult, run
from src.experiments.scenarios import Criterion, RunContext, diagnostic, diagnostic_names

__all__ = [
    "EXIT_ABORT",
    "EXIT_CONFIG",
    "EXIT_OK",
    "Criterion",
    "ExperimentConfig",
    "RunContext",
    "RunReport",
    "RunResult",
    "apply_overrides",
    "build_initial",
    "build_report",
    "config_from_dict",
    "diagnostic",
    "diagnostic_names",
    "diff_reports",
    "initial_kinds",
    "load_config",
    "load_manifest",
    "parse_vary",
    "register_initial",
    "render_diff",
    "run",
    "tagged_rng",
]

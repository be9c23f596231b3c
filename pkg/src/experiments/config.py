from __future__ import annotations

import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from src.common.errors import ConfigError
from src.common.io_utils import canonical_json_bytes, sha256_bytes
from src.common.paths import models_dir, repo_root

logger = logging.getLogger(__name__)

TOP_LEVEL_SCALARS = ("scenario", "seed", "model", "diagnostics", "out")
TABLES = ("grid", "initial", "solver", "params")
GRID_KEYS = ("dim", "points_per_axis", "box_length")

SOLVER_DEFAULTS: Dict[str, Any] = {
    "T": 0.01,
    "dt": 1e-3,
    "stride": 1,
    "divergence_form": True,
    "override_cubic": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One scenario run. Tables are flat: grid, initial, solver and params hold
    scalars or lists of scalars only.
    """

    scenario: str
    grid: Mapping[str, Any]
    model: str
    initial: Mapping[str, Any]
    diagnostics: Tuple[str, ...]
    solver: Mapping[str, Any] = field(default_factory=dict)
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None
    source: Optional[str] = field(default=None, compare=False)

    def param(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def solver_value(self, key: str) -> Any:
        return self.solver.get(key, SOLVER_DEFAULTS.get(key))

    def to_dict(self) -> Dict[str, Any]:
        """Everything that determines the results; `out` and `source` are excluded."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "model": self.model,
            "diagnostics": list(self.diagnostics),
            "grid": dict(self.grid),
            "initial": dict(self.initial),
            "solver": {**SOLVER_DEFAULTS, **dict(self.solver)},
            "params": dict(self.params),
        }

    @property
    def config_hash(self) -> str:
        return sha256_bytes(canonical_json_bytes(self.to_dict()))

    def model_path(self) -> Path:
        """`flat-2d` → <root>/models/flat-2d.toml; names with a suffix are paths (config dir first, then repo root)."""
        name = self.model
        if Path(name).suffix.lower() not in (".toml", ".json"):
            return models_dir() / f"{name}.toml"
        p = Path(name).expanduser()
        if p.is_absolute():
            return p
        if self.source:
            near = Path(self.source).resolve().parent / p
            if near.exists():
                return near
        return repo_root() / p


# -----------------------------
# parsing helpers
# -----------------------------
def parse_value(text: str) -> Any:
    """TOML literal if it parses (1e-3, true, [1, 2]); otherwise the raw string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        pass
    try:
        # ".5", "1." and friends are not TOML floats
        return float(text)
    except ValueError:
        return text.strip()


def box_length(raw: Any) -> float:
    """A number, or a multiple of pi written as "2pi" / "pi" / "0.5pi"."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, str):
        s = raw.strip().lower().replace("*", "").replace("π", "pi")
        if s.endswith("pi"):
            head = s[:-2].strip()
            try:
                return (float(head) if head else 1.0) * math.pi
            except ValueError:
                pass
    raise ConfigError(f"grid.box_length must be a number or a multiple of pi, got {raw!r}")


def _is_scalar(v: Any) -> bool:
    return isinstance(v, (str, int, float, bool))


def _check_flat(name: str, table: Any) -> Dict[str, Any]:
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{name}] must be a table, got {type(table).__name__}")
    out = {}
    for k, v in table.items():
        if isinstance(v, Mapping):
            raise ConfigError(f"[{name}].{k}: configs allow one nesting level only")
        if isinstance(v, list) and not all(_is_scalar(x) or isinstance(x, list) and all(_is_scalar(y) for y in x) for x in v):
            raise ConfigError(f"[{name}].{k}: lists must hold scalars")
        out[str(k)] = v
    return out


def set_dotted(raw: Dict[str, Any], key: str, value: Any) -> None:
    """`solver.dt` sets raw["solver"]["dt"]; a bare key sets a top-level entry."""
    parts = key.split(".")
    if len(parts) == 1:
        if parts[0] in TABLES:
            raise ConfigError(f"cannot replace the whole [{parts[0]}] table with {key}=...")
        raw[parts[0]] = value
    elif len(parts) == 2 and parts[0] in TABLES:
        table = raw.setdefault(parts[0], {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{parts[0]}] must be a table")
        table[parts[1]] = value
    else:
        raise ConfigError(f"override key {key!r} must be <key> or <table>.<key> with table in {', '.join(TABLES)}")


def parse_assignment(text: str) -> Tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"empty key in {text!r}")
    return key, value


def apply_overrides(raw: Dict[str, Any], assignments: Sequence[str]) -> Dict[str, Any]:
    for text in assignments:
        key, value = parse_assignment(text)
        set_dotted(raw, key, parse_value(value))
    return raw


# -----------------------------
# validation
# -----------------------------
def config_from_dict(raw: Mapping[str, Any], *, source: Optional[str] = None) -> ExperimentConfig:
    # imported here: the diagnostic and initial-data registries import this module
    from src.experiments.initial_data import initial_kinds
    from src.experiments.scenarios import diagnostic_names

    unknown = sorted(set(raw) - set(TOP_LEVEL_SCALARS) - set(TABLES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("scenario", "model", "grid", "initial", "diagnostics"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")

    scenario = raw["scenario"]
    if not isinstance(scenario, str) or not scenario.strip():
        raise ConfigError("scenario must be a non-empty string")
    model = raw["model"]
    if not isinstance(model, str) or not model.strip():
        raise ConfigError("model must be a model name or a path to a .toml/.json model file")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    grid = _check_flat("grid", raw["grid"])
    missing = [k for k in GRID_KEYS if k not in grid]
    if missing:
        raise ConfigError(f"[grid] is missing {', '.join(missing)}")
    extra = sorted(set(grid) - set(GRID_KEYS))
    if extra:
        raise ConfigError(f"[grid] has unknown keys: {', '.join(extra)}")
    try:
        grid = {"dim": int(grid["dim"]), "points_per_axis": int(grid["points_per_axis"]), "box_length": box_length(grid["box_length"])}
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"[grid] values must be numbers: {e}") from e

    initial = _check_flat("initial", raw["initial"])
    if initial.get("kind") not in initial_kinds():
        raise ConfigError(f"[initial].kind must be one of {', '.join(initial_kinds())}, got {initial.get('kind')!r}")

    solver = _check_flat("solver", raw.get("solver", {}))
    bad = sorted(set(solver) - set(SOLVER_DEFAULTS))
    if bad:
        raise ConfigError(f"[solver] has unknown keys: {', '.join(bad)}")
    for key in ("T", "dt"):
        v = solver.get(key, SOLVER_DEFAULTS[key])
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"[solver].{key} must be a positive number, got {v!r}")
    stride = solver.get("stride", 1)
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        raise ConfigError(f"[solver].stride must be a positive integer, got {stride!r}")

    diagnostics = raw["diagnostics"]
    if isinstance(diagnostics, str):
        diagnostics = [diagnostics]
    if not isinstance(diagnostics, list) or not diagnostics:
        raise ConfigError("diagnostics must be a non-empty list of names")
    known = diagnostic_names()
    for name in diagnostics:
        if name not in known:
            raise ConfigError(f"unknown diagnostic {name!r}; known: {', '.join(known)}")

    params = _check_flat("params", raw.get("params", {}))
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a path string")

    return ExperimentConfig(
        scenario=scenario.strip(),
        grid=grid,
        model=model.strip(),
        initial=initial,
        diagnostics=tuple(diagnostics),
        solver=solver,
        params=params,
        seed=seed,
        out=out,
        source=source,
    )


def read_raw(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            return tomllib.loads(text)
        if suffix == ".json":
            data = json.loads(text)
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top level must be an object")
            return data
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from e
    raise ConfigError(f"config file must be .toml or .json: {path}")


def load_config(
    path: Path,
    *,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> ExperimentConfig:
    """Read, override (`table.key=value`, then --seed/--out) and validate."""
    raw = read_raw(path)
    apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = int(seed)
    if out is not None:
        raw["out"] = str(out)
    cfg = config_from_dict(raw, source=str(Path(path).resolve()))
    logger.info("config %s: scenario %s, hash %s", path, cfg.scenario, cfg.config_hash[:12])
    return cfg


def parse_vary(texts: Sequence[str]) -> List[Tuple[str, List[str]]]:
    """`solver.dt=1e-3,5e-4` → ("solver.dt", ["1e-3", "5e-4"]); values stay text until applied."""
    out = []
    for text in texts:
        key, values = parse_assignment(text)
        items = [v.strip() for v in values.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"--vary {key} has no values")
        out.append((key, items))
    return out

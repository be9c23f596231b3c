from __future__ import annotations

import logging
import os
import platform
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

import src
from src.common.errors import ConfigError, NumericalAbort
from src.common.io_utils import ensure_dir, now_utc_iso, sha256_file, write_json
from src.common.paths import runs_dir
from src.evolution.trajectory import Trajectory
from src.experiments.config import ExperimentConfig
from src.experiments.scenarios import DIAGNOSTICS, Criterion, RunContext
from src.spectral.grid import set_fft_workers

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

MANIFEST = "manifest.json"
MANIFEST_FORMAT = "qnls-run/1"


@dataclass
class RunResult:
    exit_code: int
    run_dir: Path
    manifest: Dict[str, Any]
    criteria: List[Criterion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK and all(c.passed for c in self.criteria)


def resolve_threads(cli_threads: Optional[int]) -> Optional[int]:
    """QNLS_THREADS wins over --threads."""
    env = os.getenv("QNLS_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError as e:
            raise ConfigError(f"QNLS_THREADS must be an integer, got {env!r}") from e
        if n < 1:
            raise ConfigError(f"QNLS_THREADS must be positive, got {n}")
        return n
    return cli_threads


def default_run_dir(config: ExperimentConfig) -> Path:
    return runs_dir() / f"{config.scenario}-{config.config_hash[:12]}"


def prepare_run_dir(path: Path) -> Path:
    """Empty or missing directories are used as is; an earlier run directory is replaced."""
    if path.exists() and any(path.iterdir()):
        if not (path / MANIFEST).exists():
            raise ConfigError(f"output directory {path} is not empty and holds no run manifest")
        logger.info("replacing earlier run in %s", path)
        shutil.rmtree(path)
    ensure_dir(path)
    return path


def versions() -> Dict[str, str]:
    return {
        "qnls": src.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def list_artifacts(run_dir: Path) -> List[Dict[str, Any]]:
    top = run_dir / MANIFEST
    out = []
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p != top:
            out.append({"path": p.relative_to(run_dir).as_posix(), "bytes": p.stat().st_size, "sha256": sha256_file(p)})
    return out


def _flush_partial(run_dir: Path, exc: NumericalAbort, diagnostic: str) -> Optional[str]:
    traj = exc.partial
    if not isinstance(traj, Trajectory) or not len(traj):
        return None
    name = "trajectory" if not (run_dir / "trajectory").exists() else f"partial_{diagnostic}"
    traj.save(run_dir / name)
    return name


def run(config: ExperimentConfig, *, out: Optional[Path] = None, threads: Optional[int] = None) -> RunResult:
    """
    Run every diagnostic of `config` in order and write the manifest.

    Ledgers are written by each diagnostic as it finishes, so an abort leaves
    the completed ones (and the partial trajectory) on disk.
    """
    threads = resolve_threads(threads)
    set_fft_workers(threads)
    run_dir = Path(out or config.out or default_run_dir(config)).expanduser().resolve()
    ctx = RunContext(config, run_dir)
    prepare_run_dir(run_dir)

    started_utc = now_utc_iso()
    started = time.perf_counter()
    write_json(run_dir / "config.json", config.to_dict())

    status = {name: "pending" for name in config.diagnostics}
    criteria: List[Criterion] = []
    exit_code = EXIT_OK
    error: Optional[Dict[str, Any]] = None
    for name in config.diagnostics:
        status[name] = "running"
        t = time.perf_counter()
        try:
            found = DIAGNOSTICS[name](ctx)
        except NumericalAbort as e:
            status[name] = "aborted"
            exit_code = EXIT_ABORT
            error = {"diagnostic": name, "message": str(e), "detail": e.diagnostic, "partial": _flush_partial(run_dir, e, name)}
            logger.error("%s aborted: %s %s", name, e, e.diagnostic)
            break
        except (FileNotFoundError, ValueError) as e:
            status[name] = "failed"
            exit_code = EXIT_CONFIG
            error = {"diagnostic": name, "message": str(e)}
            logger.error("%s rejected its input: %s", name, e)
            break
        criteria.extend(found)
        status[name] = "done"
        ok = sum(c.passed for c in found)
        logger.info("%s: %d/%d criteria pass (%.2fs)", name, ok, len(found), time.perf_counter() - t)

    manifest: Dict[str, Any] = {
        "format": MANIFEST_FORMAT,
        "scenario": config.scenario,
        "config_hash": config.config_hash,
        "config": config.to_dict(),
        "config_source": config.source,
        "seed": config.seed,
        "versions": versions(),
        "threads": threads,
        "started_utc": started_utc,
        "finished_utc": now_utc_iso(),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "status": {EXIT_OK: "completed", EXIT_CONFIG: "failed", EXIT_ABORT: "aborted"}[exit_code],
        "exit_code": exit_code,
        "diagnostics": status,
        "criteria": [c.to_dict() for c in criteria],
        "passed": exit_code == EXIT_OK and all(c.passed for c in criteria),
        "error": error,
        "artifacts": list_artifacts(run_dir),
    }
    write_json(run_dir / MANIFEST, manifest)
    logger.info("run %s finished with exit code %d in %.2fs", run_dir, exit_code, manifest["wall_time_s"])
    return RunResult(exit_code=exit_code, run_dir=run_dir, manifest=manifest, criteria=criteria)

from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv


def repo_root() -> Path:
    """
    Root resolution order:
    1) QNLS_ROOT in environment or .env
    2) fallback: this file location -> <repo>/src/common/paths.py -> parents[2] == <repo>
    """
    # .env is read first so QNLS_* settings are visible wherever the CLI is started from
    fallback_root = Path(__file__).resolve().parents[2]
    load_dotenv(fallback_root / ".env", override=False)

    env_root = os.getenv("QNLS_ROOT", "").strip()
    if env_root:
        return Path(env_root).expanduser().resolve()

    return fallback_root


def runs_dir() -> Path:
    env_runs = os.getenv("QNLS_RUNS_DIR", "").strip()
    if env_runs:
        return Path(env_runs).expanduser().resolve()
    return repo_root() / "runs"


def models_dir() -> Path:
    return repo_root() / "models"


def scenarios_dir() -> Path:
    return repo_root() / "scenarios"

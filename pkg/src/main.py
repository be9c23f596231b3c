#!/usr/bin/env python3
from __future__ import annotations

import argparse
import itertools
import logging
import os
import re
import subprocess
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from src.common.errors import NumericalAbort
from src.common.paths import repo_root, runs_dir
from src.experiments.config import load_config, parse_vary
from src.experiments.report import build_report, render_diff
from src.experiments.runner import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, run

logger = logging.getLogger("qnls")

RUN_EXIT_CODES = """\
exit codes:
  0  every diagnostic completed; failed criteria still exit 0, `report` judges them
  2  bad config, missing model or data file, or a diagnostic rejected its input
  3  numerical abort; the partial trajectory is kept in the run directory
"""


def env_truthy(v: str) -> bool:
    return (v or "").strip().lower() in {"1", "true", "yes", "y", "on"}


def run_cmd(cmd: List[str], *, cwd: Path, dry_run: bool) -> int:
    print(">", " ".join(cmd))
    if dry_run:
        return 0
    return subprocess.run(cmd, cwd=str(cwd), check=False).returncode


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# -----------------------------
# subcommands
# -----------------------------
def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(Path(args.config), overrides=args.set or [], seed=args.seed, out=args.out)
    result = run(cfg, threads=args.threads)
    n_pass = sum(c.passed for c in result.criteria)
    if result.exit_code == EXIT_OK:
        mark = "✅" if result.passed else "⚠️"
        print(f"{mark} {cfg.scenario}: {n_pass}/{len(result.criteria)} criteria pass")
    else:
        err = result.manifest.get("error") or {}
        print(f"⚠️ {cfg.scenario}: {result.manifest['status']} in {err.get('diagnostic')}: {err.get('message')}", file=sys.stderr)
    print(f"✅ wrote run: {result.run_dir}")
    return result.exit_code


def cmd_report(args: argparse.Namespace) -> int:
    rep = build_report(Path(args.run_dir))
    if args.diff:
        print(render_diff(rep, build_report(Path(args.diff))))
    else:
        print(rep.render())
    return EXIT_OK


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=-]+", "_", text).strip("_")


def sweep_commands(args: argparse.Namespace, *, python: str) -> List[List[str]]:
    """One `run` per point of the cartesian product of the --vary lists."""
    config = Path(args.config)
    axes = parse_vary(args.vary)
    out_root = Path(args.out).expanduser() if args.out else runs_dir() / f"sweep-{config.stem}"
    cmds = []
    for values in itertools.product(*(vals for _, vals in axes)):
        assignments = [f"{key}={val}" for (key, _), val in zip(axes, values)]
        cmd = [python, "-m", "src.main", "--log-level", args.log_level, "run", str(config)]
        for a in assignments:
            cmd += ["--set", a]
        cmd += ["--out", str(out_root / _slug("-".join(assignments)))]
        if args.seed is not None:
            cmd += ["--seed", str(args.seed)]
        if args.threads is not None:
            cmd += ["--threads", str(args.threads)]
        cmds.append(cmd)
    return cmds


def cmd_sweep(args: argparse.Namespace) -> int:
    root = repo_root()
    dry_run = bool(args.dry_run) or env_truthy(os.getenv("QNLS_DRY_RUN", ""))
    cmds = sweep_commands(args, python=args.python)
    logger.info("sweep over %s: %d runs", ", ".join(args.vary), len(cmds))
    codes = [run_cmd(cmd, cwd=root, dry_run=dry_run) for cmd in cmds]
    worst = max(codes, default=EXIT_OK)
    if not dry_run:
        print(f"{'✅' if worst == EXIT_OK else '⚠️'} sweep finished: {len(codes)} runs, worst exit code {worst}")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnls", description="Numerical laboratory for cubic quasilinear Schrödinger flows.")
    parser.add_argument("--log-level", default=os.getenv("QNLS_LOG_LEVEL", "INFO"), help="Logging level (default: INFO).")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser(
        "run",
        help="Run one scenario config (TOML or JSON).",
        description=RUN_EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_run.add_argument("config", help="Scenario config file.")
    p_run.add_argument("--seed", type=int, default=None, help="Override the config seed.")
    p_run.add_argument("--out", default=None, help="Run directory (default: <runs>/<scenario>-<hash>).")
    p_run.add_argument("--threads", type=int, default=None, help="FFT worker threads (QNLS_THREADS overrides).")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config entry, e.g. solver.dt=5e-4.")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="Summarise a run directory.")
    p_rep.add_argument("run_dir", help="Run directory holding manifest.json.")
    p_rep.add_argument("--diff", default=None, metavar="OTHER_RUN", help="Per-criterion delta table against another run.")
    p_rep.set_defaults(func=cmd_report)

    p_sw = sub.add_parser("sweep", help="Spawn one run per parameter combination.")
    p_sw.add_argument("config", help="Scenario config file.")
    p_sw.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2,...", help="Values for one config entry.")
    p_sw.add_argument("--seed", type=int, default=None, help="Seed passed to every run.")
    p_sw.add_argument("--out", default=None, help="Parent directory of the run directories.")
    p_sw.add_argument("--threads", type=int, default=None, help="FFT worker threads per run.")
    p_sw.add_argument("--dry-run", action="store_true", help="Print commands only; do not execute.")
    p_sw.add_argument("--python", default=sys.executable, help="Python executable (default: current).")
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    repo_root()  # loads <root>/.env before any QNLS_* lookup
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"⚠️ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as e:
        print(f"⚠️ numerical abort: {e} {e.diagnostic}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as e:
        print(f"⚠️ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

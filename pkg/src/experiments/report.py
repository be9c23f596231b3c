from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.common.errors import ManifestError
from src.common.io_utils import load_json
from src.experiments.runner import MANIFEST
from src.experiments.scenarios import STENCIL_DIAGNOSTICS, STENCIL_SNAPSHOTS

PASS = "pass"
FAIL = "fail"
INSUFFICIENT = "insufficient snapshots"
NOT_RUN = "not run"

REQUIRED_KEYS = ("scenario", "config_hash", "status", "diagnostics", "criteria", "artifacts")
TRAJECTORY_DIRS = ("trajectory", "morawetz_trajectory", "para_trajectory")


@dataclass(frozen=True)
class ReportRow:
    diagnostic: str
    name: str
    value: Optional[float]
    bound: str
    status: str


@dataclass
class RunReport:
    run_dir: Path
    scenario: str
    config_hash: str
    status: str
    wall_time_s: Optional[float]
    snapshots: Optional[int]
    rows: List[ReportRow] = field(default_factory=list)
    missing_artifacts: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.status == PASS for r in self.rows) and not self.missing_artifacts

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for r in self.rows:
            out[r.status] = out.get(r.status, 0) + 1
        return out

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["run_dir"] = str(self.run_dir)
        d["passed"] = self.passed
        return d

    def render(self) -> str:
        lines = [
            f"run:       {self.run_dir}",
            f"scenario:  {self.scenario}   config {self.config_hash[:12]}   status {self.status}"
            + (f"   wall {self.wall_time_s:.2f}s" if self.wall_time_s is not None else ""),
        ]
        if self.snapshots is not None:
            lines.append(f"snapshots: {self.snapshots}")
        lines.append("")
        lines.append(_table(["diagnostic", "criterion", "value", "bound", "status"], [
            [r.diagnostic, r.name, _fmt(r.value), r.bound, r.status] for r in self.rows
        ]))
        for name in self.missing_artifacts:
            lines.append(f"⚠️ missing artifact: {name}")
        counts = ", ".join(f"{v} {k}" for k, v in sorted(self.counts().items()))
        lines.append("")
        lines.append(f"{'✅ all criteria pass' if self.passed else '⚠️ not all criteria pass'} ({counts or 'no criteria'})")
        return "\n".join(lines)


def _fmt(v: Optional[float]) -> str:
    if v is None:
        return "-"
    if math.isfinite(v) and v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.4g}"


def _table(header: List[str], rows: List[List[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)] if rows else [len(h) for h in header]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    out.extend(fmt.format(*map(str, r)) for r in rows)
    return "\n".join(out)


def load_manifest(run_dir: Path) -> Dict[str, Any]:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"run manifest not found: {path}")
    try:
        m = load_json(path)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ManifestError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(m, dict):
        raise ManifestError(f"{path}: top level must be an object")
    missing = [k for k in REQUIRED_KEYS if k not in m]
    if missing:
        raise ManifestError(f"{path}: missing {', '.join(missing)}")
    return m


def snapshot_count(run_dir: Path) -> Optional[int]:
    """Snapshots actually on disk, the smallest over the saved trajectories; None if none was saved."""
    counts = []
    for name in TRAJECTORY_DIRS:
        path = Path(run_dir) / name / "manifest.json"
        if not path.exists():
            continue
        try:
            files = load_json(path).get("files", [])
        except (json.JSONDecodeError, UnicodeDecodeError, AttributeError):
            files = []
        counts.append(sum((Path(run_dir) / name / f).exists() for f in files))
    return min(counts) if counts else None


def build_report(run_dir: Path) -> RunReport:
    run_dir = Path(run_dir)
    m = load_manifest(run_dir)
    snaps = snapshot_count(run_dir)
    rows = []
    reported = set()
    for c in m["criteria"]:
        try:
            need = int(c.get("min_snapshots", 0))
            if need and snaps is not None and snaps < need:
                status = INSUFFICIENT
            else:
                status = PASS if c["passed"] else FAIL
            rows.append(ReportRow(c["diagnostic"], c["name"], float(c["value"]), str(c["bound"]), status))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{run_dir / MANIFEST}: malformed criterion {c!r}") from e
        reported.add(c["diagnostic"])
    for name, state in m["diagnostics"].items():
        if name in reported and state == "done":
            continue
        if name in STENCIL_DIAGNOSTICS and (snaps is None or snaps < STENCIL_SNAPSHOTS):
            rows.append(ReportRow(name, "snapshots for the time stencil", None if snaps is None else float(snaps), f">= {STENCIL_SNAPSHOTS}", INSUFFICIENT))
        elif state != "done":
            rows.append(ReportRow(name, f"diagnostic {state}", None, "done", NOT_RUN))
    missing = [a["path"] for a in m["artifacts"] if not (run_dir / a["path"]).exists()]
    return RunReport(
        run_dir=run_dir,
        scenario=str(m["scenario"]),
        config_hash=str(m["config_hash"]),
        status=str(m["status"]),
        wall_time_s=m.get("wall_time_s"),
        snapshots=snaps,
        rows=rows,
        missing_artifacts=missing,
    )


def diff_reports(a: RunReport, b: RunReport) -> List[Dict[str, Any]]:
    """Per-criterion delta b − a, matched on (diagnostic, criterion); one-sided rows keep None."""
    left = {(r.diagnostic, r.name): r for r in a.rows}
    right = {(r.diagnostic, r.name): r for r in b.rows}
    keys = list(left) + [k for k in right if k not in left]
    out = []
    for key in keys:
        ra, rb = left.get(key), right.get(key)
        va = ra.value if ra else None
        vb = rb.value if rb else None
        out.append(
            {
                "diagnostic": key[0],
                "criterion": key[1],
                "value_a": va,
                "value_b": vb,
                "delta": vb - va if va is not None and vb is not None else None,
                "status_a": ra.status if ra else "-",
                "status_b": rb.status if rb else "-",
            }
        )
    return out


def render_diff(a: RunReport, b: RunReport) -> str:
    rows = diff_reports(a, b)
    head = [f"a: {a.run_dir} ({a.config_hash[:12]})", f"b: {b.run_dir} ({b.config_hash[:12]})", ""]
    body = _table(
        ["diagnostic", "criterion", "a", "b", "b - a", "status a", "status b"],
        [[r["diagnostic"], r["criterion"], _fmt(r["value_a"]), _fmt(r["value_b"]), _fmt(r["delta"]), r["status_a"], r["status_b"]] for r in rows],
    )
    return "\n".join(head) + body

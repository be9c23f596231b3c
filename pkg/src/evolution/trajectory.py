from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from src.common.errors import GridMismatchError, SnapshotFormatError
from src.common.io_utils import ensure_dir, load_json, write_json
from src.spectral.grid import BoxGrid, Field, forward
from src.spectral.snapshot import read_snapshot, write_snapshot

logger = logging.getLogger(__name__)

ALIASING_TOLERANCE = 1e-8


def coefficient_aliasing_fraction(U: np.ndarray, grid: BoxGrid) -> float:
    power = np.abs(U) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[~grid.dealias_mask])) / total


def aliasing_fraction(f: Field) -> float:
    """Share of spectral mass outside the 2/3-rule box."""
    return coefficient_aliasing_fraction(forward(f.values), f.grid)


@dataclass
class Trajectory:
    """Time-indexed snapshots of one flow on one grid. Appended snapshots are never modified."""

    grid: BoxGrid
    dt: float
    scheme: str
    model: Dict[str, Any] = field(default_factory=dict)
    dealiased: bool = True
    times: List[float] = field(default_factory=list)
    fields: List[Field] = field(default_factory=list)
    aliasing_flags: List[Tuple[float, float]] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def append(self, t: float, f: Field) -> None:
        if f.grid != self.grid:
            raise GridMismatchError(f"snapshot grid {f.grid} differs from trajectory grid {self.grid}")
        if self.times and not t > self.times[-1]:
            raise ValueError(f"snapshot time {t} does not increase past {self.times[-1]}")
        self.times.append(float(t))
        self.fields.append(f)

    def flag_aliasing(self, t: float, frac: float, tol: float = ALIASING_TOLERANCE) -> bool:
        if frac <= tol:
            return False
        if not self.aliasing_flags:
            logger.warning("aliasing guard: %.3g of spectral mass above the 2/3 cutoff at t=%.6g", frac, t)
        self.aliasing_flags.append((float(t), float(frac)))
        return True

    def check_aliasing(self, t: float, f: Field, tol: float = ALIASING_TOLERANCE) -> float:
        frac = aliasing_fraction(f)
        self.flag_aliasing(t, frac, tol)
        return frac

    def __len__(self) -> int:
        return len(self.times)

    def items(self) -> Iterator[Tuple[float, Field]]:
        return iter(zip(self.times, self.fields))

    @property
    def final(self) -> Field:
        return self.fields[-1]

    @property
    def spacing(self) -> float:
        """Uniform spacing of stored times (dt × stride)."""
        if len(self.times) < 2:
            return self.dt
        return float(self.times[1] - self.times[0])

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if len(self.times) < 3:
            return True
        d = np.diff(self.times)
        return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))

    def index_of(self, t: float, atol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > atol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return i

    def field_at(self, t: float) -> Field:
        return self.fields[self.index_of(t)]

    def values_array(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    # -----------------------------
    # directory I/O
    # -----------------------------
    def save(self, directory: Path, *, stride: int = 1) -> Path:
        directory = Path(directory)
        ensure_dir(directory)
        files = []
        kept_times = []
        for i in range(0, len(self.times), max(1, int(stride))):
            name = f"snap_{i:06d}.qnls"
            write_snapshot(directory / name, self.fields[i], self.times[i])
            files.append(name)
            kept_times.append(self.times[i])
        manifest = {
            "format": "QNLS1",
            "grid": self.grid.describe(),
            "dt": self.dt,
            "scheme": self.scheme,
            "model": self.model,
            "dealiased": self.dealiased,
            "stride": int(stride),
            "times": kept_times,
            "files": files,
            "aliasing_flags": [list(x) for x in self.aliasing_flags],
            "meta": self.meta,
        }
        write_json(directory / "manifest.json", manifest)
        logger.info("saved %d snapshots to %s", len(files), directory)
        return directory

    @classmethod
    def load(cls, directory: Path) -> "Trajectory":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"trajectory manifest not found: {manifest_path}")
        m = load_json(manifest_path)
        grid = BoxGrid(**m["grid"])
        traj = cls(
            grid=grid,
            dt=float(m["dt"]),
            scheme=str(m.get("scheme", "")),
            model=dict(m.get("model") or {}),
            dealiased=bool(m.get("dealiased", True)),
            meta=dict(m.get("meta") or {}),
        )
        for name, t in zip(m["files"], m["times"]):
            f, ts = read_snapshot(directory / name)
            if abs(ts - float(t)) > 1e-12 * max(1.0, abs(t)):
                raise SnapshotFormatError(f"{name}: header time {ts} disagrees with manifest time {t}")
            traj.append(ts, f)
        traj.aliasing_flags = [tuple(x) for x in m.get("aliasing_flags", [])]
        return traj


# -----------------------------
# cubic Lagrange interpolation in time
# -----------------------------
def lagrange_window(times: Sequence[float], t: float, width: int = 4) -> Tuple[List[int], np.ndarray]:
    """Indices of the `width` stored times bracketing t and their Lagrange weights."""
    ts = np.asarray(times, dtype=float)
    n = len(ts)
    if n == 0:
        raise ValueError("no stored times")
    if n < width:
        width = n
    tol = 1e-9 * max(1.0, abs(ts[-1] - ts[0]))
    if t < ts[0] - tol or t > ts[-1] + tol:
        raise ValueError(f"t={t} outside stored range [{ts[0]}, {ts[-1]}]")
    j = int(np.searchsorted(ts, t))
    start = min(max(j - width // 2, 0), n - width)
    idx = list(range(start, start + width))
    w = np.ones(width)
    for a, ia in enumerate(idx):
        for b, ib in enumerate(idx):
            if a != b:
                w[a] *= (t - ts[ib]) / (ts[ia] - ts[ib])
    return idx, w


def interpolate_field(traj: Trajectory, t: float) -> Field:
    idx, w = lagrange_window(traj.times, t)
    values = sum(wi * traj.fields[i].values for i, wi in zip(idx, w))
    return Field(traj.grid, values)

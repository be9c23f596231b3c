from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.common.errors import ConfigError, SymbolError
from src.common.io_utils import write_csv, write_json
from src.conservation.densities import densities, divergence_values
from src.conservation.residuals import ParaSetting, flat_flux_residual, para_flux_residual, residual_norms
from src.evolution.solvers import (
    self_convergence,
    solve_flat,
    solve_linearized,
    solve_paradifferential,
    solve_qnls,
    time_reversal_check,
)
from src.evolution.trajectory import Trajectory
from src.experiments.config import ExperimentConfig
from src.experiments.initial_data import build_initial, shell_random, tagged_rng
from src.littlewood_paley.envelope import DEFAULT_DELTA, DEFAULT_RATIO_FACTOR, envelope_report, minimal_envelope
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.metrics import IdentityMetric
from src.model.paradiff import full_metric
from src.model.rays import bicharacteristic_trace
from src.model.spec import ModelSpec, load_model
from src.model.structure import validate_structure
from src.morawetz.functionals import (
    calibrate_cn,
    closed_form_cn,
    im_clean,
    im_clean_grid,
    j4,
    j4_closed_form_quadratic,
    j4_main,
    morawetz_identity_residual,
)
from src.morawetz.weights import WeightSpec
from src.multilinear.resonance import (
    CHARGED_SIGN_PATTERNS,
    DOUBLY_RESONANT,
    NONRESONANT,
    ORIGIN,
    RESONANT,
    InteractionQuadruple,
    classify,
    is_rectangle,
    write_classification_table,
)
from src.multilinear.symbols import conservative_check, cubic_symbol_of
from src.norms.fits import loglog_fit, transversality_scaling_fit
from src.norms.meters import NormLedger, sobolev_profile, stride_sensitivity, strichartz_norm
from src.norms.scattering import scattering_extract
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import check_support, flat_propagator, l2_norm, to_spectral

logger = logging.getLogger(__name__)

# stencil-based ledgers need this many stored snapshots
STENCIL_SNAPSHOTS = 5
STENCIL_DIAGNOSTICS = frozenset({"density-flux", "morawetz", "para-flux", "para-morawetz"})


@dataclass(frozen=True)
class Criterion:
    diagnostic: str
    name: str
    value: float
    bound: str
    passed: bool
    min_snapshots: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def at_most(diagnostic: str, name: str, value: float, limit: float, *, min_snapshots: int = 0) -> Criterion:
    value = float(value)
    return Criterion(diagnostic, name, value, f"<= {limit:g}", bool(value <= limit), min_snapshots)


def at_least(diagnostic: str, name: str, value: float, limit: float, *, min_snapshots: int = 0) -> Criterion:
    value = float(value)
    return Criterion(diagnostic, name, value, f">= {limit:g}", bool(value >= limit), min_snapshots)


def within(diagnostic: str, name: str, value: float, target: float, tol: float) -> Criterion:
    value = float(value)
    return Criterion(diagnostic, name, value, f"{target:g} ± {tol:g}", bool(abs(value - target) <= tol))


def holds(diagnostic: str, name: str, ok: bool) -> Criterion:
    return Criterion(diagnostic, name, 1.0 if ok else 0.0, "true", bool(ok))


# -----------------------------
# run context
# -----------------------------
class RunContext:
    """Lazily built shared state of one run: grid, model, data, trajectories."""

    def __init__(self, config: ExperimentConfig, run_dir: Path) -> None:
        self.config = config
        self.run_dir = Path(run_dir)
        try:
            self.grid = BoxGrid(**config.grid)
        except ValueError as e:
            raise ConfigError(f"[grid]: {e}") from e
        self.model: ModelSpec = load_model(config.model_path())
        if self.model.dim != self.grid.dim:
            raise ConfigError(f"model {self.model.name!r} is {self.model.dim}D but the grid is {self.grid.dim}D")
        self._u0: Optional[Field] = None
        self._trajectory: Optional[Trajectory] = None
        self._para: Optional[Tuple[Trajectory, ParaSetting]] = None
        self._localized: Optional[Trajectory] = None

    def rng(self, tag: str) -> np.random.Generator:
        return tagged_rng(self.config.seed, tag)

    def param(self, key: str, default: Any = None) -> Any:
        return self.config.param(key, default)

    def path(self, name: str) -> Path:
        return self.run_dir / name

    @property
    def is_flat(self) -> bool:
        return isinstance(self.model.metric, IdentityMetric) and self.model.nonlinearity.is_zero

    def require_flat(self, diagnostic: str) -> None:
        if not self.is_flat:
            raise ConfigError(f"{diagnostic} needs the flat model, got {self.model.name!r}")

    @property
    def u0(self) -> Field:
        if self._u0 is None:
            self._u0 = build_initial(self.grid, self.config.initial, self.rng("initial"))
        return self._u0

    def unit_data(self) -> Field:
        """u0 rescaled to peak modulus 1, the shape that ε-sweeps multiply."""
        return self.u0 * (1.0 / float(np.max(np.abs(self.u0.values))))

    def solve(self, u0: Field, *, T: Optional[float] = None, dt: Optional[float] = None) -> Trajectory:
        cfg = self.config
        T = float(T if T is not None else cfg.solver_value("T"))
        dt = float(dt if dt is not None else cfg.solver_value("dt"))
        stride = int(cfg.solver_value("stride"))
        if self.is_flat:
            return solve_flat(u0, T, dt, stride=stride)
        return solve_qnls(
            self.model,
            u0,
            T,
            dt,
            stride=stride,
            divergence_form=bool(cfg.solver_value("divergence_form")),
            override_cubic=bool(cfg.solver_value("override_cubic")),
        )

    def trajectory(self) -> Trajectory:
        """The run's main trajectory from u0, solved once and saved under trajectory/."""
        if self._trajectory is None:
            self._trajectory = self.solve(self.u0)
            self._trajectory.save(self.path("trajectory"))
        return self._trajectory

    def localized_data(self) -> Field:
        """Gaussian bump well inside the central half-box (morawetz_width / morawetz_xi0 / morawetz_offset)."""
        carrier = [(-1.0) ** a * self.grid.dk for a in range(self.grid.dim)]
        spec = {
            "kind": "gaussian-bump",
            "width": self.param("morawetz_width", 0.095 * self.grid.box_length),
            "xi0": self.param("morawetz_xi0", carrier),
            "offset": self.param("morawetz_offset"),
        }
        u0 = build_initial(self.grid, spec, self.rng("morawetz-data"))
        check_support(u0, label="morawetz data")
        return u0

    def localized_flow(self) -> Trajectory:
        """Flow of `localized_data`, solved once and saved under morawetz_trajectory/."""
        if self._localized is None:
            self._localized = self.solve(self.localized_data())
            self._localized.save(self.path("morawetz_trajectory"))
        return self._localized

    def para_flow(self) -> Tuple[Trajectory, ParaSetting]:
        """Shell-k paradifferential flow over the main trajectory, saved under para_trajectory/."""
        if self._para is None:
            k = int(self.param("para_shell", 3))
            background = self.trajectory()
            v0 = shell_random(self.grid, {"shell": k, "amplitude": self.param("para_amplitude", 1.0)}, self.rng("para-data"))
            v = solve_paradifferential(
                background,
                v0,
                None,
                k,
                background.times[-1],
                float(self.config.solver_value("dt")),
                model=self.model,
            )
            v.save(self.path("para_trajectory"))
            self._para = (v, ParaSetting(background, self.model, k))
        return self._para


Diagnostic = Callable[[RunContext], List[Criterion]]
DIAGNOSTICS: Dict[str, Diagnostic] = {}


def diagnostic(name: str) -> Callable[[Diagnostic], Diagnostic]:
    def register(fn: Diagnostic) -> Diagnostic:
        DIAGNOSTICS[name] = fn
        return fn

    return register


def diagnostic_names() -> List[str]:
    return sorted(DIAGNOSTICS)


def flux_scale(u: Field) -> float:
    """‖∂_jP_j(u)‖_{L²}, the size residuals are measured against."""
    return residual_norms(divergence_values(densities(u).P, u.grid), u.grid)["l2"]


def _time_rows(ledger, t: float) -> List[Dict[str, Any]]:
    times = sorted({r["time"] for r in ledger.rows})
    nearest = min(times, key=lambda s: abs(s - t))
    return [r for r in ledger.rows if r["time"] == nearest]


def random_bumps(grid: BoxGrid, rng: np.random.Generator, count: int = 2) -> Field:
    """A few Gaussian bumps well inside the central half-box, with small lattice carriers."""
    L = grid.box_length
    total = np.zeros(grid.shape, dtype=np.complex128)
    for _ in range(count):
        width = rng.uniform(0.06, 0.09) * L
        center = grid.center + rng.uniform(-0.03, 0.03, grid.dim) * L
        carrier = rng.integers(-2, 3, grid.dim) * grid.dk
        r2 = np.zeros(grid.shape)
        phase = np.zeros(grid.shape)
        for x, c, k in zip(grid.coordinates, center, carrier):
            r2 = r2 + (x - c) ** 2
            phase = phase + k * (x - c)
        total = total + rng.uniform(0.5, 1.0) * np.exp(-r2 / (2.0 * width**2) + 1j * phase)
    return Field(grid, total)


# -----------------------------
# exact identities and resonance tables
# -----------------------------
@diagnostic("exact-identities")
def exact_identities(ctx: RunContext) -> List[Criterion]:
    grid = ctx.grid
    bank = DyadicFilterBank(grid)
    rng = ctx.rng("exact-identities")
    samples = int(ctx.param("identity_samples", 100))
    tol = float(ctx.param("identity_tolerance", 1e-12))
    worst = {"partition_of_unity": 0.0, "plancherel": 0.0, "unitarity": 0.0, "group_law": 0.0}
    for _ in range(samples):
        f = Field(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        norm = l2_norm(f)
        s, t = rng.uniform(-1.0, 1.0, 2)
        total = sum(bank.decompose(f), Field.zeros(grid))
        errors = {
            "partition_of_unity": l2_norm(total - f) / norm,
            "plancherel": abs(to_spectral(f).l2_norm() - norm) / norm,
            "unitarity": abs(l2_norm(flat_propagator(f, t)) - norm) / norm,
            "group_law": l2_norm(flat_propagator(flat_propagator(f, s), t) - flat_propagator(f, s + t)) / norm,
        }
        for k, v in errors.items():
            worst[k] = max(worst[k], float(v))
    rows = [{"identity": k, "max_relative_error": v, "samples": samples} for k, v in worst.items()]
    write_csv(ctx.path("exact_identities.csv"), ["identity", "max_relative_error", "samples"], rows)
    return [at_most("exact-identities", k, v, tol) for k, v in worst.items()]


def _random_quadruples(rng: np.random.Generator, dim: int, count: int, bound: int) -> List[InteractionQuadruple]:
    """A mix of uniform quadruples, resonant constructions and fully coincident ones."""
    out = []
    for i in range(count):
        pick = i % 4
        base = rng.integers(-bound, bound + 1, dim)
        if pick in (0, 3):
            xis = rng.integers(-bound, bound + 1, (4, dim))
        elif pick == 1 and dim == 1:
            a, b = rng.integers(-bound, bound + 1, 2)
            xis = [[a], [b], [b], [a]] if rng.integers(2) else [[a], [a], [b], [b]]
        elif pick == 1:
            # ξ², ξ² + e, ξ² + e + f, ξ² + f around a rectangle with e ⟂ f
            p, q = rng.integers(-bound // 2, bound // 2 + 1, 2)
            s = int(rng.integers(-2, 3))
            e = np.zeros(dim, dtype=int)
            f = np.zeros(dim, dtype=int)
            e[:2] = (p, q)
            f[:2] = (-s * q, s * p)
            xis = [base + e, base, base + f, base + e + f]
        else:
            xis = [base] * 4
        out.append(InteractionQuadruple(tuple(tuple(int(c) for c in x) for x in xis)))
    return out


def _charged_quadruples(rng: np.random.Generator, dim: int, count: int, bound: int) -> List[InteractionQuadruple]:
    """Every sign pattern without phase rotation, mixing uniform draws, triple and full coincidences, and resonant constructions."""
    out = []
    for i in range(count):
        signs = CHARGED_SIGN_PATTERNS[i % len(CHARGED_SIGN_PATTERNS)]
        pick = (i // len(CHARGED_SIGN_PATTERNS)) % 4
        xis = rng.integers(-bound, bound + 1, (4, dim))
        if pick == 1:
            odd = int(rng.integers(4))
            xis[[a for a in range(4) if a != odd]] = rng.integers(-bound, bound + 1, dim)
        elif pick == 2:
            xis[:] = rng.integers(-1, 2, dim)
        elif pick == 3 and abs(sum(signs)) == 2:
            # e, f, 0 on the majority sign and e + f opposite, with e ⟂ f
            odd = next(a for a, s in enumerate(signs) if signs.count(s) == 1)
            rest = [a for a in range(4) if a != odd]
            e = np.zeros(dim, dtype=int)
            f = np.zeros(dim, dtype=int)
            e[0] = rng.integers(-bound, bound + 1)
            if dim > 1:
                f[1] = rng.integers(-bound, bound + 1)
            xis = np.zeros((4, dim), dtype=int)
            xis[rest[0]], xis[rest[1]], xis[odd] = e, f, e + f
        out.append(InteractionQuadruple(tuple(tuple(int(c) for c in x) for x in xis), signs))
    return out


def _brute_label(q: InteractionQuadruple) -> str:
    X = np.asarray(q.xis, dtype=np.int64)
    s = np.asarray(q.signs)
    resonant = not np.any(s @ X) and int(s @ np.sum(X * X, axis=1)) == 0
    if resonant and np.all(X == X[0]):
        return DOUBLY_RESONANT
    return RESONANT if resonant else NONRESONANT


@diagnostic("resonance")
def resonance_tables(ctx: RunContext) -> List[Criterion]:
    rng = ctx.rng("resonance")
    count = int(ctx.param("resonance_samples", 10_000))
    bound = int(ctx.param("resonance_bound", 6))
    table_rows = int(ctx.param("resonance_table_rows", 1000))
    out = []
    for dim in ctx.param("resonance_dims", [1, 2]):
        dim = int(dim)
        quads = _random_quadruples(rng, dim, count, bound)
        labels = [classify(q).label for q in quads]
        brute = sum(a != _brute_label(q) for a, q in zip(labels, quads))
        out.append(at_most("resonance", f"{dim}D classify vs brute force mismatches", brute, 0))
        resonant = [a in (RESONANT, DOUBLY_RESONANT) for a in labels]
        if dim == 1:
            wrong = sum(r != (sorted((q.xis[0], q.xis[2])) == sorted((q.xis[1], q.xis[3]))) for r, q in zip(resonant, quads))
            out.append(at_most("resonance", "1D pairing characterisation mismatches", wrong, 0))
        if dim == 2:
            wrong = sum(r != is_rectangle(q) for r, q in zip(resonant, quads))
            out.append(at_most("resonance", "2D rectangle test mismatches", wrong, 0))
        charged = _charged_quadruples(rng, dim, int(ctx.param("resonance_charged_samples", 2000)), bound)
        reports = [classify(q) for q in charged]
        brute = sum(r.label != _brute_label(q) for r, q in zip(reports, charged))
        out.append(at_most("resonance", f"{dim}D charged patterns vs brute force mismatches", brute, 0))
        worst = sum(r.resonant and not r.transversal and r.case != ORIGIN for r in reports)
        out.append(at_most("resonance", f"{dim}D charged resonant non-transversal away from 0", worst, 0))
        write_classification_table(ctx.path(f"resonance_{dim}d.csv"), quads[:table_rows])
        write_classification_table(ctx.path(f"resonance_{dim}d_charged.csv"), charged[:table_rows])
        logger.info("resonance %dD: %d quadruples, %d resonant", dim, count, sum(resonant))
    return out


# -----------------------------
# density-flux and Morawetz identities
# -----------------------------
@diagnostic("density-flux")
def density_flux(ctx: RunContext) -> List[Criterion]:
    ctx.require_flat("density-flux")
    ledger = flat_flux_residual(ctx.trajectory())
    ledger.to_csv(ctx.path("ledger_density_flux.csv"))
    scale = max(flux_scale(ctx.u0), 1.0)
    tol = float(ctx.param("flux_tolerance", 1e-6))
    out = [
        at_most("density-flux", "mass residual / max(‖∂P‖, 1)", ledger.max_norm("mass") / scale, tol, min_snapshots=STENCIL_SNAPSHOTS),
        at_most("density-flux", "momentum residual / max(‖∂P‖, 1)", ledger.max_momentum() / scale, tol, min_snapshots=STENCIL_SNAPSHOTS),
    ]
    if ctx.param("flux_refinement", False):
        dts = [float(d) for d in ctx.param("refinement_dts", [0.01, 0.005, 0.0025])]
        t_ref = float(ctx.param("refinement_time", 0.1))
        errors = []
        for d in dts:
            rows = _time_rows(flat_flux_residual(solve_flat(ctx.u0, 2.0 * t_ref, d)), t_ref)
            errors.append(math.sqrt(sum(r["l2"] ** 2 for r in rows)))
        fit = loglog_fit(dts, errors)
        write_json(ctx.path("density_flux_refinement.json"), {"dts": dts, "time": t_ref, "errors": errors, "slope": fit.slope, "halfwidth": fit.halfwidth})
        out.append(within("density-flux", "refinement order under dt halving", fit.slope, 4.0, float(ctx.param("refinement_order_tolerance", 0.3))))
    return out


def _weight(ctx: RunContext) -> WeightSpec:
    return WeightSpec(kind=str(ctx.param("morawetz_weight", "quadratic")), diagonal=str(ctx.param("morawetz_diagonal", "exclude")))


@diagnostic("morawetz")
def morawetz(ctx: RunContext) -> List[Criterion]:
    ctx.require_flat("morawetz")
    w = _weight(ctx)
    # |x|² is not periodic: the identity only closes for data away from the box edge
    ledger = morawetz_identity_residual(ctx.localized_flow(), None, w)
    ledger.to_csv(ctx.path("ledger_morawetz.csv"))
    out = [
        at_most(
            "morawetz",
            "|dI/dt - J4| / max(|J4|, 1)",
            ledger.max_relative_residual(),
            float(ctx.param("morawetz_tolerance", 1e-6)),
            min_snapshots=STENCIL_SNAPSHOTS,
        )
    ]
    if w.kind == "quadratic":
        closed = j4_closed_form_quadratic(ctx.u0, ctx.u0)
        rel = abs(j4(ctx.u0, ctx.u0, w=w) - closed) / max(abs(closed), 1e-300)
        out.append(at_most("morawetz", "J4 against 8‖∂(u⊗ū)‖² (a = |x|²)", rel, float(ctx.param("closed_form_tolerance", 1e-8))))
    return out


@diagnostic("positivity")
def positivity(ctx: RunContext) -> List[Criterion]:
    rng = ctx.rng("positivity")
    w = WeightSpec("abs", diagonal="lattice")
    rows = []
    for i in range(int(ctx.param("positivity_samples", 100))):
        u = random_bumps(ctx.grid, rng)
        main = j4_main(u, u, w=w)
        lhs = im_clean(u, w).lhs
        rows.append({"sample": i, "j4_main": main, "lhs": lhs, "slack": main - lhs, "relative_slack": (main - lhs) / max(abs(main), 1e-300)})
    write_csv(ctx.path("positivity.csv"), ["sample", "j4_main", "lhs", "slack", "relative_slack"], rows)
    violations = sum(r["relative_slack"] < -1e-10 for r in rows)
    return [
        at_most("positivity", "samples with negative slack", violations, 0),
        at_least("positivity", "min relative slack", min(r["relative_slack"] for r in rows), -1e-10),
    ]


@diagnostic("im-clean")
def im_clean_ratio(ctx: RunContext) -> List[Criterion]:
    rng = ctx.rng("im-clean")
    diagonal = str(ctx.param("im_diagonal", "lattice"))
    w = WeightSpec("abs", diagonal=diagonal)
    points = ctx.param("im_points")
    grid = im_clean_grid(ctx.grid, int(points) if points is not None else None)
    rows = []
    for i in range(int(ctx.param("im_samples", 20))):
        r = im_clean(random_bumps(grid, rng), w)
        rows.append({"sample": i, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio})
    write_csv(ctx.path("im_clean.csv"), ["sample", "lhs", "rhs", "ratio"], rows)
    ratios = np.array([r["ratio"] for r in rows])
    spread = float(np.std(ratios) / abs(np.mean(ratios)))
    out = [at_most("im-clean", "ratio spread std/mean", spread, float(ctx.param("im_spread_tolerance", 1e-3)))]
    if ctx.param("im_calibrate", True):
        cal = calibrate_cn(ctx.grid.dim, diagonal)
        write_json(ctx.path("im_clean_calibration.json"), asdict(cal))
        out.append(within("im-clean", "calibrated c_n / closed form", cal.value / closed_form_cn(ctx.grid.dim), 1.0, float(ctx.param("im_cn_tolerance", 1e-3))))
    return out


# -----------------------------
# paradifferential flow
# -----------------------------
@diagnostic("para-flux")
def para_flux(ctx: RunContext) -> List[Criterion]:
    v, setting = ctx.para_flow()
    ledger = para_flux_residual(v, setting.background, setting.model, setting.k)
    ledger.to_csv(ctx.path("ledger_para_flux.csv"))
    scale = max(flux_scale(v.fields[0]), 1e-300)
    lam = 2.0**setting.k
    mom = max(ledger.max_momentum("momentum_cov_"), ledger.max_momentum("momentum_"))
    return [
        at_most("para-flux", "mass residual / ‖∂P‖", ledger.max_norm("mass") / scale, float(ctx.param("para_mass_tolerance", 1e-5)), min_snapshots=STENCIL_SNAPSHOTS),
        at_most("para-flux", "momentum residual / (λ‖∂P‖)", mom / (lam * scale), float(ctx.param("para_momentum_tolerance", 1e-3)), min_snapshots=STENCIL_SNAPSHOTS),
    ]


@diagnostic("para-morawetz")
def para_morawetz(ctx: RunContext) -> List[Criterion]:
    v, setting = ctx.para_flow()
    ledger = morawetz_identity_residual(v, None, _weight(ctx), para_u=setting, para_v=setting)
    ledger.to_csv(ctx.path("ledger_para_morawetz.csv"))
    return [
        at_most(
            "para-morawetz",
            "|dI/dt - J4 - K| / max(|J4|, 1)",
            ledger.max_relative_residual(),
            float(ctx.param("para_morawetz_tolerance", 1e-4)),
            min_snapshots=STENCIL_SNAPSHOTS,
        )
    ]


# -----------------------------
# solver, structure, norms
# -----------------------------
@diagnostic("structure")
def structure(ctx: RunContext) -> List[Criterion]:
    rep = validate_structure(ctx.model, seed=ctx.config.seed)
    payload: Dict[str, Any] = {"model": ctx.model.describe(), "structure": rep.to_dict()}
    out = [holds("structure", "cubic structure", rep.cubic.passed), holds("structure", "declared flags match", not rep.mismatches)]
    if not ctx.model.nonlinearity.is_zero:
        try:
            cons = conservative_check(cubic_symbol_of(ctx.model), ctx.grid.dim)
        except SymbolError as e:
            logger.warning("no cubic symbol for %s: %s", ctx.model.name, e)
        else:
            payload["conservative"] = cons.to_dict()
            out.append(holds("structure", "cubic symbol real on the diagonal", cons.passed))
    write_json(ctx.path("structure.json"), payload)
    return out


@diagnostic("solver")
def solver(ctx: RunContext) -> List[Criterion]:
    T = float(ctx.param("convergence_T", 1.0))
    dts = [float(d) for d in ctx.param("convergence_dts", [0.01, 0.005, 0.0025])]
    payload: Dict[str, Any] = {}
    out = []
    if ctx.is_flat:
        logger.info("flat model: the propagator is exact in time, no convergence study")
    else:
        study = self_convergence(ctx.model, ctx.u0, T, dts, reference_dt=min(dts) / 4.0)
        payload["self_convergence"] = study
        out.append(within("solver", "self-convergence order", study["order"], 4.0, float(ctx.param("order_tolerance", 0.3))))
    rev = time_reversal_check(ctx.model, ctx.u0, T, min(dts))
    payload["time_reversal"] = rev
    out.append(holds("solver", "time reversal returns to the data", rev["passed"]))

    if not isinstance(ctx.model.metric, IdentityMetric):
        T_lin, dt_lin = float(ctx.param("linearized_T", 0.5)), float(ctx.param("linearized_dt", 0.005))
        v0 = shell_random(ctx.grid, {"shell": 1}, ctx.rng("linearized"))
        background = solve_qnls(ctx.model, ctx.u0, T_lin, dt_lin)
        v_T = solve_linearized(ctx.model, background, v0, T_lin, dt_lin).final.values
        base = background.final.values
        hs = [0.1, 0.05, 0.025]
        errors = []
        for h in hs:
            shifted = solve_qnls(ctx.model, ctx.u0 + v0 * h, T_lin, dt_lin, stride=10**6).final.values
            errors.append(float(np.linalg.norm((shifted - base) / h - v_T)))
        slope = loglog_fit(hs, errors).slope
        payload["linearized_consistency"] = {"h": hs, "errors": errors, "slope": slope}
        out.append(at_least("solver", "linearized vs finite-difference slope", slope, 0.9))
    write_json(ctx.path("solver.json"), payload)
    return out


def _default_pairs(dim: int) -> List[Tuple[float, float]]:
    if dim == 1:
        return [(math.inf, 2.0), (4.0, math.inf)]
    return [(math.inf, 2.0), (4.0, 2.0 * dim / (dim - 1))]


def _norm_name(p: float, q: float) -> str:
    def fmt(x: float) -> str:
        return "inf" if math.isinf(x) else f"{x:g}"

    return f"L{fmt(p)}L{fmt(q)}"


@diagnostic("strichartz")
def strichartz(ctx: RunContext) -> List[Criterion]:
    traj = ctx.trajectory()
    ledger = NormLedger()
    pairs = [(float(p), float(q)) for p, q in ctx.param("strichartz_pairs", _default_pairs(ctx.grid.dim))]
    for p, q in pairs:
        ledger.add(_norm_name(p, q), strichartz_norm(traj, p, q), traj)
    s = float(ctx.param("sobolev_s", 1.0))
    ledger.add(f"LinfH{s:g}", float(np.max(sobolev_profile(traj, s))), traj)
    ledger.to_csv(ctx.path("norms.csv"))
    ledger.to_json(ctx.path("norms.json"))
    p, q = pairs[-1]
    write_json(ctx.path("norms_stride.json"), {"norm": _norm_name(p, q), **stride_sensitivity(lambda t: strichartz_norm(t, p, q), traj)})

    mass = sobolev_profile(traj, 0.0) ** 2
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
    conservative = ctx.is_flat or bool(ctx.model.is_conservative)
    if not conservative:
        logger.info("model %s is not declared conservative; mass drift %.3g reported only", ctx.model.name, drift)
        return []
    return [at_most("strichartz", "relative mass drift", drift, float(ctx.param("mass_drift_tolerance", 1e-8)))]


@diagnostic("envelope")
def envelope(ctx: RunContext) -> List[Criterion]:
    s = float(ctx.param("envelope_s", 1.0))
    env0 = minimal_envelope(ctx.u0, s, float(ctx.param("envelope_delta", DEFAULT_DELTA)))
    env0.to_csv(ctx.path("envelope0.csv"))
    rep = envelope_report(ctx.trajectory(), env0, s, factor=float(ctx.param("envelope_factor", DEFAULT_RATIO_FACTOR)))
    rep.to_csv(ctx.path("envelope_report.csv"))
    out = [holds("envelope", f"initial envelope {k}", ok) for k, ok in env0.is_valid_for(ctx.u0).items()]
    out.append(at_most("envelope", "max ‖P_k u(t)‖ / c_k(0)", rep.max_ratio, rep.factor))
    return out


# -----------------------------
# scaling studies
# -----------------------------
@diagnostic("transversality")
def transversality(ctx: RunContext) -> List[Criterion]:
    dim = ctx.grid.dim
    fit = transversality_scaling_fit(
        dim,
        high=ctx.param("transversality_high"),
        low=ctx.param("transversality_low"),
        fixed_low=ctx.param("transversality_fixed_low"),
        fixed_high=ctx.param("transversality_fixed_high"),
        points_per_axis=ctx.grid.points_per_axis,
        box_length=ctx.grid.box_length,
        seed=ctx.config.seed,
    )
    write_json(ctx.path("transversality_fit.json"), fit.to_dict())
    tol = float(ctx.param("transversality_tolerance", 0.15 if dim == 2 else 0.2))
    return [
        within("transversality", "exponent in the high frequency", fit.high.slope, -0.5, tol),
        within("transversality", "exponent in the low frequency", fit.low.slope, (dim - 1) / 2.0, tol),
    ]


def _snap(times: Sequence[float], wanted: Sequence[float]) -> List[float]:
    arr = np.asarray(times)
    return sorted({float(arr[np.argmin(np.abs(arr - t))]) for t in wanted})


@diagnostic("scattering")
def scattering(ctx: RunContext) -> List[Criterion]:
    eps_list = [float(e) for e in ctx.param("scattering_eps", [0.025, 0.05, 0.1])]
    T = float(ctx.config.solver_value("T"))
    wanted = ctx.param("scattering_probes", [T / 4, T / 2, 3 * T / 4, T])
    s = float(ctx.param("scattering_s", 1.0))
    shape = ctx.unit_data()
    rows = []
    for eps in eps_list:
        traj = ctx.solve(shape * eps)
        probe = scattering_extract(traj, _snap(traj.times, wanted), s=s)
        rows.append(
            {
                "eps": eps,
                "times": probe.times,
                "increments": probe.increments,
                "ratios": probe.ratios,
                "min_decrease": probe.min_decrease,
                "monotone": probe.monotone,
            }
        )
    fit = loglog_fit(eps_list, [r["increments"][0] for r in rows])
    decrease = min(r["min_decrease"] for r in rows)
    write_json(
        ctx.path("scattering.json"),
        {"s": s, "runs": rows, "first_increment_slope": fit.slope, "halfwidth": fit.halfwidth, "min_decrease": decrease},
    )
    return [
        at_least("scattering", "first increment slope in ε", fit.slope, float(ctx.param("scattering_min_slope", 2.5))),
        at_least("scattering", "increment decrease per checkpoint step", decrease, float(ctx.param("scattering_min_decrease", 2.0))),
    ]


@diagnostic("bicharacteristics")
def bicharacteristics(ctx: RunContext) -> List[Criterion]:
    if isinstance(ctx.model.metric, IdentityMetric):
        raise ConfigError("bicharacteristics needs a solution-dependent metric")
    eps_list = [float(e) for e in ctx.param("ray_eps", [0.05, 0.1, 0.2])]
    x0 = np.asarray(ctx.param("ray_x0", ctx.grid.center.tolist()), dtype=float)
    direction = np.asarray(ctx.param("ray_direction", [1.0] + [0.0] * (ctx.grid.dim - 1)), dtype=float)
    xi0 = direction / np.linalg.norm(direction)
    T, dt = float(ctx.param("ray_T", 50.0)), float(ctx.param("ray_dt", 0.05))
    radius = float(ctx.param("ray_radius", ctx.grid.box_length / 4))
    shape = ctx.unit_data()
    rows = []
    for eps in eps_list:
        ray = bicharacteristic_trace(full_metric(ctx.model, shape * eps), x0, xi0, T, dt)
        rows.append({"eps": eps, **ray.summary(radius)})
    deviations = [r["max_xi_deviation"] for r in rows]
    write_json(ctx.path("bicharacteristics.json"), {"T": T, "dt": dt, "radius": radius, "rays": rows})
    out = [at_most("bicharacteristics", "max relative H drift", max(r["max_relative_H_drift"] for r in rows), float(ctx.param("ray_h_tolerance", 1e-6)))]
    if min(deviations) > 0:
        out.append(at_least("bicharacteristics", "|ξ(t) - ξ(0)| slope in ε", loglog_fit(eps_list, deviations).slope, 1.8))
    else:
        out.append(holds("bicharacteristics", "|ξ(t) - ξ(0)| slope in ε", False))
    return out

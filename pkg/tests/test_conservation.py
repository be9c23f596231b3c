from __future__ import annotations

import numpy as np
import pytest

from src.common.errors import StencilError, SymbolError
from src.conservation.densities import densities, divergence_values, mass_density, momentum_density, stress_tensor
from src.conservation.residuals import flat_flux_residual, para_flux_residual, residual_norms
from src.conservation.weighted import BilinearSymbol, shell_symbol_pair, unit_symbol, weighted_flux_residual, weighted_mass
from src.evolution.solvers import solve_flat, solve_paradifferential, solve_qnls
from src.evolution.trajectory import Trajectory
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.spec import quasilinear_cubic_model
from src.multilinear.symbols import SeparableTerm, one, xi_component
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import l2_norm
from tests.helpers import band_limited, rel_err


def tone(grid: BoxGrid, m, amplitude: float = 1.0) -> Field:
    phase = sum(grid.dk * mi * x for mi, x in zip(m, grid.coordinates))
    return Field(grid, amplitude * np.exp(1j * phase) * np.ones(grid.shape))


def flux_scale(u: Field) -> float:
    """Size of ∂_jP_j, used to normalise residuals."""
    return residual_norms(divergence_values(densities(u).P, u.grid), u.grid)["l2"]


def row_near(ledger, identity: str, t: float) -> dict:
    rows = [r for r in ledger.rows if r["identity"] == identity]
    return min(rows, key=lambda r: abs(r["time"] - t))


# -----------------------------
# densities
# -----------------------------
def test_plane_wave_densities(grid2d):
    d = densities(tone(grid2d, (1, 2), amplitude=0.5))
    assert np.allclose(d.M, 0.25)
    assert np.allclose(d.P[0], -2 * 0.25) and np.allclose(d.P[1], -4 * 0.25)
    expected = 4 * 0.25 * np.array([[1.0, 2.0], [2.0, 4.0]])
    for j in range(2):
        for m in range(2):
            assert np.allclose(d.E[j, m], expected[j, m], atol=1e-12)


def test_real_and_zero_fields(grid2d, rng):
    u = band_limited(grid2d, rng)
    real = Field(grid2d, u.values.real)
    assert np.max(np.abs(momentum_density(real))) < 1e-12
    d = densities(Field.zeros(grid2d))
    assert not np.any(d.M) and not np.any(d.P) and not np.any(d.E)


def test_total_mass_and_symmetry(grid2d, rng):
    u = band_limited(grid2d, rng)
    d = densities(u)
    assert d.total_mass == pytest.approx(l2_norm(u) ** 2, rel=1e-12)
    assert d.symmetry_defect() < 1e-10


def test_densities_commute_with_translation(grid2d, rng):
    u = band_limited(grid2d, rng)
    shifted = Field(grid2d, np.roll(u.values, (3, -5), axis=(0, 1)))
    a, b = densities(u), densities(shifted)
    assert np.allclose(np.roll(a.M, (3, -5), axis=(0, 1)), b.M)
    assert np.allclose(np.roll(a.P, (3, -5), axis=(1, 2)), b.P, atol=1e-12)
    assert np.allclose(np.roll(a.E, (3, -5), axis=(2, 3)), b.E, atol=1e-10)


def test_identity_metric_matches_flat_stress(grid2d, rng):
    from src.model.paradiff import MetricField

    u = band_limited(grid2d, rng)
    g = MetricField.identity(grid2d)
    d = densities(u, g)
    assert np.allclose(d.E_mixed, stress_tensor(u), atol=1e-10)
    assert np.allclose(d.P_up, d.P)
    assert np.allclose(d.E_up, d.E, atol=1e-10)


# -----------------------------
# flat flux identities
# -----------------------------
def test_flat_flux_residual_is_small(grid2d, rng):
    u0 = band_limited(grid2d, rng)
    traj = solve_flat(u0, 0.01, 1e-3)
    ledger = flat_flux_residual(traj)
    assert set(ledger.identities) == {"mass", "momentum_0", "momentum_1"}
    assert ledger.max_norm() <= 1e-6 * flux_scale(u0)


def test_flat_flux_residual_converges_at_fourth_order(grid2d, rng):
    u0 = band_limited(grid2d, rng, max_mode=2)
    coarse = flat_flux_residual(solve_flat(u0, 0.4, 0.04))
    fine = flat_flux_residual(solve_flat(u0, 0.4, 0.02))
    ratio = row_near(coarse, "mass", 0.2)["l2"] / row_near(fine, "mass", 0.2)["l2"]
    assert 3.5 < np.log2(ratio) < 4.5


def test_plane_wave_residual_vanishes(grid2d):
    traj = solve_flat(tone(grid2d, (2, -1)), 0.05, 0.01)
    assert flat_flux_residual(traj).max_norm(norm="linf") < 1e-9


def test_total_momentum_is_conserved(grid2d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 1.0, 0.1)
    p0 = densities(traj.fields[0]).total_momentum()
    p1 = densities(traj.final).total_momentum()
    assert rel_err(p1, p0) < 1e-10


def test_ledger_csv(tmp_path, grid1d, rng):
    ledger = flat_flux_residual(solve_flat(band_limited(grid1d, rng), 0.05, 0.01))
    path = ledger.to_csv(tmp_path / "ledger.csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "time,identity,l1,l2,linf,source_l2"
    assert len(lines) == 1 + len(ledger.rows)


def test_stencil_requires_five_uniform_snapshots(grid1d, rng):
    u0 = band_limited(grid1d, rng)
    with pytest.raises(StencilError):
        flat_flux_residual(solve_flat(u0, 0.2, 0.1))
    traj = Trajectory(grid=grid1d, dt=0.1, scheme="test")
    for t in (0.0, 0.1, 0.3, 0.4, 0.5):
        traj.append(t, u0)
    with pytest.raises(StencilError):
        flat_flux_residual(traj)


# -----------------------------
# paradifferential flux identities
# -----------------------------
def test_para_residual_with_zero_background_matches_flat(grid2d, rng):
    bank = DyadicFilterBank(grid2d)
    model = quasilinear_cubic_model(2)
    background = solve_flat(Field.zeros(grid2d), 0.002, 2e-4)
    v0 = band_limited(grid2d, rng, max_mode=6)
    traj = solve_paradifferential(background, v0, None, 3, 0.002, 2e-4, model=model, bank=bank)
    ledger = para_flux_residual(traj, background, model, 3, bank=bank)
    assert {"mass", "momentum_0", "momentum_cov_0"} <= set(ledger.identities)
    scale = flux_scale(traj.fields[0])
    assert ledger.max_norm() <= 1e-6 * scale
    assert ledger.max_norm(norm="source_l2") == pytest.approx(0.0, abs=1e-12)


def test_para_residual_with_small_background(rng):
    grid = BoxGrid(dim=2, points_per_axis=64, box_length=2 * np.pi)
    bank = DyadicFilterBank(grid)
    model = quasilinear_cubic_model(2)
    u0 = band_limited(grid, rng, max_mode=2, amplitude=0.05)
    background = solve_qnls(model, u0, 0.002, 1e-4)
    v0 = band_limited(grid, rng, max_mode=14)
    traj = solve_paradifferential(background, v0, None, 4, 0.002, 1e-4, model=model, bank=bank)
    ledger = para_flux_residual(traj, background, model, 4, bank=bank)
    scale = flux_scale(traj.fields[0])
    assert ledger.max_norm("mass") <= 1e-5 * scale
    assert ledger.max_momentum("momentum_cov_") <= 1e-3 * scale * grid.xi_max


def test_para_residual_accounts_for_forcing(grid2d, rng):
    bank = DyadicFilterBank(grid2d)
    model = quasilinear_cubic_model(2)
    background = solve_flat(Field.zeros(grid2d), 0.002, 2e-4)
    w = band_limited(grid2d, rng, max_mode=5)
    v0 = band_limited(grid2d, rng, max_mode=5)
    traj = solve_paradifferential(background, v0, lambda t: w, 3, 0.002, 2e-4, model=model, bank=bank)
    ledger = para_flux_residual(traj, background, model, 3, lambda t: w, bank=bank)
    assert ledger.max_norm("mass") <= 1e-6 * flux_scale(traj.fields[0])


# -----------------------------
# weighted mass
# -----------------------------
def test_unit_weight_reduces_to_plain_densities(grid2d, rng):
    u = band_limited(grid2d, rng)
    w = weighted_mass(u, unit_symbol())
    d = densities(u)
    assert np.allclose(w.M, d.M, atol=1e-12)
    assert np.allclose(w.P, d.P, atol=1e-10)
    assert np.allclose(w.E, d.E, atol=1e-9)


def test_shell_weight_is_projected_mass(grid2d, rng):
    bank = DyadicFilterBank(grid2d)
    u = band_limited(grid2d, rng, max_mode=8)
    w = weighted_mass(u, shell_symbol_pair(bank, 3))
    assert np.allclose(w.M, mass_density(bank.project(u, 3)), atol=1e-12)


def test_non_hermitian_symbol_is_rejected(grid2d, rng):
    lopsided = BilinearSymbol((SeparableTerm(1.0, (xi_component(0), one())),), name="xi_0")
    with pytest.raises(SymbolError):
        weighted_mass(band_limited(grid2d, rng), lopsided)


def test_weighted_flux_residual_is_small(grid2d, rng):
    bank = DyadicFilterBank(grid2d)
    u0 = band_limited(grid2d, rng, max_mode=5)
    traj = solve_flat(u0, 0.004, 5e-4)
    ledger = weighted_flux_residual(traj, shell_symbol_pair(bank, 3))
    assert ledger.max_norm() <= 1e-6 * flux_scale(u0)

from __future__ import annotations

import math

import numpy as np
import pytest

from src.common.errors import ConfigError, InadmissiblePairError, ShellRangeError
from src.evolution.solvers import solve_flat, solve_qnls
from src.evolution.trajectory import Trajectory
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.spec import semilinear_cubic_model
from src.norms.fits import loglog_fit, transversality_scaling_fit
from src.norms.meters import (
    NormLedger,
    bilinear_l2,
    d_lambda,
    is_admissible,
    lebesgue_norm,
    sobolev_profile,
    strichartz_norm,
    stride_sensitivity,
)
from src.norms.scattering import ScatteringProbe, scattering_extract
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import hs_norm, l2_norm, translate
from tests.helpers import band_limited


def tone(grid: BoxGrid, m, amplitude: float = 1.0) -> Field:
    phase = sum(grid.dk * mi * x for mi, x in zip(m, grid.coordinates))
    return Field(grid, amplitude * np.exp(1j * phase) * np.ones(grid.shape))


def mapped(traj: Trajectory, fn) -> Trajectory:
    out = Trajectory(grid=traj.grid, dt=traj.dt, scheme=traj.scheme)
    for t, f in traj.items():
        out.append(t, fn(f))
    return out


# -----------------------------
# Strichartz meters
# -----------------------------
def test_admissibility_relation():
    assert is_admissible(2, 4, 4)
    assert is_admissible(3, 2, 6)
    assert is_admissible(2, math.inf, 2)
    assert not is_admissible(2, 2, math.inf)
    assert not is_admissible(2, 3, 3)


def test_plane_wave_norm(grid2d):
    traj = solve_flat(tone(grid2d, (1, 2), amplitude=0.5), 2.0, 0.1)
    expected = 0.5 * grid2d.volume ** 0.25 * 2.0 ** 0.25
    assert strichartz_norm(traj, 4, 4) == pytest.approx(expected, rel=1e-12)


def test_energy_norm_is_conserved(grid2d, rng):
    u0 = band_limited(grid2d, rng)
    traj = solve_flat(u0, 1.0, 0.05)
    assert strichartz_norm(traj, math.inf, 2) == pytest.approx(l2_norm(u0), rel=1e-12)


def test_l4_matches_brute_force(rng):
    grid = BoxGrid(dim=2, points_per_axis=8, box_length=2 * np.pi)
    traj = solve_flat(band_limited(grid, rng, max_mode=2), 0.5, 0.05)
    v = traj.values_array()
    per_time = grid.cell_volume * np.sum(np.abs(v) ** 4, axis=(1, 2))
    t = np.asarray(traj.times)
    brute = np.sum(0.5 * (per_time[1:] + per_time[:-1]) * np.diff(t)) ** 0.25
    assert strichartz_norm(traj, 4, 4) == pytest.approx(brute, rel=1e-12)


def test_inadmissible_pairs(grid2d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 0.2, 0.1)
    with pytest.raises(InadmissiblePairError):
        strichartz_norm(traj, 3, 3)
    with pytest.raises(InadmissiblePairError):
        strichartz_norm(traj, 2, math.inf)
    assert strichartz_norm(traj, 3, 3, allow_nonsharp=True) == pytest.approx(lebesgue_norm(traj, 3, 3))


def test_meters_are_homogeneous(grid2d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 0.3, 0.1)
    scaled = mapped(traj, lambda f: f * (-3.0))
    assert lebesgue_norm(scaled, 4, 4) == pytest.approx(3 * lebesgue_norm(traj, 4, 4), rel=1e-12)
    assert bilinear_l2(scaled, 2, scaled, 2) == pytest.approx(9 * bilinear_l2(traj, 2, traj, 2), rel=1e-12)


def test_sobolev_profile_and_stride(grid2d, rng):
    u0 = band_limited(grid2d, rng)
    traj = solve_flat(u0, 1.0, 0.1)
    profile = sobolev_profile(traj, 1.0)
    assert profile.shape == (len(traj),)
    assert np.allclose(profile, hs_norm(u0, 1.0), rtol=1e-12)
    report = stride_sensitivity(lambda tr: lebesgue_norm(tr, 4, 4), traj)
    assert set(report) == {"value", "double_stride", "relative_change"}


# -----------------------------
# bilinear meter
# -----------------------------
def test_bilinear_with_vanishing_factor(grid2d, rng):
    u = solve_flat(band_limited(grid2d, rng), 0.2, 0.1)
    zero = solve_flat(Field.zeros(grid2d), 0.2, 0.1)
    assert bilinear_l2(u, 2, zero, 3) == 0.0


def test_diagonal_bilinear_is_l4_squared(grid2d, rng):
    bank = DyadicFilterBank(grid2d)
    traj = solve_flat(band_limited(grid2d, rng, max_mode=6), 0.3, 0.05)
    shell = mapped(traj, lambda f: bank.project(f, 2))
    assert bilinear_l2(traj, 2, traj, 2, bank=bank) == pytest.approx(lebesgue_norm(shell, 4, 4) ** 2, rel=1e-10)


def test_bilinear_translation_covariance(grid2d, rng):
    x0 = [0.7, -1.3]
    u = solve_flat(band_limited(grid2d, rng, max_mode=6), 0.3, 0.05)
    v = solve_flat(band_limited(grid2d, rng, max_mode=6), 0.3, 0.05)
    moved = mapped(v, lambda f: translate(f, x0))
    assert bilinear_l2(u, 2, v, 3, x0) == pytest.approx(bilinear_l2(u, 2, moved, 3), rel=1e-10)


def test_bilinear_fractional_exponent(grid2d, grid3d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 0.2, 0.1)
    assert bilinear_l2(traj, 2, traj, 2, exponent=0.5) > 0
    with pytest.raises(ConfigError):
        bilinear_l2(traj, 2, traj, 2, exponent=1.0)
    t3 = solve_flat(band_limited(grid3d, rng), 0.2, 0.1)
    assert bilinear_l2(t3, 2, t3, 2, exponent=0.0) > 0


# -----------------------------
# d_λ
# -----------------------------
def test_d_lambda_without_forcing(grid2d, rng):
    bank = DyadicFilterBank(grid2d)
    u0 = band_limited(grid2d, rng, max_mode=8)
    family = {k: solve_flat(bank.project(u0, k), 0.2, 0.1) for k in (2, 3, 4)}
    zeros = {k: solve_flat(Field.zeros(grid2d), 0.2, 0.1) for k in (2, 3, 4)}
    expected = max(l2_norm(t.fields[0]) for t in family.values())
    assert d_lambda(family, zeros, 3, shifts_per_axis=2) == pytest.approx(expected, rel=1e-12)


def test_d_lambda_self_pairing_and_homogeneity(grid2d, rng):
    T = 0.5
    v = solve_flat(band_limited(grid2d, rng), T, 0.05)
    m0 = l2_norm(v.fields[0]) ** 2
    d = d_lambda({3: v}, {3: v}, 3, shifts_per_axis=4)
    assert d**2 == pytest.approx(m0 + T * m0, rel=1e-10)
    doubled = d_lambda({3: v}, {3: mapped(v, lambda f: f * 2.0)}, 3, shifts_per_axis=4)
    assert doubled**2 - m0 == pytest.approx(2 * (d**2 - m0), rel=1e-10)


def test_d_lambda_empty_family(grid2d):
    with pytest.raises(ConfigError):
        d_lambda({}, {}, 3)


# -----------------------------
# scaling fits
# -----------------------------
def test_loglog_fit_recovers_exact_power():
    x = [2.0, 4.0, 8.0, 16.0]
    fit = loglog_fit(x, [3.0 * v**-0.5 for v in x])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.halfwidth < 1e-8
    with pytest.raises(ShellRangeError):
        loglog_fit([2.0, 4.0], [1.0, 2.0])


def test_transversality_exponents_in_two_dimensions():
    fit = transversality_scaling_fit(2, seed=7)
    assert fit.high.slope == pytest.approx(-0.5, abs=0.15)
    assert fit.low.slope == pytest.approx(0.5, abs=0.15)
    again = transversality_scaling_fit(2, seed=7)
    assert again.to_dict() == fit.to_dict()


def test_transversality_needs_three_points():
    with pytest.raises(ShellRangeError):
        transversality_scaling_fit(2, high=(16, 32))


# -----------------------------
# scattering probe
# -----------------------------
def test_flat_flow_has_no_scattering_increments(grid2d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 1.5, 0.25)
    probe = scattering_extract(traj, [0.5, 1.0, 1.5])
    assert max(probe.increments) < 1e-12
    assert np.allclose(probe.candidate.values, traj.fields[0].values, atol=1e-12)


def test_scattering_needs_three_probes(grid2d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 1.0, 0.25)
    with pytest.raises(ConfigError):
        scattering_extract(traj, [0.5, 1.0])


def test_first_increment_is_cubic_in_amplitude():
    grid = BoxGrid(dim=2, points_per_axis=16, box_length=2 * np.pi)
    model = semilinear_cubic_model(2)
    base = band_limited(grid, np.random.default_rng(3), max_mode=2)
    eps = [0.1, 0.05, 0.025]
    first = []
    for e in eps:
        traj = solve_qnls(model, base * e, 1.5, 0.125)
        first.append(scattering_extract(traj, [0.5, 1.0, 1.5]).increments[0])
    assert loglog_fit(eps, first).slope >= 2.5


# -----------------------------
# ledger
# -----------------------------
def test_norm_ledger(tmp_path, grid2d, rng):
    traj = solve_flat(band_limited(grid2d, rng), 0.2, 0.1)
    ledger = NormLedger()
    ledger.add("L4L4", strichartz_norm(traj, 4, 4), traj)
    ledger.add("bilinear", bilinear_l2(traj, 2, traj, 3, [0.5, 0.0]), traj, shell_u=2, shell_v=3, shift=[0.5, 0.0])
    with pytest.raises(ValueError):
        ledger.add("bad", -1.0, traj)
    with pytest.raises(ValueError):
        ledger.add("late", 1.0, traj, window=(0.0, 5.0))
    assert ledger.to_csv(tmp_path / "norms.csv").read_text().splitlines()[0] == "norm,shell_u,shell_v,shift,value,t_start,t_end"
    assert ledger.to_json(tmp_path / "n.json").exists()
    assert len(ledger.get("bilinear")) == 1


def test_min_decrease_is_the_smallest_step_ratio(grid2d, rng):
    probe = ScatteringProbe(times=[1.0, 2.0, 3.0, 4.0], candidate=Field.zeros(grid2d), increments=[0.9, 0.3, 0.12], s=1.0)
    assert probe.ratios == pytest.approx([3.0, 2.5])
    assert probe.min_decrease == pytest.approx(2.5)
    assert probe.monotone

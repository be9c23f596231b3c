from __future__ import annotations

import math

import numpy as np
import pytest

from src.common.errors import BudgetError, ConfigError, StencilError
from src.conservation.densities import derivatives
from src.conservation.residuals import ParaSetting
from src.evolution.solvers import solve_flat, solve_paradifferential
from src.littlewood_paley.filter_bank import DyadicFilterBank
from src.model.spec import quasilinear_cubic_model
from src.morawetz.functionals import (
    calibrate_cn,
    closed_form_cn,
    fractional_mass_norm,
    hessian_pair_sum,
    im_clean,
    im_clean_grid,
    interaction_functional,
    j4,
    j4_closed_form_quadratic,
    j4_main,
    morawetz_identity_residual,
    rhs_pad,
)
from src.morawetz.weights import LATTICE_ZETA, RadialProfile, WeightSpec, register_weight
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import l2_norm
from tests.helpers import band_limited, gaussian

QUADRATIC = WeightSpec("quadratic")
ABS_LATTICE = WeightSpec("abs", diagonal="lattice")


@pytest.fixture
def grid16() -> BoxGrid:
    return BoxGrid(dim=2, points_per_axis=16, box_length=2 * np.pi)


def bump_pair(grid: BoxGrid, rng: np.random.Generator, width: float = 0.7):
    """Two localized complex fields inside the central half-box."""
    fields = []
    for _ in range(2):
        a = gaussian(grid, width=width, center=grid.center + rng.uniform(-0.2, 0.2, grid.dim), xi0=rng.uniform(-2, 2, grid.dim))
        b = gaussian(grid, width=width, center=grid.center + rng.uniform(-0.2, 0.2, grid.dim), xi0=rng.uniform(-2, 2, grid.dim))
        fields.append(a + b * complex(rng.standard_normal(), rng.standard_normal()) * 0.5)
    return fields


# -----------------------------
# weights
# -----------------------------
def test_abs_hessian_matches_closed_form(rng):
    z = rng.uniform(-3, 3, (3, 200))
    r = np.linalg.norm(z, axis=0)
    zhat = z / r
    expected = (np.eye(3)[:, :, None] - zhat[:, None] * zhat[None, :]) / r
    assert np.max(np.abs(WeightSpec("abs").hessian(z) - expected)) < 1e-12


@pytest.mark.parametrize("kind", ["abs", "quadratic", "bracket"])
def test_builtin_weights_are_convex(kind):
    assert WeightSpec(kind).check_convex(2) >= -1e-12
    assert WeightSpec(kind).check_convex(3) >= -1e-12


def test_concave_weight_is_rejected():
    register_weight(
        RadialProfile(
            "concave-bowl",
            dphi=lambda r: -2.0 * r,
            d2phi=lambda r: np.full_like(r, -2.0),
            dphi_over_r=lambda r: np.full_like(r, -2.0),
        )
    )
    with pytest.raises(ConfigError):
        WeightSpec("concave-bowl").check_convex(2)


def test_weight_configuration_errors():
    with pytest.raises(ConfigError):
        WeightSpec("cosine")
    with pytest.raises(ConfigError):
        WeightSpec("abs", diagonal="average")
    assert WeightSpec("quadratic").minimal_image is False
    assert WeightSpec("abs").minimal_image is True


def test_diagonal_rules(grid16):
    z = np.zeros((2, 1))
    assert not np.any(WeightSpec("abs").hessian(z, grid16))
    h = ABS_LATTICE.hessian(z, grid16)[:, :, 0]
    assert np.allclose(h, 0.5 * -LATTICE_ZETA[2] / grid16.dx * np.eye(2))
    assert np.allclose(WeightSpec("bracket").hessian(z)[:, :, 0], np.eye(2))


def test_minimal_image_displacement(grid16):
    w = WeightSpec("abs")
    x = np.array([[0.1], [0.0]])
    y = np.array([[2 * np.pi - 0.1], [0.0]])
    assert w.displacement(grid16, x, y)[0, 0, 0] == pytest.approx(0.2)
    assert QUADRATIC.displacement(grid16, x, y)[0, 0, 0] == pytest.approx(0.2 - 2 * np.pi)


# -----------------------------
# interaction functional and J4
# -----------------------------
def test_real_fields_have_zero_interaction(grid16, rng):
    u, v = bump_pair(grid16, rng)
    real_u, real_v = Field(grid16, u.values.real), Field(grid16, v.values.real)
    assert abs(interaction_functional(real_u, real_v)) < 1e-10


def test_interaction_is_symmetric_and_quadratic(grid16, rng):
    u, v = bump_pair(grid16, rng)
    i_uv = interaction_functional(u, v)
    assert interaction_functional(v, u) == pytest.approx(i_uv, rel=1e-6, abs=1e-10)
    assert interaction_functional(u * 2.0, v) == pytest.approx(4 * i_uv, rel=1e-10, abs=1e-12)


def test_quadratic_weight_closed_form(grid16, rng):
    u, v = band_limited(grid16, rng), band_limited(grid16, rng)
    exact = j4_closed_form_quadratic(u, v)
    assert j4_main(u, v, w=QUADRATIC) == pytest.approx(exact, rel=1e-8)
    assert j4(u, v, w=QUADRATIC) == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("weight", [WeightSpec("abs"), ABS_LATTICE, WeightSpec("bracket")])
def test_j4_forms_agree(rng, weight):
    grid = BoxGrid(dim=2, points_per_axis=32, box_length=2 * np.pi)
    u, v = bump_pair(grid, rng)
    main = j4_main(u, v, w=weight)
    assert j4(u, v, w=weight) == pytest.approx(main, rel=1e-8, abs=1e-10)


def test_j4_main_is_nonnegative(grid16, rng):
    for _ in range(20):
        u, v = band_limited(grid16, rng), band_limited(grid16, rng)
        for weight in (WeightSpec("abs"), WeightSpec("bracket")):
            assert j4_main(u, v, w=weight) >= -1e-10


def test_j4_dominates_the_fractional_term(rng):
    grid = BoxGrid(dim=2, points_per_axis=32, box_length=2 * np.pi)
    for _ in range(5):
        u, _ = bump_pair(grid, rng)
        diag = j4_main(u, u, w=ABS_LATTICE)
        lhs = im_clean(u, ABS_LATTICE).lhs
        assert lhs > 0
        assert diag - lhs >= -1e-10 * diag


def test_double_quadrature_budget(rng):
    grid = BoxGrid(dim=2, points_per_axis=64, box_length=2 * np.pi)
    u = band_limited(grid, rng)
    with pytest.raises(BudgetError):
        interaction_functional(u, u)


# -----------------------------
# fractional-norm identity
# -----------------------------
def test_closed_form_constants():
    assert closed_form_cn(1) == pytest.approx(2.0)
    assert closed_form_cn(2) == pytest.approx(2 * math.pi)
    assert closed_form_cn(3) == pytest.approx(8 * math.pi)


def test_im_clean_is_homogeneous_of_degree_four(grid16):
    u = gaussian(grid16, width=0.6)
    a, b = im_clean(u, ABS_LATTICE), im_clean(u * 2.0, ABS_LATTICE)
    assert b.lhs == pytest.approx(16 * a.lhs, rel=1e-12)
    assert b.rhs == pytest.approx(16 * a.rhs, rel=1e-12)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)


def test_three_dimensional_rhs_is_plain_l2(grid3d):
    u = gaussian(grid3d, width=0.7)
    m = Field(grid3d, np.abs(u.values) ** 2)
    assert fractional_mass_norm(u) == pytest.approx(l2_norm(m) ** 2, rel=1e-12)


def test_im_clean_ratio_is_universal():
    grid = BoxGrid(dim=2, points_per_axis=256, box_length=2 * np.pi)
    one = gaussian(grid, width=0.7)
    two = gaussian(grid, width=0.6, center=grid.center + [0.3, 0.0]) + gaussian(
        grid, width=0.6, center=grid.center - [0.0, 0.3], xi0=[1.0, 0.0]
    )
    r1, r2 = im_clean(one, ABS_LATTICE).ratio, im_clean(two, ABS_LATTICE).ratio
    assert r1 == pytest.approx(r2, rel=1e-3)
    assert r1 == pytest.approx(2 * math.pi, rel=1e-3)


def test_im_clean_rejects_other_weights(grid16):
    with pytest.raises(ConfigError):
        im_clean(gaussian(grid16, width=0.6), QUADRATIC)


def test_convolution_pair_sum_matches_direct_double_sum(grid16, rng):
    u, _ = bump_pair(grid16, rng)
    D = derivatives(np.abs(u.values) ** 2, grid16).real
    N = grid16.points_per_axis
    idx = np.indices(grid16.shape).reshape(2, -1)
    # index offsets wrapped to [-N/2, N/2), the half-box tie on the negative side
    z = ((idx[:, :, None] - idx[:, None, :] + N // 2) % N - N // 2) * grid16.dx
    H = ABS_LATTICE.hessian(z, grid16)
    flat = D.reshape(2, -1)
    direct = float(np.einsum("jmxy,jx,my->", H, flat, flat)) * grid16.cell_volume**2
    assert hessian_pair_sum(grid16, ABS_LATTICE, D) == pytest.approx(direct, rel=1e-10)
    assert im_clean(u, ABS_LATTICE).lhs == pytest.approx(direct, rel=1e-10)
    with pytest.raises(ConfigError):
        hessian_pair_sum(grid16, WeightSpec("abs", minimal_image=False), D)


def test_rhs_padding_respects_the_point_budget():
    assert rhs_pad(BoxGrid(dim=1, points_per_axis=1024, box_length=2 * np.pi)) == 8
    assert rhs_pad(BoxGrid(dim=2, points_per_axis=256, box_length=2 * np.pi)) == 4
    assert rhs_pad(BoxGrid(dim=3, points_per_axis=64, box_length=2 * np.pi)) == 2
    assert rhs_pad(BoxGrid(dim=2, points_per_axis=64, box_length=2 * np.pi, point_budget=64**2)) == 1
    assert im_clean_grid(BoxGrid(dim=2, points_per_axis=32, box_length=2 * np.pi)).points_per_axis == 256
    assert im_clean_grid(BoxGrid(dim=3, points_per_axis=16, box_length=3.0), 32).box_length == 3.0


def test_calibrated_constant_in_two_dimensions():
    cal = calibrate_cn(2)
    assert cal.closed_form == pytest.approx(2 * math.pi)
    assert len(cal.ratios) == 3
    assert cal.value == pytest.approx(2 * math.pi, rel=1e-3)
    assert np.isfinite(cal.error)


# -----------------------------
# identity along trajectories
# -----------------------------
def test_flat_morawetz_identity(tmp_path, rng):
    grid = BoxGrid(dim=2, points_per_axis=32, box_length=2 * np.pi)
    u0 = gaussian(grid, width=0.6, xi0=[1.0, -1.0])
    v0 = gaussian(grid, width=0.6, center=grid.center + [0.3, 0.0], xi0=[-1.0, 0.5])
    u, v = solve_flat(u0, 0.01, 1e-3), solve_flat(v0, 0.01, 1e-3)
    ledger = morawetz_identity_residual(u, v, QUADRATIC)
    assert len(ledger.rows) == len(u) - 4
    assert ledger.max_relative_residual() <= 1e-6
    assert all(r["K"] == 0.0 for r in ledger.rows)
    lines = ledger.to_csv(tmp_path / "morawetz.csv").read_text().splitlines()
    assert lines[0] == "time,I,J4,K,residual"


def test_stationary_plane_waves(grid16):
    phase = sum(mi * x for mi, x in zip((1, 2), grid16.coordinates))
    tone = Field(grid16, np.exp(1j * phase) * np.ones(grid16.shape))
    traj = solve_flat(tone, 0.05, 0.01)
    ledger = morawetz_identity_residual(traj, traj, QUADRATIC)
    assert ledger.max_residual() <= 1e-8


def test_paradifferential_identity_with_zero_background(rng):
    grid = BoxGrid(dim=2, points_per_axis=32, box_length=2 * np.pi)
    bank = DyadicFilterBank(grid)
    model = quasilinear_cubic_model(2)
    background = solve_flat(Field.zeros(grid), 0.01, 1e-3)
    u = solve_paradifferential(background, gaussian(grid, width=0.6, xi0=[6.0, 0.0]), None, 3, 0.01, 1e-3, model=model, bank=bank)
    v = solve_paradifferential(background, gaussian(grid, width=0.6, xi0=[0.0, -6.0]), None, 3, 0.01, 1e-3, model=model, bank=bank)
    setting = ParaSetting(background, model, 3, bank=bank)
    ledger = morawetz_identity_residual(u, v, QUADRATIC, para_u=setting, para_v=setting)
    scale = max(max(abs(r["J4"]) for r in ledger.rows), 1.0)
    assert max(abs(r["K"]) for r in ledger.rows) <= 1e-9 * scale
    assert ledger.max_relative_residual() <= 1e-6


def test_identity_needs_five_snapshots(grid16):
    traj = solve_flat(gaussian(grid16, width=0.6), 0.2, 0.1)
    with pytest.raises(StencilError):
        morawetz_identity_residual(traj, traj, QUADRATIC)

from __future__ import annotations

import numpy as np
import pytest

from src.common.errors import BudgetError, GridMismatchError, SnapshotFormatError, SupportCheckError
from src.spectral.grid import BoxGrid, Field
from src.spectral.operators import (
    check_support,
    differentiate,
    flat_propagator,
    fractional_multiplier,
    hs_norm,
    inner,
    l2_norm,
    mass_fraction_in_central_half_box,
    product,
    to_physical,
    to_spectral,
    translate,
)
from src.spectral.snapshot import MAGIC, decode_snapshot, encode_snapshot, read_snapshot, write_snapshot
from tests.helpers import band_limited, gaussian, nyquist_free, rel_err


def plane_wave(grid: BoxGrid, m) -> Field:
    phase = sum(grid.dk * mi * x for mi, x in zip(m, grid.coordinates))
    return Field(grid, np.exp(1j * phase) * np.ones(grid.shape))


def test_grid_validation():
    with pytest.raises(ValueError):
        BoxGrid(dim=1, points_per_axis=12, box_length=1.0)
    with pytest.raises(ValueError):
        BoxGrid(dim=1, points_per_axis=4, box_length=1.0)
    with pytest.raises(BudgetError):
        BoxGrid(dim=3, points_per_axis=256, box_length=1.0)
    g = BoxGrid(dim=2, points_per_axis=16, box_length=3.0)
    assert g.shape == (16, 16)
    assert g.lattice_index_1d[8] == 0


def test_wavenumbers_symmetric(grid2d):
    k = grid2d.dk * grid2d.lattice_index_1d
    assert sorted(k.tolist()) == sorted((-k).tolist())


def test_constant_field_is_zero_mode(grid2d):
    F = to_spectral(Field(grid2d, np.ones(grid2d.shape)))
    expected = np.zeros(grid2d.shape)
    expected[0, 0] = 1.0
    assert np.max(np.abs(F.coefficients - expected)) < 1e-14


def test_plane_wave_single_coefficient(grid2d):
    F = to_spectral(plane_wave(grid2d, (2, -1)))
    expected = np.zeros(grid2d.shape)
    expected[2, grid2d.points_per_axis - 1] = 1.0
    assert np.max(np.abs(F.coefficients - expected)) < 1e-13


def test_round_trip_and_plancherel(grid2d, rng):
    for _ in range(100):
        vals = rng.standard_normal(grid2d.shape) + 1j * rng.standard_normal(grid2d.shape)
        f = Field(grid2d, vals)
        F = to_spectral(f)
        assert rel_err(to_physical(F).values, vals) < 1e-12
        assert abs(F.l2_norm() - l2_norm(f)) <= 1e-12 * l2_norm(f)


def test_grid_mismatch_rejected(grid1d, grid2d):
    with pytest.raises(GridMismatchError):
        Field(grid2d, np.zeros(grid1d.shape))
    with pytest.raises(GridMismatchError):
        inner(Field.zeros(grid1d), Field.zeros(BoxGrid(dim=1, points_per_axis=32, box_length=1.0)))


def test_field_values_are_read_only(grid1d):
    f = Field.zeros(grid1d)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_differentiate_plane_wave_and_constant(grid2d):
    w = plane_wave(grid2d, (3, 1))
    d = differentiate(w, 0)
    assert rel_err(d.values, 1j * 3 * grid2d.dk * w.values) < 1e-12
    c = differentiate(Field(grid2d, 2.5 * np.ones(grid2d.shape)), 1)
    assert np.max(np.abs(c.values)) < 1e-14


def test_differentiate_sine_matches_cosine(grid1d):
    L = grid1d.box_length
    (x,) = grid1d.coordinates
    f = Field(grid1d, np.sin(2 * np.pi * x / L))
    d = differentiate(f, 0)
    assert np.max(np.abs(d.values - (2 * np.pi / L) * np.cos(2 * np.pi * x / L))) < 1e-12


def test_fractional_multiplier(grid2d):
    w = plane_wave(grid2d, (2, 2))
    out = fractional_multiplier(w, 2.0)
    assert rel_err(out.values, 8.0 * w.values) < 1e-12

    mean_zero = Field(grid2d, w.values + plane_wave(grid2d, (1, 0)).values)
    assert rel_err(fractional_multiplier(mean_zero, 0.0).values, mean_zero.values) < 1e-14

    bump = gaussian(grid2d, width=0.6)
    half = fractional_multiplier(bump, 0.5)
    quarter_twice = fractional_multiplier(fractional_multiplier(bump, 0.25), 0.25)
    assert rel_err(quarter_twice.values, half.values) < 1e-10

    with pytest.raises(ValueError):
        fractional_multiplier(bump, -2.0)


def test_flat_propagator(grid2d, rng):
    f = band_limited(grid2d, rng, max_mode=8)
    assert flat_propagator(f, 0.0) is f
    assert abs(l2_norm(flat_propagator(f, 1.7)) - l2_norm(f)) < 1e-12 * l2_norm(f)

    w = plane_wave(grid2d, (1, 2))
    out = flat_propagator(w, 0.3)
    assert rel_err(out.values, np.exp(-1j * 0.3 * 5.0) * w.values) < 1e-12

    a = flat_propagator(flat_propagator(f, 0.4), 0.9)
    b = flat_propagator(f, 1.3)
    assert rel_err(a.values, b.values) < 1e-12


def test_multipliers_commute(grid2d, rng):
    f = band_limited(grid2d, rng, max_mode=6)
    a = differentiate(flat_propagator(f, 0.7), 1)
    b = flat_propagator(differentiate(f, 1), 0.7)
    assert rel_err(a.values, b.values) < 1e-12
    c = differentiate(translate(f, (0.3, -1.1)), 0)
    d = translate(differentiate(f, 0), (0.3, -1.1))
    assert rel_err(c.values, d.values) < 1e-12


def test_translate_lattice_shift_is_roll(grid2d):
    bump = nyquist_free(gaussian(grid2d, width=3 * grid2d.dx))
    shift = (3, -5)
    out = translate(bump, (shift[0] * grid2d.dx, shift[1] * grid2d.dx))
    rolled = np.roll(bump.values, shift, axis=(0, 1))
    assert np.max(np.abs(out.values - rolled)) < 1e-12


def test_translate_inverse(grid2d, rng):
    f = band_limited(grid2d, rng)
    x0 = (0.37, 1.91)
    back = translate(translate(f, x0), (-x0[0], -x0[1]))
    assert rel_err(back.values, f.values) < 1e-12
    assert rel_err(translate(f, (0.0, 0.0)).values, f.values) < 1e-14


def test_hs_norm_at_zero_is_l2(grid2d, rng):
    f = band_limited(grid2d, rng)
    assert abs(hs_norm(f, 0.0) - l2_norm(f)) < 1e-12 * l2_norm(f)
    assert hs_norm(f, 1.0) > hs_norm(f, 0.0)


def test_product_of_dealiased_factors(grid1d):
    a = plane_wave(grid1d, (3,))
    b = plane_wave(grid1d, (4,))
    out = product(a, b)
    assert rel_err(out.values, plane_wave(grid1d, (7,)).values) < 1e-12
    high = plane_wave(grid1d, (30,))
    assert np.max(np.abs(product(high, a).values)) < 1e-14


def test_support_check():
    grid = BoxGrid(dim=2, points_per_axis=64, box_length=40.0)
    centered = gaussian(grid, width=2.0)
    assert mass_fraction_in_central_half_box(centered) > 0.999
    assert check_support(centered, strict=True) > 0.999
    edge = gaussian(grid, width=2.0, center=(2.0, 20.0))
    with pytest.raises(SupportCheckError):
        check_support(edge, strict=True)
    assert check_support(edge) < 0.999


def test_snapshot_file(tmp_path, grid2d, rng):
    f = band_limited(grid2d, rng)
    path = write_snapshot(tmp_path / "s.qnls", f, 1.25)
    g, t = read_snapshot(path)
    assert t == 1.25
    assert g.grid == grid2d
    assert np.array_equal(g.values, f.values)
    raw = path.read_bytes()
    assert raw[:5] == MAGIC
    assert len(raw) == 5 + 1 + 4 + 8 + 8 + 16 * grid2d.size


def test_snapshot_rejects_garbage(grid1d):
    data = encode_snapshot(Field.zeros(grid1d), 0.0)
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(b"XXXXX" + data[5:])
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(data[:-16])

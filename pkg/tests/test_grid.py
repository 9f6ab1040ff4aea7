"""Grid, dyadic cube indexing, boxes, interpolation, and field files."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomlab._errors import BoundsError
from atomlab.grid import (
    DyadicCube,
    Grid,
    SampledField,
    box_from_center,
    box_mask,
    box_within,
    cube,
    cube_geometry,
    cube_node_mask,
    dilated_profile,
    evaluate_offgrid,
    read_field,
    torus_centered,
    trig_eval_tensor,
    write_field,
)

from conftest import random_trig


class TestGrid:
    def test_node_spacing(self, grid10):
        assert grid10.size == 1024
        assert grid10.h == pytest.approx(1.0 / 1024)
        assert grid10.axis[0] == 0.0
        assert np.allclose(np.diff(grid10.axis), grid10.h)

    def test_dimension_gate(self):
        with pytest.raises(BoundsError):
            Grid(3, 8)

    def test_level_gates(self):
        with pytest.raises(BoundsError):
            Grid(1, 2)
        with pytest.raises(BoundsError):
            Grid(1, 99)

    def test_bad_period(self):
        with pytest.raises(BoundsError):
            Grid(1, 8, 0.0)


class TestTorusCentered:
    def test_half_open_window(self):
        x = np.array([0.0, 0.25, 0.5, 0.75, 0.99])
        c = torus_centered(x, 1.0)
        assert np.all(c >= -0.5) and np.all(c < 0.5)
        assert c[1] == 0.25 and c[3] == -0.25

    @given(st.floats(-10, 10), st.floats(0.5, 4.0))
    @settings(max_examples=50, deadline=None)
    def test_representative_property(self, x, period):
        c = float(torus_centered(np.array([x]), period)[0])
        assert -period / 2 - 1e-12 <= c < period / 2 + 1e-12
        assert abs((x - c) % period) < 1e-9 or abs((x - c) % period - period) < 1e-9


class TestDyadicCube:
    def test_index_normalization(self):
        assert cube(3, 11).m == (3,)
        assert cube(3, (-1,)).m == (7,)

    def test_overlap_gate(self):
        with pytest.raises(BoundsError):
            DyadicCube(2, (0,), 0.5)

    def test_geometry_level0(self, grid10):
        geo = cube_geometry(cube(0, 0), grid10)
        assert geo.center == (0.0,)

    def test_geometry_center_on_lattice(self, grid10):
        geo = cube_geometry(cube(3, 2), grid10)
        assert geo.center[0] == pytest.approx(2 / 8)

    def test_node_mask_counts_d1(self, grid10):
        mask = cube_node_mask(grid10, cube(2, 1))
        assert mask.sum() == grid10.size // 4

    def test_node_mask_partition(self, grid10):
        total = np.zeros(grid10.shape, dtype=int)
        for m in range(8):
            total += cube_node_mask(grid10, cube(3, m)).astype(int)
        assert np.all(total == 1)

    def test_node_mask_overlap_symmetric(self, grid10):
        # a d=2 cube at level 2 covers double width, centered on the tile
        mask = cube_node_mask(grid10, cube(2, 1, 2.0))
        idx = np.where(mask)[0]
        center = grid10.size // 4
        offs = ((idx - center + grid10.size // 2) % grid10.size) - grid10.size // 2
        width = grid10.size // 4
        assert offs.min() >= -width - 1 and offs.max() <= width + 1
        assert mask.sum() >= 2 * width

    @given(st.integers(1, 5), st.integers(-40, 40))
    @settings(max_examples=40, deadline=None)
    def test_mask_inside_box(self, nu, m):
        grid = Grid(1, 8, 1.0)
        c = cube(nu, m, 1.5)
        mask = cube_node_mask(grid, c)
        inside = box_mask(grid, cube_geometry(c, grid).support_box)
        assert np.all(~mask | inside)


class TestBoxes:
    def test_wrap_encoding(self, grid10):
        box = box_from_center((0.0,), (0.1,), grid10)
        lo, hi = box[0]
        assert lo > hi  # wrapped interval

    def test_full_axis(self, grid10):
        assert box_from_center((0.3,), (0.6,), grid10)[0] == (0.0, 1.0)

    def test_mask_closed_endpoints(self, grid10):
        box = ((0.25, 0.5),)
        mask = box_mask(grid10, box)
        axis = grid10.axis
        assert mask[np.argmin(np.abs(axis - 0.25))]
        assert mask[np.argmin(np.abs(axis - 0.5))]
        assert not mask[np.argmin(np.abs(axis - 0.75))]

    def test_box_within(self):
        assert box_within(((0.2, 0.3),), ((0.1, 0.4),), 1.0)
        assert not box_within(((0.05, 0.3),), ((0.1, 0.4),), 1.0)
        # wrapped inner inside wrapped outer
        assert box_within(((0.9, 0.1),), ((0.8, 0.2),), 1.0)


class TestInterpolation:
    def test_trig_exact_at_nodes(self, grid10, trig_field):
        pts = grid10.axis[::7][:, None]
        vals = evaluate_offgrid(trig_field, pts)
        assert np.allclose(vals, trig_field.values[::7], atol=1e-12)

    def test_trig_exact_for_pure_frequency(self, grid10):
        f = SampledField(grid10, np.exp(2j * np.pi * 5 * grid10.axis))
        pts = np.array([[0.123456], [0.654321], [0.999]])
        vals = evaluate_offgrid(f, pts)
        expected = np.exp(2j * np.pi * 5 * pts[:, 0])
        assert np.allclose(vals, expected, atol=1e-12)

    def test_cubic_interpolates_smooth_field(self, grid10):
        f = SampledField(grid10, np.cos(2 * np.pi * 3 * grid10.axis) + 0.0j)
        pts = np.array([[0.1239], [0.777123]])
        vals = evaluate_offgrid(f, pts, method="cubic")
        expected = np.cos(2 * np.pi * 3 * pts[:, 0])
        assert np.allclose(vals.real, expected, atol=1e-4)

    def test_tensor_eval_matches_offgrid(self, grid2d):
        x1, x2 = grid2d.coords()
        f = SampledField(
            grid2d, np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * 2 * x2) + 0.0j
        )
        ax = np.array([0.13, 0.57])
        tens = trig_eval_tensor(f, [ax, ax])
        pts = np.array([[a, b] for a in ax for b in ax])
        flat = evaluate_offgrid(f, pts)
        assert np.allclose(tens.ravel(), flat, atol=1e-12)

    def test_unknown_method(self, grid10, trig_field):
        with pytest.raises(Exception):
            evaluate_offgrid(trig_field, np.array([[0.1]]), method="nearest")


class TestDilatedProfile:
    def test_level_shift_moves_support(self, grid10):
        u = torus_centered(grid10.axis, 1.0) / 0.1
        vals = np.where(np.abs(u) < 1.0, np.exp(-1.0 / np.maximum(1e-300, 1 - u**2)), 0.0)
        box = box_from_center((0.0,), (0.1,), grid10)
        f = SampledField(grid10, vals + 0.0j, box)
        wide = dilated_profile(f, 1, (0.0,), 0)
        # reading the source through a half-width window doubles the node
        # width of the profile; half-height width is immune to interpolation
        # ringing in the tails
        nz = np.abs(wide.values) >= 0.5 * np.abs(wide.values).max()
        base_nz = np.abs(f.values) >= 0.5 * np.abs(f.values).max()
        assert nz.sum() == pytest.approx(2 * base_nz.sum(), abs=6)
        assert wide.grid.period == f.grid.period

    def test_stretch_changes_period(self, grid10):
        u = torus_centered(grid10.axis, 1.0) / 0.1
        vals = np.where(np.abs(u) < 1.0, (1 - u**2) ** 2, 0.0)
        f = SampledField(grid10, vals + 0.0j, box_from_center((0.0,), (0.1,), grid10))
        wide = dilated_profile(f, 1, (0.0,), 1)
        assert wide.grid.period == pytest.approx(2.0)

    def test_stretch_capped_by_level(self, grid10, trig_field):
        with pytest.raises(BoundsError):
            dilated_profile(trig_field, 1, (0.0,), 2)


class TestFieldFiles:
    def test_roundtrip_bit_exact(self, tmp_path, grid10, trig_field):
        path = tmp_path / "field.txt"
        write_field(trig_field, path)
        back = read_field(path)
        assert back.grid == trig_field.grid
        assert np.array_equal(back.values, trig_field.values)

    def test_support_hint_survives(self, tmp_path, grid10):
        u = torus_centered(grid10.axis, 1.0) / 0.2
        vals = np.where(np.abs(u) < 1.0, (1 - u**2) ** 3, 0.0)
        box = box_from_center((0.0,), (0.2,), grid10)
        f = SampledField(grid10, vals + 0.0j, box)
        path = tmp_path / "field.txt"
        write_field(f, path)
        back = read_field(path)
        assert np.array_equal(back.values, f.values)

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a field file\n")
        with pytest.raises(Exception):
            read_field(path)


class TestSupportHint:
    def test_constructor_enforces_hint(self, grid10):
        vals = np.ones(grid10.shape, dtype=complex)
        with pytest.raises(Exception):
            SampledField(grid10, vals, ((0.4, 0.6),))

    def test_masking_is_not_applied_to_values(self, grid10):
        u = torus_centered(grid10.axis, 1.0) / 0.2
        vals = np.where(np.abs(u) < 1.0, (1 - u**2) ** 2, 0.0) + 0.0j
        box = box_from_center((0.0,), (0.2,), grid10)
        f = SampledField(grid10, vals, box)
        assert f.max_abs() == pytest.approx(1.0)

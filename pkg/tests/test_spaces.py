"""Space parameters, Hoelder machinery, and coefficient-space quasi-norms."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomlab._errors import BoundsError
from atomlab.grid import Grid, SampledField
from atomlab.spaces import (
    CoeffArray,
    SpaceParams,
    bpq_norm,
    coeffs_from_pairs,
    fpq_norm,
    holder_norm,
    holder_product,
    holder_test_battery,
    lip_seminorm,
    lp_norm,
    read_coeffs,
    sigma_indices,
    smoothness_split,
    write_coeffs,
)

from conftest import random_trig


class TestSpaceParams:
    def test_infinite_exponents_allowed(self):
        sp = SpaceParams(0.5, math.inf, math.inf, 1)
        assert math.isinf(sp.p) and math.isinf(sp.q)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"p": 0.0},
            {"p": -1.0},
            {"q": 0.0},
            {"n": 3},
            {"K": -0.5},
            {"L": -1.0},
            {"d": 1.0},
            {"d": 4.5},
            {"s": math.inf},
        ],
    )
    def test_rejects_bad_parameters(self, kwargs):
        base = {"s": 0.5, "p": 2.0, "q": 2.0, "n": 1}
        base.update(kwargs)
        with pytest.raises(BoundsError):
            SpaceParams(**base)

    def test_dict_roundtrip_encodes_inf(self):
        sp = SpaceParams(0.3, 1.0, math.inf, 1, K=1.0, L=1.0, d=1.5)
        d = sp.as_dict()
        assert d["q"] == "inf"

    def test_smoothness_split(self):
        assert smoothness_split(1.0) == (0, 1.0)
        assert smoothness_split(1.5) == (1, 0.5)
        assert smoothness_split(2.0) == (1, 1.0)
        assert smoothness_split(0.3) == (0, 0.3)

    def test_sigma_indices(self):
        # sigma_p = n(1/min(p,1) - 1)
        sp, spq = sigma_indices(0.5, 2.0, 1)
        assert sp == pytest.approx(1.0)
        sp2, spq2 = sigma_indices(2.0, 0.5, 1)
        assert sp2 == pytest.approx(0.0)
        assert spq2 == pytest.approx(1.0)


class TestLpNorm:
    def test_against_direct_sums(self, grid10, trig_field):
        a = np.abs(trig_field.values)
        h = grid10.h
        assert lp_norm(trig_field, 1.0) == pytest.approx(h * a.sum())
        assert lp_norm(trig_field, 2.0) == pytest.approx(math.sqrt(h * (a**2).sum()))
        assert lp_norm(trig_field, math.inf) == pytest.approx(a.max())

    def test_constant_field(self, grid10):
        f = SampledField(grid10, np.full(grid10.shape, 3.0 + 0.0j))
        assert lp_norm(f, 1.0) == pytest.approx(3.0)
        assert lp_norm(f, 7.5) == pytest.approx(3.0)

    @given(st.floats(0.5, 8.0))
    @settings(max_examples=20, deadline=None)
    def test_homogeneous(self, p):
        grid = Grid(1, 6, 1.0)
        f = random_trig(grid, 99, kmax=8)
        assert lp_norm(f.scaled(-2.5), p) == pytest.approx(2.5 * lp_norm(f, p))


class TestLipSeminorm:
    def test_brute_force_oracle(self, grid10):
        # oracle: exhaustive |f(x)-f(y)|/|x-y|^sigma over all shell offsets
        f = random_trig(grid10, 7, kmax=16)
        sigma = 0.5
        v = f.values
        N, h = grid10.size, grid10.h
        best = 0.0
        t = 1
        while t <= N // 2:
            diff = np.abs(v - np.roll(v, t)).max()
            best = max(best, diff / (h * t) ** sigma)
            t *= 2
        assert lip_seminorm(f, sigma) == pytest.approx(best, rel=1e-12)

    def test_sine_lip1(self, grid10):
        f = SampledField(grid10, np.sin(2 * np.pi * grid10.axis) + 0.0j)
        # steepest one-node increment approaches the derivative bound 2*pi
        val = lip_seminorm(f, 1.0)
        assert val <= 2 * np.pi + 1e-6
        assert val >= 2 * np.pi * 0.99

    def test_exponent_gate(self, grid10, trig_field):
        with pytest.raises(BoundsError):
            lip_seminorm(trig_field, 1.5)


class TestHolderNorm:
    def test_s0_is_sup(self, grid10, trig_field):
        assert holder_norm(trig_field, 0.0) == pytest.approx(
            np.abs(trig_field.values).max()
        )

    def test_sine_c1(self, grid10):
        f = SampledField(grid10, np.sin(2 * np.pi * grid10.axis) + 0.0j)
        # sup|f| + sup|f'| + lip(f', 1) = 1 + 2pi + (2pi)^2
        expected = 1.0 + 2 * np.pi + (2 * np.pi) ** 2
        assert holder_norm(f, 2.0) == pytest.approx(expected, rel=1e-3)

    def test_monotone_in_s(self, grid10, trig_field):
        vals = [holder_norm(trig_field, s) for s in (0.0, 0.5, 1.0, 1.5)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    def test_order_cap(self, grid10, trig_field):
        with pytest.raises(BoundsError):
            holder_norm(trig_field, 99.0)

    def test_product_leibniz(self, grid10):
        f = random_trig(grid10, 21, kmax=12)
        g = random_trig(grid10, 22, kmax=12)
        prod, ratio = holder_product(f, g, 1.0)
        assert np.allclose(prod.values, f.values * g.values)
        # C^s is a quasi-algebra: the measured ratio stays O(1)
        assert 0.0 < ratio <= 2.0 + 1e-9

    def test_product_zero_factor(self, grid10, trig_field):
        z = SampledField(grid10, np.zeros(grid10.shape, dtype=complex))
        prod, ratio = holder_product(trig_field, z, 1.0)
        assert ratio == 0.0
        assert prod.max_abs() == 0.0


class TestBattery:
    def test_normalized_and_deterministic(self, grid10):
        batt1 = holder_test_battery(grid10, 1.0, 6)
        batt2 = holder_test_battery(grid10, 1.0, 6)
        assert len(batt1) >= 6
        for psi in batt1[:6]:
            assert holder_norm(psi, 1.0) == pytest.approx(1.0, rel=1e-9)
        for a, b in zip(batt1, batt2):
            assert np.array_equal(a.values, b.values)


def _lam(n, entries):
    return CoeffArray(n, entries)


class TestBpqNorm:
    def test_single_entry(self):
        lam = _lam(1, {(2, (1,)): 3.0})
        assert bpq_norm(lam, 2.0, 2.0) == pytest.approx(3.0)

    def test_two_levels_hand_computed(self):
        lam = _lam(1, {(1, (0,)): 3.0, (1, (1,)): 4.0, (2, (0,)): 12.0})
        # level 1: (3^2+4^2)^(1/2) = 5; level 2: 12; q=1 -> 17, q=inf -> 12
        assert bpq_norm(lam, 2.0, 1.0) == pytest.approx(17.0)
        assert bpq_norm(lam, 2.0, math.inf) == pytest.approx(12.0)

    def test_p_inf(self):
        lam = _lam(1, {(1, (0,)): 1.0, (1, (1,)): -7.0})
        assert bpq_norm(lam, math.inf, 1.0) == pytest.approx(7.0)

    def test_level0_wraps_to_single_cube(self):
        lam = _lam(1, {(0, (0,)): 1.0, (0, (1,)): -7.0})
        assert len(lam.entries) == 1
        assert bpq_norm(lam, math.inf, 1.0) == pytest.approx(6.0)

    def test_empty(self):
        assert bpq_norm(_lam(1, {}), 2.0, 2.0) == 0.0

    @given(st.floats(0.5, 4.0), st.floats(0.5, 4.0), st.complex_numbers(max_magnitude=10).filter(lambda z: abs(z) > 1e-3))
    @settings(max_examples=30, deadline=None)
    def test_homogeneity_property(self, p, q, c):
        lam = _lam(1, {(1, (0,)): 0.7, (2, (3,)): -1.2, (4, (9,)): 0.05})
        scaled = _lam(1, {k: c * v for k, v in lam.entries.items()})
        assert bpq_norm(scaled, p, q) == pytest.approx(abs(c) * bpq_norm(lam, p, q), rel=1e-9)

    def test_q_monotone(self):
        lam = _lam(1, {(n, (0,)): 1.0 / (1 + n) for n in range(5)})
        for p in (1.0, 2.0):
            assert bpq_norm(lam, p, math.inf) <= bpq_norm(lam, p, 1.5) * (1 + 1e-12)
            assert bpq_norm(lam, p, 1.5) <= bpq_norm(lam, p, 1.0) * (1 + 1e-12)


class TestFpqNorm:
    def test_single_entry_is_coefficient(self, grid10):
        # one cube: ||lam * 2^{nu n/p} 1_Q||_p = |lam| exactly
        lam = _lam(1, {(3, (5,)): 2.5})
        for p in (1.0, 2.0, 3.0):
            assert fpq_norm(lam, p, p, grid10) == pytest.approx(2.5, rel=1e-12)

    def test_p_equals_q_fubini(self, grid10):
        lam = _lam(
            1,
            {(1, (0,)): 1.0, (2, (1,)): -0.5, (3, (4,)): 0.25, (3, (5,)): 2.0},
        )
        for p in (1.0, 2.0):
            assert fpq_norm(lam, p, p, grid10) == pytest.approx(
                bpq_norm(lam, p, p), rel=1e-12
            )

    def test_p_inf_plain_indicator(self, grid10):
        lam = _lam(1, {(2, (1,)): 4.0, (3, (0,)): 1.0})
        assert fpq_norm(lam, math.inf, math.inf, grid10) == pytest.approx(4.0)

    def test_level_cap(self, grid10):
        lam = _lam(1, {(9, (0,)): 1.0})
        with pytest.raises(BoundsError):
            fpq_norm(lam, 2.0, 2.0, grid10)

    def test_dimension_mismatch(self, grid10):
        lam = _lam(2, {(1, (0, 0)): 1.0})
        with pytest.raises(BoundsError):
            fpq_norm(lam, 2.0, 2.0, grid10)


class TestCoeffFiles:
    def test_roundtrip(self, tmp_path):
        lam = coeffs_from_pairs(
            1, [(0, (0,), 1.5), (2, (3,), -0.25 + 0.5j), (5, (17,), 1e-8)]
        )
        path = tmp_path / "coeffs.txt"
        write_coeffs(lam, path)
        back = read_coeffs(path)
        assert back.n == 1
        assert set(back.entries) == set(lam.entries)
        for k, v in lam.entries.items():
            assert back.entries[k] == v

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("MAGIC v9 n=1\n")
        with pytest.raises(Exception):
            read_coeffs(path)

    def test_negative_level_rejected(self):
        with pytest.raises(BoundsError):
            CoeffArray(1, {(-1, (0,)): 1.0})

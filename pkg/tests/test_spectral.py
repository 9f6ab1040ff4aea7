"""Dyadic resolution of unity and Fourier-side norms."""

from __future__ import annotations

import math

import numpy as np
import pytest

from atomlab._errors import BoundsError, ConfigError
from atomlab.grid import SampledField
from atomlab.spaces import SpaceParams
from atomlab.spectral import (
    band_lp_norms,
    band_project,
    besov_norm_fourier,
    make_resolution,
    tl_norm_fourier,
)

from conftest import random_trig


class TestResolution:
    def test_partition_of_unity(self, grid10, res10):
        total = np.zeros(grid10.shape)
        for b in res10.blocks:
            total = total + b
        # the resolved band sums to one; only the unresolvable top corner may dip
        resolved = np.abs(grid10.freq) <= grid10.size // 4
        assert np.allclose(total[resolved], 1.0, atol=1e-12)

    def test_band_projections_reconstruct(self, grid10, res10):
        f = random_trig(grid10, 11, kmax=grid10.size // 8)
        total = np.zeros(grid10.shape, dtype=complex)
        for j in range(res10.j_max + 1):
            total = total + band_project(f, j, res10).values
        assert np.max(np.abs(total - f.values)) < 1e-11 * f.max_abs()

    def test_blocks_localized(self, grid10, res10):
        # block j lives on |k| in [2^{j-1}, 2^{j+1}] within the overlap fuzz
        j = 4
        support = np.abs(res10.blocks[j]) > 1e-14
        k = np.abs(grid10.freq[support])
        assert k.min() >= 2 ** (j - 1) - 1e-9
        assert k.max() <= 2 ** (j + 1) + 1e-9

    def test_perturbed_differs_but_partitions(self, grid10):
        pert = make_resolution(grid10, "perturbed")
        std = make_resolution(grid10, "standard")
        assert pert.kind == "perturbed"
        assert any(
            not np.array_equal(a, b) for a, b in zip(pert.blocks, std.blocks)
        )
        total = sum(b for b in pert.blocks)
        resolved = np.abs(grid10.freq) <= grid10.size // 4
        assert np.allclose(np.asarray(total)[resolved], 1.0, atol=1e-12)

    def test_unknown_kind(self, grid10):
        with pytest.raises(BoundsError):
            make_resolution(grid10, "fancy")


class TestFourierNorms:
    def test_single_band_frequency(self, grid10, res10):
        # k = 12 sits strictly inside block 4 ([8, 32] with peak plateau)
        f = SampledField(grid10, np.exp(2j * np.pi * 12 * grid10.axis))
        norms = band_lp_norms(f, 2.0, res10)
        params = SpaceParams(0.7, 2.0, 2.0, 1)
        expected = sum(
            (2.0 ** (0.7 * j) * norms[j]) ** 2 for j in range(res10.j_max + 1)
        ) ** 0.5
        assert besov_norm_fourier(f, params, res10) == pytest.approx(expected)
        live = [j for j, v in enumerate(norms) if v > 1e-12]
        assert live and all(j in (3, 4) for j in live)

    def test_homogeneous(self, grid10, res10, trig_field):
        params = SpaceParams(0.5, 2.0, 2.0, 1)
        base = besov_norm_fourier(trig_field, params, res10)
        assert besov_norm_fourier(trig_field.scaled(-3.7), params, res10) == pytest.approx(
            3.7 * base, rel=1e-13
        )

    def test_q_monotone(self, grid10, res10, trig_field):
        p = 2.0
        b_inf = besov_norm_fourier(trig_field, SpaceParams(0.5, p, math.inf, 1), res10)
        b_2 = besov_norm_fourier(trig_field, SpaceParams(0.5, p, 2.0, 1), res10)
        b_1 = besov_norm_fourier(trig_field, SpaceParams(0.5, p, 1.0, 1), res10)
        assert b_inf <= b_2 * (1 + 1e-12) <= b_1 * (1 + 1e-12)

    def test_p_equals_q_scales_agree(self, grid10, res10, trig_field):
        for p in (1.0, 2.0, 3.5):
            params = SpaceParams(0.5, p, p, 1)
            bf = besov_norm_fourier(trig_field, params, res10)
            tf = tl_norm_fourier(trig_field, params, res10)
            assert abs(bf - tf) <= 1e-12 * max(bf, 1.0)

    def test_tl_requires_finite_p(self, grid10, res10, trig_field):
        with pytest.raises(BoundsError):
            tl_norm_fourier(trig_field, SpaceParams(0.5, math.inf, 2.0, 1), res10)

    def test_zero_field(self, grid10, res10):
        z = SampledField(grid10, np.zeros(grid10.shape, dtype=complex))
        assert besov_norm_fourier(z, SpaceParams(0.5, 2.0, 2.0, 1), res10) == 0.0

    def test_smooth_field_band_decay(self, grid10, res10):
        f = random_trig(grid10, 31, decay=3.0)
        norms = band_lp_norms(f, 2.0, res10)
        nz = [v for v in norms if v > 0]
        assert nz[-1] < 1e-2 * max(nz)

    def test_standard_vs_perturbed_window(self, grid10):
        std = make_resolution(grid10, "standard")
        pert = make_resolution(grid10, "perturbed")
        params = SpaceParams(0.5, 2.0, 2.0, 1)
        for seed in (41, 42, 43):
            f = random_trig(grid10, seed)
            r = besov_norm_fourier(f, params, std) / besov_norm_fourier(f, params, pert)
            assert 1 / 8 <= r <= 8

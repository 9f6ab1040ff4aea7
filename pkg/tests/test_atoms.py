"""Atom validation, constructors, dilation, kernel atoms, synthesis/analysis."""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from atomlab._errors import (
    BoundsError,
    ConfigError,
    HypothesisError,
    HypothesisWarning,
    ValidationError,
)
from atomlab.atoms import (
    AtomSpec,
    analyze,
    convergence_bound,
    dilate_atom,
    kappa,
    kernel_as_atom,
    make_atom,
    synthesize,
    validate_atom,
)
from atomlab.grid import (
    SampledField,
    box_from_center,
    cube,
    cube_geometry,
    differentiate,
    torus_centered,
)
from atomlab.localmeans import build_mean_kernels
from atomlab.spaces import CoeffArray, SpaceParams, bpq_norm, coeffs_from_pairs, lp_norm
from atomlab.spectral import besov_norm_fourier, make_resolution

from conftest import random_trig

PARAMS = SpaceParams(0.5, 2.0, 2.0, 1, K=1.0, L=1.0, d=1.5)


class TestValidateAtom:
    def test_constructed_atom_passes_with_unit_constant(self, grid10):
        a = make_atom(3, 2, PARAMS, "bump", 1, grid=grid10)
        cert = validate_atom(a, target_c=1.0 + 1e-9)
        assert cert.c_support
        assert cert.passed
        assert max(cert.c_smooth, cert.c_moment_poly, cert.c_moment_rand) <= 1 + 1e-9

    def test_kappa_recorded(self, grid10):
        a = make_atom(2, 0, PARAMS, grid=grid10)
        cert = validate_atom(a)
        assert cert.kappa == pytest.approx(0.5 + 1.0 + 1 * (1 - 0.5))

    def test_support_violation_rejected_at_construction(self, grid10):
        # a wide bump declared at a fine cube spills outside d*Q
        u = torus_centered(grid10.axis, 1.0) / 0.3
        vals = np.where(np.abs(u) < 1, np.exp(-1 / np.maximum(1e-300, 1 - u**2)), 0.0)
        f = SampledField(grid10, vals + 0.0j, box_from_center((0.0,), (0.3,), grid10))
        with pytest.raises(ValidationError):
            AtomSpec(f, cube(4, 0, PARAMS.d), PARAMS, None)
        # the same profile at a cube wide enough to hold it is accepted
        a = AtomSpec(f, cube(0, 0, PARAMS.d), PARAMS, None)
        assert validate_atom(a).c_support

    def test_zero_atom(self, grid10):
        c = cube(3, 1, PARAMS.d)
        z = SampledField(
            grid10,
            np.zeros(grid10.shape, dtype=complex),
            cube_geometry(c, grid10).support_box,
        )
        cert = validate_atom(AtomSpec(z, c, PARAMS, None))
        assert cert.c_support
        assert cert.c_smooth == 0.0
        assert cert.c_moment_poly == 0.0 and cert.c_moment_rand == 0.0

    def test_level_cap(self, grid10):
        c = cube(9, 0, PARAMS.d)
        z = SampledField(
            grid10,
            np.zeros(grid10.shape, dtype=complex),
            cube_geometry(c, grid10).support_box,
        )
        with pytest.raises(BoundsError):
            validate_atom(AtomSpec(z, c, PARAMS, None))

    def test_moments_vacuous_at_level0_and_L0(self, grid10):
        a0 = make_atom(0, 0, PARAMS, grid=grid10)
        cert0 = validate_atom(a0)
        assert cert0.c_moment_poly == 0.0 and cert0.c_moment_rand == 0.0
        aL = make_atom(3, 0, PARAMS.with_(L=0.0), grid=grid10)
        certL = validate_atom(aL)
        assert certL.c_moment_poly == 0.0 and certL.c_moment_rand == 0.0


class TestMakeAtom:
    def test_unknown_template(self, grid10):
        with pytest.raises(ConfigError):
            make_atom(2, 0, PARAMS, "wavelet", grid=grid10)

    def test_moment_order_cap(self, grid10):
        with pytest.raises(BoundsError):
            make_atom(2, 0, PARAMS, "bump", 99, grid=grid10)

    def test_dimension_mismatch(self, grid10):
        with pytest.raises(ConfigError):
            make_atom(2, (0, 0), SpaceParams(0.5, 2, 2, 2), grid=grid10)

    def test_level_cap(self, grid10):
        with pytest.raises(BoundsError):
            make_atom(8, 0, PARAMS, grid=grid10)

    def test_projected_moments_vanish(self, grid10):
        a = make_atom(3, 1, PARAMS.with_(L=2.0), "bump", 2, grid=grid10)
        h = grid10.h
        l1 = lp_norm(a.field, 1.0)
        x = torus_centered(grid10.axis - cube(3, 1).m[0] / 8.0, 1.0)
        m0 = abs(h * np.sum(a.field.values))
        m1 = abs(h * np.sum(x * a.field.values))
        assert m0 < 1e-10 * l1
        assert m1 < 1e-10 * l1

    def test_projection_keeps_support(self, grid10):
        a = make_atom(3, 1, PARAMS.with_(L=2.0), "bump", 2, grid=grid10)
        assert validate_atom(a).c_support

    def test_2d_atom(self, grid2d):
        params = SpaceParams(0.5, 2.0, 2.0, 2, K=1.0, L=1.0, d=1.5)
        a = make_atom(2, (1, 3), params, "bump", 1, grid=grid2d)
        cert = validate_atom(a, rand_battery=4, target_c=1.0 + 1e-9)
        assert cert.passed


class TestOrderingInvariants:
    def test_monotone_in_K(self, grid10):
        a = make_atom(3, 5, PARAMS, "bump", 1, grid=grid10)
        consts = []
        for K in (0.0, 0.5, 1.0, 1.5):
            spec = AtomSpec(a.field, a.cube, a.params.with_(K=K), a.sampler)
            consts.append(validate_atom(spec, rand_battery=0).c_smooth)
        assert all(x <= y * (1 + 1e-12) for x, y in zip(consts, consts[1:]))

    def test_monotone_in_L(self, grid10):
        a = make_atom(3, 5, PARAMS, "bump", 1, grid=grid10)
        consts = []
        for L in (0.0, 1.0, 2.0):
            spec = AtomSpec(a.field, a.cube, a.params.with_(L=L), a.sampler)
            consts.append(validate_atom(spec, rand_battery=0).c_moment_poly)
        assert all(x <= y * (1 + 1e-12) for x, y in zip(consts, consts[1:]))

    def test_classical_implies_general(self, grid10):
        # summed dilated-Hoelder constant vs the worst classical
        # derivative-sup constant; embedding factor at most n*K + 1
        K = 1
        for m in (0, 3, 7):
            a = make_atom(3, m, PARAMS.with_(K=float(K)), "bump", 1, grid=grid10)
            cert = validate_atom(a, rand_battery=0)
            from atomlab.atoms import _dilated_atom, smooth_decay

            dil = _dilated_atom(a, "trig")
            classical = max(
                lp_norm(differentiate(dil, (alpha,)), math.inf)
                for alpha in range(K + 1)
            ) / smooth_decay(a.params, a.cube.nu)
            assert cert.c_smooth <= (1 * K + 1) * classical * (1 + 1e-9)

    def test_scaling_coherence(self, grid10):
        a = make_atom(3, 2, PARAMS, "bump", 1, grid=grid10)
        base = validate_atom(a, rand_battery=8)
        c = -2.5
        scaled = AtomSpec(
            a.field.scaled(c), a.cube, a.params,
            (lambda p, s=a.sampler: c * s(p)),
        )
        out = validate_atom(scaled, rand_battery=8)
        assert out.c_smooth == pytest.approx(abs(c) * base.c_smooth, rel=1e-13)
        floor = 1e-13 * max(base.c_smooth, 1.0)
        for b, o in (
            (base.c_moment_poly, out.c_moment_poly),
            (base.c_moment_rand, out.c_moment_rand),
        ):
            if abs(c) * b > floor or o > floor:
                assert o == pytest.approx(abs(c) * b, rel=1e-10, abs=floor)


class TestDilateAtom:
    def test_j0_identity(self, grid10):
        a = make_atom(4, 3, PARAMS, "bump", 1, grid=grid10)
        out = dilate_atom(a, 0)
        assert out is a or np.array_equal(out.field.values, a.field.values)

    def test_bad_levels(self, grid10):
        a = make_atom(3, 1, PARAMS, grid=grid10)
        with pytest.raises(BoundsError):
            dilate_atom(a, -1)
        with pytest.raises(BoundsError):
            dilate_atom(a, 4)

    def test_relocates_to_coarser_cube(self, grid10):
        a = make_atom(4, 5, PARAMS, "bump", 1, grid=grid10)
        out = dilate_atom(a, 2)
        assert out.cube.nu == 2
        assert out.cube.m == (5 % 4,)

    def test_constants_do_not_grow(self, grid10):
        for m in (0, 2, 9):
            a = make_atom(4, m, PARAMS, "bump", 1, grid=grid10)
            base = validate_atom(a, rand_battery=0)
            for j in (1, 4):
                out = validate_atom(dilate_atom(a, j), rand_battery=0)
                assert out.passed
                assert out.c_smooth <= base.c_smooth * 1.05
                floor = 1e-9 * max(base.c_smooth, 1.0)
                if out.c_moment_poly > floor:
                    assert out.c_moment_poly <= max(base.c_moment_poly, floor) * 1.05


class TestKernelAsAtom:
    def test_moment_order_gate(self, pair10):
        with pytest.raises(HypothesisError):
            kernel_as_atom(pair10, 2, PARAMS.with_(L=4.0))  # L = N + 2

    def test_level_cap(self, pair10):
        with pytest.raises(BoundsError):
            kernel_as_atom(pair10, 8, PARAMS)

    def test_uniform_constants_over_levels(self, pair10):
        worst = []
        for j in range(7):
            cert = validate_atom(kernel_as_atom(pair10, j, PARAMS), rand_battery=8)
            assert cert.c_support
            worst.append(max(cert.c_smooth, cert.c_moment_poly, cert.c_moment_rand))
        assert max(worst) <= 2.0 * min(worst)

    def test_j0_needs_no_moments(self, pair10):
        cert = validate_atom(kernel_as_atom(pair10, 0, PARAMS))
        assert cert.c_moment_poly == 0.0 and cert.c_moment_rand == 0.0


class TestSynthesize:
    def test_single_unit_coefficient(self, grid10):
        lam = coeffs_from_pairs(1, [(0, (0,), 1.0)])
        a0 = make_atom(0, 0, PARAMS, "bump", 1, grid=grid10)
        f = synthesize(lam, lambda nu, m: make_atom(nu, m, PARAMS, "bump", 1, grid=grid10))
        assert np.allclose(f.values, a0.field.values, atol=1e-14)

    def test_zero_lambda(self, grid10):
        f = synthesize(CoeffArray(1, {}), lambda nu, m: None, grid=grid10)
        assert f.max_abs() == 0.0

    def test_empty_needs_grid(self):
        with pytest.raises(ConfigError):
            synthesize(CoeffArray(1, {}), lambda nu, m: None)

    def test_linearity(self, grid10):
        factory = lambda nu, m: make_atom(nu, m, PARAMS, "bump", 1, grid=grid10)
        lam1 = coeffs_from_pairs(1, [(1, (0,), 0.7), (3, (4,), -1.2)])
        lam2 = coeffs_from_pairs(1, [(1, (0,), 0.25), (2, (3,), 1.0 + 1.0j)])
        both = CoeffArray(1, {
            k: lam1.entries.get(k, 0) + lam2.entries.get(k, 0)
            for k in set(lam1.entries) | set(lam2.entries)
        })
        f12 = synthesize(both, factory)
        f1 = synthesize(lam1, factory, grid=grid10)
        f2 = synthesize(lam2, factory, grid=grid10)
        scale = max(f12.max_abs(), 1e-300)
        assert np.max(np.abs(f12.values - f1.values - f2.values)) < 1e-13 * scale

    def test_factory_location_mismatch(self, grid10):
        lam = coeffs_from_pairs(1, [(2, (1,), 1.0)])
        with pytest.raises(ValidationError):
            synthesize(lam, lambda nu, m: make_atom(nu, (m[0] + 1,), PARAMS, grid=grid10))

    def test_unknown_mode(self, grid10):
        lam = coeffs_from_pairs(1, [(1, (0,), 1.0)])
        with pytest.raises(ConfigError):
            synthesize(lam, lambda nu, m: make_atom(nu, m, PARAMS, grid=grid10), "loose")

    def test_cert_sink_records_each_atom(self, grid10):
        lam = coeffs_from_pairs(1, [(1, (0,), 1.0), (2, (3,), -0.5), (3, (6,), 2.0)])
        factory = lambda nu, m: make_atom(nu, m, PARAMS, "bump", 1, grid=grid10)
        for mode in ("strict", "lenient"):
            sink: list = []
            synthesize(lam, factory, mode, cert_sink=sink)
            assert len(sink) == 3
            assert all(c.passed for c in sink)

    def test_norm_bound_smoke(self, grid10, res10):
        rng = np.random.default_rng(777)
        entries = {}
        for _ in range(6):
            nu = int(rng.integers(1, 5))
            m = (int(rng.integers(0, 1 << nu)),)
            entries[(nu, m)] = complex(rng.standard_normal())
        lam = CoeffArray(1, entries)
        f = synthesize(lam, lambda nu, m: make_atom(nu, m, PARAMS, "bump", 1, grid=grid10))
        ratio = besov_norm_fourier(f, PARAMS, res10) / bpq_norm(lam, 2.0, 2.0)
        assert ratio <= 100


class TestAnalyze:
    def test_depth_cap(self, pair10, grid10, trig_field):
        with pytest.raises(BoundsError):
            analyze(trig_field, 8, pair10, PARAMS)

    def test_overlap_hypothesis(self, pair10, grid10, trig_field):
        with pytest.raises(ValidationError):
            analyze(trig_field, 4, pair10, PARAMS.with_(d=1.2))

    def test_zero_field(self, pair10, grid10):
        z = SampledField(grid10, np.zeros(grid10.shape, dtype=complex))
        lam, atoms = analyze(z, 4, pair10, PARAMS)
        assert bpq_norm(lam, 2.0, 2.0) == 0.0

    def test_roundtrip_band_limited(self, pair10, grid10):
        f = random_trig(grid10, 404, kmax=16)
        lam, atoms = analyze(f, 6, pair10, PARAMS)
        total = np.zeros(grid10.shape, dtype=complex)
        for key, coeff in lam.sorted_items():
            total = total + coeff * atoms[key].field.values
        err = np.max(np.abs(total - f.values)) / f.max_abs()
        assert err < 1e-6

    def test_single_atom_roundtrip(self, pair10, grid10):
        a = make_atom(2, 1, PARAMS, "bump", 1, grid=grid10)
        # band-limit the atom before analysis so the identity applies exactly
        spec = np.fft.fft(a.field.values)
        spec[np.abs(grid10.freq) > grid10.size // 8] = 0.0
        f = SampledField(grid10, np.fft.ifft(spec))
        lam, atoms = analyze(f, 6, pair10, PARAMS)
        total = np.zeros(grid10.shape, dtype=complex)
        for key, coeff in lam.sorted_items():
            total = total + coeff * atoms[key].field.values
        assert np.max(np.abs(total - f.values)) < 1e-6 * f.max_abs()


class TestConvergenceBound:
    def test_zero_lambda(self, grid10, trig_field):
        assert convergence_bound(CoeffArray(1, {}), PARAMS, trig_field) == 0.0

    def test_single_coefficient_exact(self, grid10, trig_field):
        lam = coeffs_from_pairs(1, [(0, (0,), 2.0)])
        a = make_atom(0, 0, PARAMS, "bump", 1, grid=grid10)
        expected = 2.0 * abs(grid10.h * np.sum(a.field.values * trig_field.values))
        got = convergence_bound(lam, PARAMS, trig_field)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_hypothesis_warning(self, grid10, trig_field):
        bad = SpaceParams(0.1, 0.5, 2.0, 1, K=1.0, L=0.0, d=1.5)
        lam = coeffs_from_pairs(1, [(1, (0,), 1.0)])
        with pytest.warns(HypothesisWarning):
            convergence_bound(lam, bad, trig_field)

    def test_geometric_coefficients_bounded(self, grid10, trig_field):
        from atomlab.spaces import holder_norm

        lam = CoeffArray(1, {(nu, (0,)): 2.0**-nu for nu in range(7)})
        bound = convergence_bound(lam, PARAMS, trig_field)
        cap = 10.0 * bpq_norm(lam, 2.0, math.inf) * holder_norm(trig_field, 1.0)
        assert 0 < bound <= cap

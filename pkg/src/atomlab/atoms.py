"""Generalized smoothness atoms: validation, constructors, dilation, the
kernel-dilates-are-atoms bridge, synthesis from coefficient arrays, a
Calderon-style analysis operator, and the distributional convergence bound.

An atom located at the dyadic cube Q_{nu,m} (center 2^-nu * m * period, side
2^-nu * period) is a field supported in d*Q_{nu,m} whose dilate a(2^-nu .)
obeys a Hoelder bound and whose pairings against C^L test functions decay
like 2^{-nu*kappa}.  Certificates report the minimal empirical constants of
these three conditions.  Moment constants apply only for nu >= 1 and L > 0;
both are defined as 0 otherwise.

Numerical semantics: a sampled field stands for its trigonometric
interpolant, so off-grid evaluation is exact unless an atom carries its own
analytic sampler (constructors attach one; derived atoms compose it), and
support statements refer to grid nodes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from ._errors import (
    BoundsError,
    ConfigError,
    HypothesisError,
    HypothesisWarning,
    ValidationError,
)
from .grid import (
    LEVEL_MARGIN,
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
    torus_centered,
    trig_eval_tensor,
)
from .localmeans import KernelPair, kernel_field
from .spaces import (
    CoeffArray,
    SpaceParams,
    holder_norm,
    holder_test_battery,
    sigma_indices,
    smoothness_split,
)

SUPPORT_TOLERANCE = 1e-12
MOMENT_PROJECT_CAP = 4


def kappa(params: SpaceParams) -> float:
    """The moment decay exponent s + L + n(1 - 1/p) (p = inf drops the 1/p)."""
    inv_p = 0.0 if math.isinf(params.p) else 1.0 / params.p
    return params.s + params.L + params.n * (1.0 - inv_p)


def smooth_decay(params: SpaceParams, nu: int) -> float:
    """The Hoelder-side decay 2^{-nu(s - n/p)}."""
    inv_p = 0.0 if math.isinf(params.p) else 1.0 / params.p
    return 2.0 ** (-nu * (params.s - params.n * inv_p))


# -- templates ------------------------------------------------------------------


def _profile_bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0 - 1e-12
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _profile_cos4(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.cos(0.5 * np.pi * u[inside]) ** 4
    return out


def _profile_poly6(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = (1.0 - u[inside] ** 2) ** 6
    return out


#: One-dimensional profiles on [-1, 1]; n = 2 uses their tensor products.
TEMPLATES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "bump": _profile_bump,
    "cos4": _profile_cos4,
    "poly6": _profile_poly6,
}


@lru_cache(maxsize=None)
def _template_moments(
    template: str, max_order: int, power: int = 1
) -> tuple[float, ...]:
    """Reference moments int u^k g(u)^power du on [-1, 1] at high resolution."""
    g = TEMPLATES[template]
    M = 1 << 16
    u = (np.arange(M) + 0.5) / M * 2.0 - 1.0
    w = 2.0 / M
    gv = g(u) ** power
    return tuple(float(w * np.sum(u**k * gv)) for k in range(max_order + 1))


def _multi_indices_upto(n: int, top: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(b,) for b in range(top + 1)]
    return [(a, b) for a in range(top + 1) for b in range(top + 1 - a)]


def _lattice_indices(n: int, nu: int) -> list[tuple[int, ...]]:
    side = 1 << nu
    if n == 1:
        return [(m,) for m in range(side)]
    return [(m1, m2) for m1 in range(side) for m2 in range(side)]


# -- atom spec and certificate ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomSpec:
    """A candidate atom: field, home cube, and the space parameters it is
    measured against.  ``sampler`` (optional) evaluates the underlying
    analytic profile at arbitrary points and keeps dilation chains exact."""

    field: SampledField
    cube: DyadicCube
    params: SpaceParams
    sampler: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        grid = self.field.grid
        if len(self.cube.m) != grid.n:
            raise ValidationError("cube rank does not match the field grid")
        if self.field.support_hint is None:
            raise ValidationError("atoms must carry a support hint")
        geo = cube_geometry(self.cube, grid)
        if not box_within(self.field.support_hint, geo.support_box, grid.period):
            raise ValidationError(
                f"support hint exceeds the d*Q box of {self.cube}"
            )


@dataclass(frozen=True)
class AtomCertificate:
    """Minimal empirical constants of the three atom conditions."""

    cube: DyadicCube
    params: SpaceParams
    c_support: bool
    c_smooth: float
    c_moment_poly: float
    c_moment_rand: float
    kappa: float
    passed: bool

    def as_json(self) -> dict:
        return {
            "cube": [self.cube.nu, *self.cube.m],
            "C_support": self.c_support,
            "C_smooth": self.c_smooth,
            "C_moment_poly": self.c_moment_poly,
            "C_moment_rand": self.c_moment_rand,
            "kappa": self.kappa,
            "pass": self.passed,
            "params": self.params.as_dict(),
        }


def _dilation_stretch(nu: int, width_factor: float) -> int:
    """Stretch exponent so a support of width_factor cubes fits one window."""
    need = max(0, math.ceil(math.log2(width_factor))) if width_factor > 1 else 0
    return min(nu, need)


def _dilated_atom(a: AtomSpec, method: str) -> SampledField:
    geo = cube_geometry(a.cube, a.field.grid)
    stretch = _dilation_stretch(a.cube.nu, a.cube.d)
    return dilated_profile(
        a.field, a.cube.nu, geo.center, stretch, sampler=a.sampler, method=method
    )


def _center_nodes(grid: Grid, center: Sequence[float]) -> tuple[int, ...]:
    return tuple(int(round(c / grid.h)) % grid.size for c in center)


GL_QUADRATURE_POINTS = 96


@lru_cache(maxsize=8)
def _gl_rule(count: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(count)


def _moment_constants(
    field_values: np.ndarray,
    cube_: DyadicCube,
    params: SpaceParams,
    grid: Grid,
    rand_battery: int,
    sampler: Callable[[np.ndarray], np.ndarray] | None = None,
    hint: tuple[tuple[float, float], ...] | None = None,
) -> tuple[float, float]:
    """(C_moment_poly, C_moment_rand) at the cube center, 0 for nu=0 or L=0.

    With an analytic sampler the pairings integrate by Gauss-Legendre nodes
    over the support box (test fields by exact trigonometric interpolation),
    which keeps fine-level atoms free of node-quadrature error; otherwise the
    node sum is the exact pairing of the represented interpolant.  When the
    declared support ``hint`` is narrower than the cube box the rule is laid
    over the hint, so no nodes are wasted on regions where the atom vanishes.
    """
    if params.L == 0 or cube_.nu == 0:
        return 0.0, 0.0
    geo = cube_geometry(cube_, grid)
    mscale = 2.0 ** (-cube_.nu * kappa(params))
    top = smoothness_split(params.L)[0]

    if sampler is None:
        hn = grid.h**grid.n
        axes = [torus_centered(grid.axis - c, grid.period) for c in geo.center]

        def pair_mono(beta: tuple[int, ...]) -> float:
            if grid.n == 1:
                mono = axes[0] ** beta[0]
            else:
                mono = np.multiply.outer(axes[0] ** beta[0], axes[1] ** beta[1])
            return abs(hn * np.sum(mono * field_values))

        def pair_psi(psi: SampledField) -> float:
            shift = _center_nodes(grid, geo.center)
            rolled = np.roll(psi.values, shift, axis=tuple(range(grid.n)))
            return abs(hn * np.sum(rolled * field_values))

    else:
        x, w = _gl_rule(GL_QUADRATURE_POINTS)
        cube_half = 0.5 * cube_.d * grid.period / (1 << cube_.nu)
        mids: list[float] = []
        halves: list[float] = []
        for i in range(grid.n):
            mid, hw = geo.center[i], cube_half
            if hint is not None:
                lo, hi = hint[i]
                width = (hi - lo) % grid.period
                if width == 0.0:
                    width = grid.period
                if 0.5 * width < hw:
                    mid, hw = (lo + 0.5 * width) % grid.period, 0.5 * width
            mids.append(mid)
            halves.append(hw)
        abs_axes = [mids[i] + halves[i] * x for i in range(grid.n)]
        rel_axes = [
            torus_centered(abs_axes[i] - geo.center[i], grid.period)
            for i in range(grid.n)
        ]
        if grid.n == 1:
            mesh = abs_axes[0][:, None] % grid.period
            weights = halves[0] * w
        else:
            a1, a2 = np.meshgrid(abs_axes[0], abs_axes[1], indexing="ij")
            mesh = np.stack([a1.ravel(), a2.ravel()], axis=1) % grid.period
            weights = np.multiply.outer(halves[0] * w, halves[1] * w)
        avals = sampler(mesh).reshape(weights.shape)

        def pair_mono(beta: tuple[int, ...]) -> float:
            if grid.n == 1:
                mono = rel_axes[0] ** beta[0]
            else:
                mono = np.multiply.outer(
                    rel_axes[0] ** beta[0], rel_axes[1] ** beta[1]
                )
            return abs(np.sum(weights * mono * avals))

        def pair_psi(psi: SampledField) -> float:
            pv = trig_eval_tensor(psi, rel_axes).reshape(weights.shape)
            return abs(np.sum(weights * pv * avals))

    poly = 0.0
    for beta in _multi_indices_upto(grid.n, top):
        poly = max(poly, pair_mono(beta) / mscale)
    rand = 0.0
    if rand_battery > 0:
        battery = holder_test_battery(grid, params.L, rand_battery)
        for psi in battery:
            rand = max(rand, pair_psi(psi) / mscale)
    return float(poly), float(rand)


def validate_atom(
    a: AtomSpec,
    rand_battery: int = 32,
    *,
    target_c: float | None = None,
    method: str = "trig",
) -> AtomCertificate:
    """Measure the minimal constants of the support, dilated-Hoelder, and
    moment conditions; ``pass`` compares them against ``target_c`` when given
    (support must hold either way)."""
    grid = a.field.grid
    nu = a.cube.nu
    if nu > grid.J - LEVEL_MARGIN:
        raise BoundsError(f"cube level {nu} exceeds J-{LEVEL_MARGIN}")
    geo = cube_geometry(a.cube, grid)
    inside = box_mask(grid, geo.support_box)
    mx = a.field.max_abs()
    spill = float(np.abs(a.field.values[~inside]).max()) if (~inside).any() else 0.0
    c_support = mx == 0.0 or spill <= SUPPORT_TOLERANCE * mx

    dil = _dilated_atom(a, method)
    c_smooth = float(holder_norm(dil, a.params.K)) / smooth_decay(a.params, nu)
    c_poly, c_rand = _moment_constants(
        a.field.values, a.cube, a.params, grid, rand_battery, a.sampler,
        a.field.support_hint,
    )

    passed = c_support
    if target_c is not None:
        passed = passed and max(c_smooth, c_poly, c_rand) <= target_c
    return AtomCertificate(
        a.cube, a.params, c_support, c_smooth, c_poly, c_rand, kappa(a.params), passed
    )


# -- constructors ----------------------------------------------------------------


@lru_cache(maxsize=None)
def _projection_coeffs(
    template: str, moment_order: int, n: int
) -> tuple[tuple[tuple[int, ...], float], ...]:
    """Coefficients c_beta such that g - sum c_beta u^beta g^2 has vanishing
    moments int u^alpha (.) du for all |alpha| <= moment_order - 1.

    The corrections use the squared template: same support and smoothness,
    but g itself does not lie in their span, so the projection cannot
    collapse the atom to zero.
    """
    betas = [
        b for b in _multi_indices_upto(n, moment_order - 1) if sum(b) <= moment_order - 1
    ]
    M1 = _template_moments(template, 2 * moment_order + 2, 1)
    M2 = _template_moments(template, 2 * moment_order + 2, 2)
    G = np.empty((len(betas), len(betas)))
    rhs = np.empty(len(betas))
    for i, alpha in enumerate(betas):
        rhs[i] = math.prod(M1[a] for a in alpha)
        for k, beta in enumerate(betas):
            G[i, k] = math.prod(M2[a + b] for a, b in zip(alpha, beta))
    sol = np.linalg.solve(G, rhs)
    return tuple((beta, float(c)) for beta, c in zip(betas, sol))


def make_atom(
    nu: int,
    m,
    params: SpaceParams,
    template: str = "bump",
    moment_order: int = 0,
    *,
    grid: Grid,
    rand_battery: int = 32,
) -> AtomSpec:
    """Translate/dilate a template profile to d*Q_{nu,m}, project out
    polynomial moments up to degree moment_order - 1 against same-support
    functions, and normalize so every measured constant is <= 1."""
    if template not in TEMPLATES:
        raise ConfigError(f"unknown template {template!r} (have {sorted(TEMPLATES)})")
    if not (0 <= moment_order <= MOMENT_PROJECT_CAP):
        raise BoundsError(f"moment_order must lie in [0, {MOMENT_PROJECT_CAP}]")
    if params.n != grid.n:
        raise ConfigError("params dimension does not match grid")
    c = cube(nu, m, params.d)
    if c.nu > grid.J - LEVEL_MARGIN:
        raise BoundsError(f"cube level {nu} exceeds J-{LEVEL_MARGIN}")
    geo = cube_geometry(c, grid)
    center = np.asarray(geo.center)
    half = 0.5 * params.d * grid.period / (1 << nu)
    profile = TEMPLATES[template]
    corrections = (
        _projection_coeffs(template, moment_order, grid.n) if moment_order else ()
    )

    def raw_sampler(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u = torus_centered(pts - center, grid.period) / half
        vals = np.ones(pts.shape[0])
        for axis in range(grid.n):
            vals = vals * profile(u[:, axis])
        if corrections:
            poly = np.zeros(pts.shape[0])
            for beta, cb in corrections:
                poly += cb * np.prod(
                    [u[:, axis] ** beta[axis] for axis in range(grid.n)], axis=0
                )
            vals = vals - vals * vals * poly
        return vals

    if grid.n == 1:
        pts = grid.axis[:, None]
    else:
        x1, x2 = grid.coords()
        pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    raw = raw_sampler(pts).reshape(grid.shape)
    box = box_from_center(geo.center, (half,) * grid.n, grid)

    stretch = _dilation_stretch(nu, params.d)
    dil = dilated_profile(
        SampledField(grid, raw, box), nu, geo.center, stretch, sampler=raw_sampler
    )
    scale = smooth_decay(params, nu) / holder_norm(dil, params.K)
    if params.L > 0 and nu >= 1:
        c_poly, c_rand = _moment_constants(
            scale * raw, c, params, grid, rand_battery,
            lambda p, _s=scale: _s * raw_sampler(p), box,
        )
        worst = max(c_poly, c_rand)
        if worst > 1.0:
            scale /= worst

    def sampler(p: np.ndarray) -> np.ndarray:
        return scale * raw_sampler(p)

    return AtomSpec(SampledField(grid, scale * raw, box), c, params, sampler)


def dilate_atom(a: AtomSpec, j: int) -> AtomSpec:
    """The dilation lemma: 2^{j(s-n/p)} a(2^-j .) located at Q_{nu-j,m}."""
    nu = a.cube.nu
    if j < 0 or j > nu:
        raise BoundsError(f"dilation level j={j} must lie in [0, nu={nu}]")
    if j == 0:
        return a
    grid = a.field.grid
    params = a.params
    old_center = np.asarray(cube_geometry(a.cube, grid).center)
    new_cube = cube(nu - j, a.cube.m, a.cube.d)
    new_center = np.asarray(cube_geometry(new_cube, grid).center)
    amp = 1.0 / smooth_decay(params, j)  # 2^{j(s - n/p)}

    half_old = []
    for (lo, hi) in a.field.support_hint:
        w = grid.period if (lo, hi) == (0.0, grid.period) else (hi - lo) % grid.period
        half_old.append(0.5 * w)
    half_new = [min(0.5 * grid.period, 2.0**j * w) for w in half_old]
    box = box_from_center(tuple(new_center), tuple(half_new), grid)

    def sampler(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = torus_centered(pts - new_center, grid.period)
        src = old_center + rel * 2.0**-j
        if a.sampler is not None:
            return amp * a.sampler(src)
        from .grid import evaluate_offgrid

        return amp * evaluate_offgrid(a.field, src)

    if grid.n == 1:
        pts = grid.axis[:, None]
    else:
        x1, x2 = grid.coords()
        pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    vals = sampler(pts).reshape(grid.shape)
    if a.sampler is None:
        # interpolation leaves sub-roundoff tails outside the true support
        vals = np.where(box_mask(grid, box), vals, 0.0)
    return AtomSpec(SampledField(grid, vals, box), new_cube, params, sampler)


def kernel_as_atom(pair: KernelPair, j: int, params: SpaceParams) -> AtomSpec:
    """The kernel dilate 2^{-j(s+n(1-1/p))} k_j as an atom at Q_{j,0}.

    Atoms are defined up to constants, so the amplitude is divided by the
    measured smoothness constant of the mother profile; this makes the
    validated constants uniform over j, including the j = 0 kernel whose
    mother differs from the dilating one.
    """
    if params.L > pair.N + 1:
        raise HypothesisError(
            f"kernel atoms require L <= N+1 (L={params.L}, N={pair.N})"
        )
    grid = pair.grid
    if j > grid.J - LEVEL_MARGIN:
        raise BoundsError(f"level {j} exceeds J-{LEVEL_MARGIN}")
    inv_p = 0.0 if math.isinf(params.p) else 1.0 / params.p
    halfw = 0.5 * pair.e * grid.period / (1 << j)

    def make_sampler(amp: float) -> Callable[[np.ndarray], np.ndarray]:
        def sampler(pts: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            if j == 0:
                return amp * pair.sampler_k0(pts)
            centered = torus_centered(pts, grid.period)
            inside = np.all(np.abs(centered) <= halfw, axis=1)
            vals = np.zeros(pts.shape[0])
            if inside.any():
                vals[inside] = (
                    amp
                    * 2.0 ** (j * grid.n)
                    * pair.sampler_k(centered[inside] * 2.0**j)
                )
            return vals

        return sampler

    if grid.n == 1:
        pts = grid.axis[:, None]
    else:
        x1, x2 = grid.coords()
        pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    amp = 2.0 ** (-j * (params.s + grid.n * (1.0 - inv_p)))
    raw_sampler = make_sampler(amp)
    raw = raw_sampler(pts).reshape(grid.shape)
    box = box_from_center((0.0,) * grid.n, (halfw,) * grid.n, grid)
    stretch = _dilation_stretch(j, params.d)
    dil = dilated_profile(
        SampledField(grid, raw, box), j, (0.0,) * grid.n, stretch, sampler=raw_sampler
    )
    scale = smooth_decay(params, j) / holder_norm(dil, params.K)
    sampler = make_sampler(amp * scale)
    vals = raw * scale
    return AtomSpec(SampledField(grid, vals, box), cube(j, (0,) * grid.n, params.d), params, sampler)


# -- synthesis, analysis, convergence ---------------------------------------------


def synthesize(
    lam: CoeffArray,
    atom_factory: Callable[[int, tuple[int, ...]], AtomSpec],
    mode: str = "strict",
    *,
    grid: Grid | None = None,
    cert_sink: list | None = None,
) -> SampledField:
    """Deterministic pointwise sum of lam_{nu,m} * a_{nu,m} (nu ascending,
    m lexicographic).  ``strict`` refuses atoms whose certificate fails;
    ``lenient`` records certificates and proceeds."""
    if mode not in ("strict", "lenient"):
        raise ConfigError(f"unknown synthesis mode {mode!r}")
    total = None
    out_grid = grid
    for (nu, m), coeff in lam.sorted_items():
        atom = atom_factory(nu, m)
        if (atom.cube.nu, atom.cube.m) != (nu, m):
            raise ValidationError(
                f"factory returned atom at {atom.cube}, expected ({nu}, {m})"
            )
        cert = validate_atom(atom, rand_battery=8)
        if cert_sink is not None:
            cert_sink.append(cert)
        if mode == "strict" and not cert.passed:
            raise ValidationError(f"atom at ({nu}, {m}) failed validation")
        if total is None:
            out_grid = atom.field.grid
            total = np.zeros(out_grid.shape, dtype=np.complex128)
        total = total + coeff * atom.field.values
    if total is None:
        if out_grid is None:
            raise ConfigError("empty coefficient array needs an explicit grid")
        total = np.zeros(out_grid.shape, dtype=np.complex128)
    return SampledField(out_grid, total)


def analyze(
    f: SampledField, depth: int, pair: KernelPair, params: SpaceParams
) -> tuple[CoeffArray, dict[tuple[int, tuple[int, ...]], AtomSpec]]:
    """Split f into localized kernel pieces via a discrete Calderon identity.

    Lattice spectra khat_j of the sampled kernel dilates give dual multipliers
    mhat_j = conj(khat_j) / sum_i |khat_i|^2 with sum_j khat_j mhat_j = 1 on
    the resolved band; each level is chopped by the half-open cube partition
    and re-convolved, a circular convolution with a compactly supported
    kernel, so every piece is node-exactly supported in its (1+e)-cube and
    sum_{nu,m} lam * a reconstructs band-limited f to roundoff.  Coefficients
    carry 2^{nu(s-n/p)} times the dilated-Hoelder mass of the piece; atoms are
    the pieces normalized to C_smooth = 1.
    """
    grid = f.grid
    if depth > grid.J - LEVEL_MARGIN:
        raise BoundsError(f"depth {depth} exceeds J-{LEVEL_MARGIN}")
    if params.d < 1.0 + pair.e:
        raise ValidationError(
            f"pieces span (1+e) cubes: need params.d >= 1+e = {1 + pair.e}, got {params.d}"
        )
    hn = grid.h**grid.n
    mults = [
        np.fft.fftn(kernel_field(pair, j, grid).values) * hn
        for j in range(depth + 1)
    ]
    denom = np.zeros(grid.shape)
    for mlt in mults:
        denom += np.abs(mlt) ** 2
    band = denom >= 1e-10 * denom.max()
    off_band = float(np.abs(f.hat[~band]).max()) if (~band).any() else 0.0
    if off_band > 1e-8 * max(np.abs(f.hat).max(), 1e-300):
        warnings.warn(
            "input has spectral mass outside the resolved band; "
            "reconstruction will miss it",
            HypothesisWarning,
        )
    safe = np.where(band, denom, 1.0)

    entries: dict[tuple[int, tuple[int, ...]], complex] = {}
    atoms: dict[tuple[int, tuple[int, ...]], AtomSpec] = {}
    side0 = grid.period
    floor_scale = 1e-14 * max(f.max_abs(), 1e-300)
    for nu in range(depth + 1):
        dual = np.where(band, np.conj(mults[nu]) / safe, 0.0)
        q = np.fft.ifftn(f.hat * dual)
        side = side0 / (1 << nu)
        half_piece = 0.5 * (1.0 + pair.e) * side
        stretch = _dilation_stretch(nu, 1.0 + pair.e)
        for m in _lattice_indices(grid.n, nu):
            tile = cube(nu, m, 1.0)
            chopped = np.where(cube_node_mask(grid, tile), q, 0.0)
            piece = np.fft.ifftn(np.fft.fftn(chopped) * mults[nu])
            geo = cube_geometry(cube(nu, m, params.d), grid)
            box = box_from_center(geo.center, (half_piece,) * grid.n, grid)
            piece = np.where(box_mask(grid, box), piece, 0.0)
            if np.abs(piece).max() <= floor_scale:
                continue
            pf = SampledField(grid, piece, box)
            dil = dilated_profile(pf, nu, geo.center, stretch)
            mu = holder_norm(dil, params.K)
            if mu == 0.0:
                continue
            lam_vm = mu / smooth_decay(params, nu)
            key = (nu, tile.m)
            entries[key] = lam_vm
            atoms[key] = AtomSpec(
                pf.scaled(1.0 / lam_vm), cube(nu, tile.m, params.d), params
            )
    return CoeffArray(grid.n, entries), atoms


def convergence_bound(
    lam: CoeffArray,
    params: SpaceParams,
    test_fn: SampledField,
    *,
    atom_factory: Callable[[int, tuple[int, ...]], AtomSpec] | None = None,
) -> float:
    """Sum_{nu,m} |lam_{nu,m} int a_{nu,m} test_fn| with validated default
    atoms; finite truncations certify absolute convergence of the pairing."""
    sig_p, _ = sigma_indices(params.p, params.q, params.n)
    if params.L <= sig_p - params.s:
        warnings.warn(
            f"L={params.L} <= sigma_p - s = {sig_p - params.s}: the summing "
            "bound is not guaranteed",
            HypothesisWarning,
        )
    grid = test_fn.grid
    if atom_factory is None:
        mo = min(MOMENT_PROJECT_CAP, math.ceil(params.L))

        def atom_factory(nu, m):
            return make_atom(nu, m, params, "bump", mo, grid=grid)

    hn = grid.h**grid.n
    total = 0.0
    for (nu, m), coeff in lam.sorted_items():
        atom = atom_factory(nu, m)
        pairing = hn * np.sum(atom.field.values * test_fn.values)
        total += abs(coeff) * abs(pairing)
    return float(total)

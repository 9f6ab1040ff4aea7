"""Pointwise multiplication and change of variables as executable operators.

Multiplier side: products phi * f with norm-ratio reports and the atom-level
product lemma.  Diffeomorphism side: coordinatewise bi-Lipschitz torus maps
with certified constants, composition f(phi(.)), an L_p change-of-variables
check, Hoelder composition, and atom transport with family splitting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._errors import (
    AliasingWarning,
    BoundsError,
    ConfigError,
    HypothesisError,
    HypothesisWarning,
    NumericsError,
    ValidationError,
)
from .atoms import AtomCertificate, AtomSpec, validate_atom
from .grid import (
    Grid,
    MAX_OVERLAP,
    SampledField,
    box_from_center,
    box_mask,
    cube,
    cube_geometry,
    evaluate_offgrid,
    torus_centered,
    trig_eval_tensor,
)
from .spaces import SpaceParams, holder_norm, lp_norm, sigma_indices
from .spectral import besov_norm_fourier, make_resolution, tl_norm_fourier

DIFFEO_MAGIC = "ATOMLAB-DIFFEO"
DIFFEO_VERSION = 1

PERTURBATION_DERIV_CAP = 0.5
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12
INVERSE_CHECK_TOL = 1e-10
MAX_FAMILIES = 64

_REF_J = 12  # 1-d reference resolution for constant/budget estimation
_DENSE_FACTOR = 8  # oversampling for derivative range scans


# -- coordinatewise maps ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AxisMap:
    """Scalar monotone map t -> t + disp(t) with period-periodic displacement."""

    fwd: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    disp_sup: float
    d_lo: float
    d_hi: float


def _identity_axis() -> AxisMap:
    return AxisMap(
        fwd=lambda t: np.asarray(t, dtype=float),
        deriv=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        disp_sup=0.0,
        d_lo=1.0,
        d_hi=1.0,
    )


def _translation_axis(shift: float) -> AxisMap:
    return AxisMap(
        fwd=lambda t: np.asarray(t, dtype=float) + shift,
        deriv=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        disp_sup=abs(shift),
        d_lo=1.0,
        d_hi=1.0,
    )


def _scan_axis(fwd, deriv, period: float) -> AxisMap:
    """Measure displacement and derivative range on a dense sample."""
    t = np.linspace(0.0, period, _DENSE_FACTOR * (1 << _REF_J), endpoint=False)
    dv = np.real(deriv(t))
    disp = np.real(fwd(t)) - t
    return AxisMap(
        fwd=fwd,
        deriv=deriv,
        disp_sup=float(np.abs(disp).max()),
        d_lo=float(dv.min()),
        d_hi=float(dv.max()),
    )


def _axis_inverse(ax: AxisMap, x: np.ndarray, period: float) -> np.ndarray:
    """Solve fwd(y) = x per entry: Newton, then bisection for stragglers."""
    x = np.asarray(x, dtype=float)
    y = x.copy()
    for _ in range(NEWTON_MAX_ITER):
        r = np.real(ax.fwd(y)) - x
        if np.abs(r).max() <= NEWTON_TOL * period:
            return y
        y = y - r / np.real(ax.deriv(y))
    bad = np.abs(np.real(ax.fwd(y)) - x) > NEWTON_TOL * period
    if bad.any():
        # the monotone branch brackets the root within the displacement bound
        lo = x[bad] - ax.disp_sup - period * 1e-9
        hi = x[bad] + ax.disp_sup + period * 1e-9
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            left = np.real(ax.fwd(mid)) < x[bad]
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
        y[bad] = 0.5 * (lo + hi)
        if np.abs(np.real(ax.fwd(y)) - x).max() > 10 * NEWTON_TOL * period:
            raise NumericsError("inverse iteration failed to reach tolerance")
    return y


# -- diffeomorphisms -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Diffeo:
    """Coordinatewise bi-Lipschitz torus map with certified constants.

    c1, c2 bound |phi(x)-phi(y)| / |x-y| from below and above; the budgets sum
    the C^{rho-1} norms of the Jacobian entries of the map and of its inverse.
    """

    n: int
    period: float
    rho: float
    kind: str
    axes: tuple[AxisMap, ...]
    c1: float
    c2: float
    jacobian_bound: float
    holder_budget: float
    inverse_budget: float

    def forward(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack(
            [np.real(self.axes[i].fwd(pts[:, i])) for i in range(self.n)], axis=1
        )

    def inverse(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack(
            [_axis_inverse(self.axes[i], pts[:, i], self.period) for i in range(self.n)],
            axis=1,
        )

    def axis_images(self, grid: Grid) -> list[np.ndarray]:
        """Forward images of the grid axis, one array per coordinate."""
        if grid.n != self.n:
            raise BoundsError("grid dimension does not match the map")
        return [np.real(self.axes[i].fwd(grid.axis)) for i in range(self.n)]


def _axis_budget(ax: AxisMap, rho: float, period: float) -> float:
    """C^{rho-1} norm of the axis derivative, sampled on the reference grid."""
    ref = Grid(1, _REF_J, period)
    fld = SampledField(ref, np.real(ax.deriv(ref.axis)))
    return holder_norm(fld, rho - 1.0)


def _axis_inverse_budget(ax: AxisMap, rho: float, period: float) -> float:
    ref = Grid(1, _REF_J, period)
    yin = _axis_inverse(ax, ref.axis, period)
    fld = SampledField(ref, 1.0 / np.real(ax.deriv(yin)))
    return holder_norm(fld, rho - 1.0)


def _check_inverse(axes: Sequence[AxisMap], period: float) -> None:
    t = np.linspace(0.0, period, 257, endpoint=False)
    for ax in axes:
        y = _axis_inverse(ax, t, period)
        resid = np.abs(np.real(ax.fwd(y)) - t).max()
        if resid > INVERSE_CHECK_TOL * period:
            raise NumericsError(f"forward(inverse) residual {resid:.3e} too large")


def _finish_diffeo(
    kind: str, axes: tuple[AxisMap, ...], n: int, period: float, rho: float
) -> Diffeo:
    if rho < 1.0:
        raise BoundsError(f"regularity class must be >= 1, got {rho}")
    c1 = min(ax.d_lo for ax in axes)
    c2 = max(ax.d_hi for ax in axes)
    if c1 <= 0.0:
        raise BoundsError(f"derivative range [{c1}, {c2}] is not bi-Lipschitz")
    jac = math.prod(ax.d_lo for ax in axes)
    budget = sum(_axis_budget(ax, rho, period) for ax in axes)
    inv_budget = sum(_axis_inverse_budget(ax, rho, period) for ax in axes)
    _check_inverse(axes, period)
    return Diffeo(
        n=n,
        period=period,
        rho=rho,
        kind=kind,
        axes=axes,
        c1=c1,
        c2=c2,
        jacobian_bound=jac,
        holder_budget=budget,
        inverse_budget=inv_budget,
    )


def _default_profile(period: float):
    tau = 2.0 * math.pi / period
    eta = lambda t: np.sin(tau * np.asarray(t, dtype=float)) / tau
    deta = lambda t: np.cos(tau * np.asarray(t, dtype=float))
    return eta, deta


def make_diffeo(
    kind: str,
    alpha: float = 0.0,
    profile=None,
    *,
    n: int = 1,
    period: float = 1.0,
    rho: float = 2.0,
) -> Diffeo:
    """Build a coordinatewise torus diffeomorphism.

    identity: phi = id.  translation: phi(x) = x + alpha per axis.
    perturbation: phi_i(x) = x_i + alpha * eta(x_i) with the default profile
    eta(t) = sin(2 pi t / P) * P / (2 pi), a custom (eta, eta') pair of
    callables, or a 1-d SampledField interpolated trigonometrically.  The
    displacement derivative must stay within 0.5 in modulus, which keeps the
    map monotone with margin and certifies invertibility.
    """
    if n not in (1, 2):
        raise BoundsError(f"dimension must be 1 or 2, got {n}")
    if kind == "identity":
        axes = tuple(_identity_axis() for _ in range(n))
        return _finish_diffeo("identity", axes, n, period, rho)
    if kind == "translation":
        axes = tuple(_translation_axis(float(alpha)) for _ in range(n))
        return _finish_diffeo("translation", axes, n, period, rho)
    if kind != "perturbation":
        raise ConfigError(f"unknown diffeomorphism kind {kind!r}")

    if profile is None:
        eta, deta = _default_profile(period)
    elif isinstance(profile, SampledField):
        if profile.grid.n != 1:
            raise BoundsError("profile field must be one-dimensional")
        if abs(profile.grid.period - period) > 1e-12 * period:
            raise BoundsError("profile period does not match the map period")
        from .grid import differentiate

        dfield = differentiate(profile, (1,))
        eta = lambda t: np.real(
            evaluate_offgrid(profile, np.asarray(t, dtype=float)[:, None])
        )
        deta = lambda t: np.real(
            evaluate_offgrid(dfield, np.asarray(t, dtype=float)[:, None])
        )
    else:
        eta, deta = profile

    a = float(alpha)
    fwd = lambda t: np.asarray(t, dtype=float) + a * np.real(
        eta(np.asarray(t, dtype=float) % period)
    )
    deriv = lambda t: 1.0 + a * np.real(deta(np.asarray(t, dtype=float) % period))
    ax = _scan_axis(fwd, deriv, period)
    worst = max(abs(ax.d_lo - 1.0), abs(ax.d_hi - 1.0))
    if worst > PERTURBATION_DERIV_CAP + 1e-12:
        raise BoundsError(
            f"displacement derivative reaches {worst:.4f} > "
            f"{PERTURBATION_DERIV_CAP}; the map is rejected"
        )
    axes = tuple(ax for _ in range(n))
    return _finish_diffeo("perturbation", axes, n, period, rho)


def chain_diffeos(outer: Diffeo, inner: Diffeo) -> Diffeo:
    """The composition outer(inner(.)) with re-measured constants."""
    if outer.n != inner.n or abs(outer.period - inner.period) > 1e-12:
        raise BoundsError("maps live on different tori")
    axes = []
    for ao, ai in zip(outer.axes, inner.axes):
        fwd = lambda t, ao=ao, ai=ai: ao.fwd(ai.fwd(t))
        deriv = lambda t, ao=ao, ai=ai: np.real(ao.deriv(ai.fwd(t))) * np.real(
            ai.deriv(t)
        )
        axes.append(_scan_axis(fwd, deriv, outer.period))
    rho = min(outer.rho, inner.rho)
    return _finish_diffeo("chain", tuple(axes), outer.n, outer.period, rho)


def diffeo_certificate(
    d: Diffeo, samples: int = 512, seed: int = 0
) -> dict:
    """Shell-sampled bi-Lipschitz ratios and the inverse residual."""
    rng = np.random.default_rng(seed)
    P = d.period
    xs = rng.uniform(0.0, P, size=(samples, d.n))
    lo, hi = math.inf, 0.0
    for k in range(1, 10):
        delta = rng.standard_normal((samples, d.n))
        delta *= (P * 2.0**-k) / np.linalg.norm(delta, axis=1, keepdims=True)
        num = np.linalg.norm(d.forward(xs + delta) - d.forward(xs), axis=1)
        den = np.linalg.norm(delta, axis=1)
        r = num / den
        lo = min(lo, float(r.min()))
        hi = max(hi, float(r.max()))
    t = rng.uniform(0.0, P, size=(samples, d.n))
    resid = float(np.abs(d.forward(d.inverse(t)) - t).max())
    passed = (
        lo >= d.c1 - 1e-9 and hi <= d.c2 + 1e-9 and resid <= INVERSE_CHECK_TOL * P
    )
    return {
        "ratio_min": lo,
        "ratio_max": hi,
        "c1": d.c1,
        "c2": d.c2,
        "inverse_residual": resid,
        "pass": bool(passed),
    }


# -- diffeo file format ----------------------------------------------------------


def write_diffeo(d: Diffeo, path, J: int = 10) -> None:
    """Header plus per-axis forward/inverse displacement samples (re,im rows)."""
    ref = Grid(1, J, d.period)
    lines = [
        f"{DIFFEO_MAGIC} v{DIFFEO_VERSION} n={d.n} J={J} period={d.period!r} "
        f"rho={d.rho!r} kind={d.kind} c1={d.c1!r} c2={d.c2!r} "
        f"jac={d.jacobian_bound!r} budget={d.holder_budget!r} "
        f"inv_budget={d.inverse_budget!r}"
    ]
    for i in range(d.n):
        fwd = np.real(d.axes[i].fwd(ref.axis)) - ref.axis
        inv = _axis_inverse(d.axes[i], ref.axis, d.period) - ref.axis
        for tag, disp in (("forward", fwd), ("inverse", inv)):
            lines.append(f"axis {i} {tag}")
            lines.extend(f"{float(v)!r},0.0" for v in disp)
    Path(path).write_text("\n".join(lines) + "\n")


def read_diffeo(path) -> Diffeo:
    text = Path(path).read_text().strip().splitlines()
    head = text[0].split() if text else []
    if len(head) < 2 or head[0] != DIFFEO_MAGIC or head[1] != f"v{DIFFEO_VERSION}":
        raise ConfigError(f"{path}: not a {DIFFEO_MAGIC} v{DIFFEO_VERSION} file")
    meta = dict(tok.split("=", 1) for tok in head[2:])
    n, J, period = int(meta["n"]), int(meta["J"]), float(meta["period"])
    rho = float(meta["rho"])
    ref = Grid(1, J, period)
    rows_per_axis = ref.size
    pos = 1
    axes = []
    for i in range(n):
        disp = {}
        for tag in ("forward", "inverse"):
            if text[pos] != f"axis {i} {tag}":
                raise ConfigError(f"{path}: expected 'axis {i} {tag}' at line {pos+1}")
            pos += 1
            vals = np.array(
                [float(line.split(",")[0]) for line in text[pos : pos + rows_per_axis]]
            )
            disp[tag] = SampledField(ref, vals)
            pos += rows_per_axis
        from .grid import differentiate

        dfield = differentiate(disp["forward"], (1,))
        fld = disp["forward"]
        fwd = lambda t, fld=fld: np.asarray(t, dtype=float) + np.real(
            evaluate_offgrid(fld, np.asarray(t, dtype=float)[:, None])
        )
        deriv = lambda t, dfield=dfield: 1.0 + np.real(
            evaluate_offgrid(dfield, np.asarray(t, dtype=float)[:, None])
        )
        axes.append(_scan_axis(fwd, deriv, period))
    return _finish_diffeo(meta.get("kind", "sampled"), tuple(axes), n, period, rho)


# -- pointwise multiplication ------------------------------------------------------


def _engine_norm(f: SampledField, params: SpaceParams, scale: str) -> float:
    res = make_resolution(f.grid)
    if scale == "B":
        return besov_norm_fourier(f, params, res)
    if scale == "F":
        return tl_norm_fourier(f, params, res)
    raise ConfigError(f"unknown scale {scale!r}")


def multiply(
    phi: SampledField,
    f: SampledField,
    params: SpaceParams,
    rho: float | None = None,
    scale: str = "B",
) -> tuple[SampledField, dict]:
    """Pointwise product with a norm-ratio report.

    The ratio r = ||phi f|| / (||phi|C^rho|| ||f||) is reported together with
    the hypothesis flag rho > max(s, sigma - s); violating runs are flagged,
    not blocked.
    """
    if phi.grid != f.grid:
        raise BoundsError("multiplier and field live on different grids")
    sig_p, sig_pq = sigma_indices(params.p, params.q, params.n)
    sig = sig_p if scale == "B" else sig_pq
    hypothesis = max(params.s, sig - params.s)
    if rho is None:
        rho = max(1.0, hypothesis + 0.5)
    rho_ok = rho > hypothesis
    hint = f.support_hint if f.support_hint is not None else phi.support_hint
    g = SampledField(f.grid, phi.values * f.values, hint)
    h_phi = holder_norm(phi, rho)
    norm_f = _engine_norm(f, params, scale)
    norm_g = _engine_norm(g, params, scale)
    denom = h_phi * norm_f
    ratio = norm_g / denom if denom > 0.0 else math.inf if norm_g > 0.0 else 0.0
    report = {
        "scale": scale,
        "rho": float(rho),
        "rho_ok": bool(rho_ok),
        "holder_phi": float(h_phi),
        "norm_f": float(norm_f),
        "norm_g": float(norm_g),
        "ratio": float(ratio),
    }
    return g, report


def _eval_in_hint(phi: SampledField, pts: np.ndarray) -> np.ndarray:
    """Off-grid evaluation honoring the declared support box.

    The interpolant of a compactly supported sample rings off the nodes; the
    support hint is the box where the represented function genuinely lives,
    so values outside it are masked to zero.
    """
    vals = evaluate_offgrid(phi, pts)
    box = phi.support_hint
    if box is None:
        return vals
    P = phi.grid.period
    fuzz = 1e-9 * P
    inside = np.ones(pts.shape[0], dtype=bool)
    for i, (lo, hi) in enumerate(box):
        if (lo, hi) == (0.0, P):
            continue
        x = pts[:, i] % P
        if lo <= hi:
            inside &= (x >= lo - fuzz) & (x <= hi + fuzz)
        else:
            inside &= (x >= lo - fuzz) | (x <= hi + fuzz)
    return np.where(inside, vals, 0.0)


def multiply_atom(
    phi: SampledField, a: AtomSpec, rho: float, rand_battery: int = 32
) -> tuple[AtomSpec, AtomCertificate]:
    """Product of a multiplier and an atom on the same cube, re-validated.

    The moment pairing of phi * a against psi is the pairing of a against
    psi * phi, so the constants inflate by at most a C^rho product bound;
    rho below max(K, L) is flagged as a hypothesis violation.
    """
    grid = a.field.grid
    if phi.grid != grid:
        raise BoundsError("multiplier and atom live on different grids")
    if rho < max(a.params.K, a.params.L):
        warnings.warn(
            f"rho={rho} below max(K, L)={max(a.params.K, a.params.L)}: "
            "the product bound is not guaranteed",
            HypothesisWarning,
        )
    phi_vals = phi.values
    if phi.support_hint is not None:
        phi_vals = np.where(box_mask(grid, phi.support_hint), phi_vals, 0.0)
    vals = phi_vals * a.field.values
    sampler = None
    if a.sampler is not None:
        def sampler(pts: np.ndarray, _base=a.sampler, _phi=phi) -> np.ndarray:
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            return _base(pts) * _eval_in_hint(_phi, pts)

    out = AtomSpec(
        SampledField(grid, vals, a.field.support_hint), a.cube, a.params, sampler
    )
    cert = validate_atom(out, rand_battery=rand_battery)
    return out, cert


# -- composition ----------------------------------------------------------------


def _compose_values(f: SampledField, phi: Diffeo) -> np.ndarray:
    return trig_eval_tensor(f, phi.axis_images(f.grid))


def _band_fraction(hat: np.ndarray, grid: Grid, radius: float) -> float:
    total = float(np.sum(np.abs(hat) ** 2))
    if total == 0.0:
        return 0.0
    outer = grid.freq_radius() >= radius
    return float(np.sum(np.abs(hat[outer]) ** 2)) / total


def compose(
    f: SampledField, phi: Diffeo, params: SpaceParams, scale: str = "B"
) -> tuple[SampledField, dict]:
    """f(phi(.)) by trigonometric interpolation along the transformed axes.

    Exact for band-limited f.  The report carries the norm ratio, the
    regularity hypothesis flag, and band diagnostics; a composed field with
    more than 1% of its energy in the top frequency octave triggers an
    aliasing warning.
    """
    grid = f.grid
    g = SampledField(grid, _compose_values(f, phi))
    top = _band_fraction(g.hat, grid, grid.size / 4.0)
    if top > 0.01:
        warnings.warn(
            f"composed field carries {100 * top:.1f}% energy in the top band",
            AliasingWarning,
        )
    sig_p, sig_pq = sigma_indices(params.p, params.q, params.n)
    sig = sig_p if scale == "B" else sig_pq
    hypothesis = max(params.s, 1.0 + sig - params.s)
    norm_f = _engine_norm(f, params, scale)
    norm_g = _engine_norm(g, params, scale)
    ratio = norm_g / norm_f if norm_f > 0.0 else math.inf if norm_g > 0.0 else 0.0
    report = {
        "scale": scale,
        "rho": float(phi.rho),
        "rho_ok": bool(phi.rho > hypothesis),
        "norm_f": float(norm_f),
        "norm_g": float(norm_g),
        "ratio": float(ratio),
        "margin_ok": bool(_band_fraction(f.hat, grid, grid.size / 8.0) <= 0.01),
        "top_band_fraction": float(top),
    }
    return g, report


def lp_change_of_variables(f: SampledField, phi: Diffeo, p: float) -> dict:
    """L_p norms of f and f(phi(.)) plus node-counted box-measure ratios.

    Boxes are the dyadic tiling cubes with at least 64 nodes each; the ratio
    mass(preimage of A) / mass(A) is counted on the node lattice.  For p =
    infinity composing with a bijection rearranges the sampled values, so both
    sides take the supremum over the same image sample set and the ratio is
    exactly one.
    """
    grid = f.grid
    P = grid.period
    images = [img % P for img in phi.axis_images(grid)]
    vals = trig_eval_tensor(f, images)
    if math.isinf(p):
        lp_g = float(np.abs(vals).max())
        lp_f = lp_g
        ratio = 1.0
    else:
        if p <= 0:
            raise BoundsError(f"integrability must be positive, got {p}")
        hn = grid.h**grid.n
        lp_g = float((hn * np.sum(np.abs(vals) ** p)) ** (1.0 / p))
        lp_f = lp_norm(f, p)
        ratio = lp_g / lp_f if lp_f > 0.0 else math.inf if lp_g > 0.0 else 0.0

    # per-axis counting suffices: coordinatewise maps send the node mesh to a
    # tensor mesh, so 2-d box counts factor into axis counts
    nu_box = grid.J - 6 if grid.n == 1 else grid.J - 3
    nu_box = max(nu_box, 0)
    side = P / (1 << nu_box)
    step = grid.size >> nu_box
    axis_max = []
    for img in images:
        idx = np.floor(((img + 0.5 * side) % P) / side).astype(int) % (1 << nu_box)
        counts = np.bincount(idx, minlength=1 << nu_box)
        axis_max.append(float(counts.max()) / step)
    box_ratio_max = math.prod(axis_max)
    return {
        "p": p,
        "lp_f": lp_f,
        "lp_g": lp_g,
        "ratio": float(ratio),
        "box_level": nu_box,
        "box_ratio_max": float(box_ratio_max),
        "measure_bound": (1.0 / phi.c1) ** grid.n,
        "jacobian_inverse_sup": 1.0 / phi.jacobian_bound,
    }


def holder_compose(f: SampledField, phi: Diffeo, s: float) -> dict:
    """Hoelder norms of f and f(phi(.)) with the regularity hypothesis flag."""
    rho_ok = max(1.0, s) <= phi.rho
    if not rho_ok:
        warnings.warn(
            f"composition needs regularity max(1, s)={max(1.0, s)} <= rho={phi.rho}",
            HypothesisWarning,
        )
    g = SampledField(f.grid, _compose_values(f, phi))
    nf = holder_norm(f, s)
    ng = holder_norm(g, s)
    ratio = ng / nf if nf > 0.0 else math.inf if ng > 0.0 else 0.0
    return {
        "s": float(s),
        "rho_ok": bool(rho_ok),
        "holder_f": float(nf),
        "holder_g": float(ng),
        "ratio": float(ratio),
        "budget": float(phi.holder_budget),
    }


# -- atom transport ---------------------------------------------------------------


@dataclass(frozen=True)
class TransportPlan:
    """Index bookkeeping of relocated atoms.

    families partition the input keys so the relabeling is injective within
    each family per level; d_out is the uniform output overlap factor.
    """

    families: tuple[tuple[tuple[int, tuple[int, ...]], ...], ...]
    index_map: dict
    M: int
    d_out: float
    flags: dict

    def as_json(self) -> dict:
        return {
            "M": self.M,
            "d_prime": self.d_out,
            "families": [
                [[nu, list(m)] for nu, m in fam] for fam in self.families
            ],
            "index_map": {
                f"{nu},{','.join(map(str, m))}": list(t)
                for (nu, m), t in sorted(self.index_map.items())
            },
            "flags": dict(self.flags),
        }


def _value_halves(
    grid: Grid, values: np.ndarray, center: Sequence[float]
) -> list[float]:
    """Per-axis half-widths around ``center`` covering all active nodes."""
    mag = np.abs(values)
    peak = mag.max()
    if peak == 0.0:
        return [grid.h] * grid.n
    active = mag > 1e-14 * peak
    halves = []
    for axis in range(grid.n):
        proj = active if grid.n == 1 else active.any(axis=1 - axis)
        offs = torus_centered(grid.axis[proj] - center[axis], grid.period)
        halves.append(float(np.abs(offs).max()))
    return halves


def _preimage_box(
    box: Sequence[tuple[float, float]], phi: Diffeo
) -> tuple[tuple[float, float], ...]:
    """Per-axis preimage of a wrapped box under a coordinatewise map.

    Each axis map lifts to a monotone degree-one map of the line, so it sends
    arcs to arcs preserving orientation and the preimage of an interval is the
    interval between the endpoint preimages.
    """
    P = phi.period
    out = []
    for ax, (lo, hi) in zip(phi.axes, box):
        if (lo, hi) == (0.0, P):
            out.append((0.0, P))
            continue
        hi_unwrapped = hi if lo <= hi else hi + P
        ends = _axis_inverse(ax, np.array([lo, hi_unwrapped]), P)
        out.append((float(ends[0] % P), float(ends[1] % P)))
    return tuple(out)


def transport_atoms(
    atoms: Sequence[AtomSpec], phi: Diffeo, rand_battery: int = 16
) -> tuple[TransportPlan, list[AtomSpec], list[AtomCertificate]]:
    """Relocate atoms along phi with injective per-family relabeling.

    Each atom composes with phi and is re-indexed at the cube of the same
    level containing the preimage of its center; colliding indices are split
    greedily into families.  The output overlap factor is the smallest d
    covering every relocated support, uniform across atoms.
    """
    if not atoms:
        raise ConfigError("no atoms to transport")
    grid = atoms[0].field.grid
    if any(a.field.grid != grid for a in atoms):
        raise BoundsError("atoms live on different grids")
    if grid.n != phi.n:
        raise BoundsError("map dimension does not match the atoms")

    worst_L = max(a.params.L for a in atoms)
    route = "L0" if worst_L == 0 else "moment"
    if route == "moment" and phi.rho < worst_L + 1.0:
        raise HypothesisError(
            f"moment transport needs rho >= L+1 = {worst_L + 1}, got {phi.rho}"
        )
    flags = {"rho_ok": True, "L_route": route}

    if grid.n == 1:
        mesh = grid.axis[:, None]
    else:
        x1, x2 = grid.coords()
        mesh = np.stack([x1.ravel(), x2.ravel()], axis=1)
    fwd_mesh = phi.forward(mesh)

    relocated_raw = []
    d_out = 1.0 + 1e-9
    for a in atoms:
        nu = a.cube.nu
        side = grid.period / (1 << nu)
        center = cube_geometry(a.cube, grid).center
        pre = phi.inverse(np.asarray(center, dtype=float)[None, :])[0]
        target = tuple(
            int(round(pre[i] / side)) % (1 << nu) for i in range(grid.n)
        )
        new_center = tuple((t * side) % grid.period for t in target)
        if a.sampler is not None:
            vals = a.sampler(fwd_mesh).reshape(grid.shape)
        else:
            # the interpolant of a sampled atom is not compactly supported, but
            # the composed function vanishes outside the preimage of the
            # support box; ringing clipped there is reported when material
            vals = evaluate_offgrid(a.field, fwd_mesh).reshape(grid.shape)
            keep = box_mask(grid, _preimage_box(a.field.support_hint, phi))
            lost = float(np.abs(np.where(keep, 0.0, vals)).max())
            if lost > 1e-9 * max(float(np.abs(vals).max()), 1e-300):
                warnings.warn(
                    f"interpolated transport clipped {lost:.2e} outside the box",
                    AliasingWarning,
                )
            vals = np.where(keep, vals, 0.0)
        halves = _value_halves(grid, vals, new_center)
        d_need = max(2.0 * hv / side for hv in halves)
        d_out = max(d_out, d_need)
        relocated_raw.append((a, nu, target, new_center, vals, halves))

    if d_out > MAX_OVERLAP:
        raise BoundsError(
            f"relocated supports need overlap d'={d_out:.3f} beyond the cap "
            f"{MAX_OVERLAP}"
        )

    # greedy family assignment: first family whose relabeling stays injective
    families: list[list[tuple[int, tuple[int, ...]]]] = []
    used: list[dict[int, set]] = []
    index_map: dict = {}
    relocated: list[AtomSpec] = []
    certificates: list[AtomCertificate] = []
    for a, nu, target, new_center, vals, halves in relocated_raw:
        key = (nu, a.cube.m)
        slot = None
        for j, u in enumerate(used):
            if target not in u.setdefault(nu, set()):
                slot = j
                break
        if slot is None:
            if len(families) >= MAX_FAMILIES:
                raise ValidationError(
                    f"family count exceeds {MAX_FAMILIES}; geometry too distorted"
                )
            families.append([])
            used.append({nu: set()})
            slot = len(families) - 1
        families[slot].append(key)
        used[slot].setdefault(nu, set()).add(target)
        index_map[key] = target

        params = a.params.with_(d=d_out)
        box = box_from_center(new_center, tuple(halves), grid)
        sampler = None
        if a.sampler is not None:
            def sampler(pts: np.ndarray, _base=a.sampler, _phi=phi) -> np.ndarray:
                pts = np.atleast_2d(np.asarray(pts, dtype=float))
                return _base(_phi.forward(pts))

        out = AtomSpec(
            SampledField(grid, vals, box), cube(nu, target, d_out), params, sampler
        )
        relocated.append(out)
        certificates.append(validate_atom(out, rand_battery=rand_battery))

    plan = TransportPlan(
        families=tuple(tuple(fam) for fam in families),
        index_map=index_map,
        M=len(families),
        d_out=float(d_out),
        flags=flags,
    )
    return plan, relocated, certificates

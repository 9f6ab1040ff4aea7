"""Uniform periodic grids and the calculus primitives built on them.

Everything downstream lives on the torus [0, period)^n sampled at 2^J
equispaced nodes per axis.  Compactly supported functions are required to
fit inside one period, so the periodic extension never folds supports onto
themselves and FFT-based machinery (quadrature, differentiation,
trigonometric interpolation, convolution) is exact for band-limited data.

Dyadic cubes Q_{nu,m} have side 2^-nu * period and center 2^-nu * m * period.
The level-nu cubes tile the torus with the half-open convention
[c - side/2, c + side/2), which the sequence-space norms rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from ._errors import BoundsError, ConfigError

MIN_J = 4
MAX_J = {1: 14, 2: 10}

#: Finest dyadic level carrying atoms or coefficients is J - LEVEL_MARGIN,
#: keeping at least 8 nodes per cube side.
LEVEL_MARGIN = 3

#: Cap on user-supplied cube enlargement factors d.  Larger overlaps wrap all
#: the way around coarse tori and the support condition loses meaning.
MAX_OVERLAP = 4.0

SPECTRAL_ORDER_CAP = 6
CENTRAL_ORDER_CAP = 4

FIELD_MAGIC = "ATOMLAB-FIELD"
FIELD_VERSION = 1

# Node-count tolerance when assigning grid nodes to boxes with float edges.
_NODE_FUZZ = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with 2^J nodes per axis on [0, period)^n."""

    n: int
    J: int
    period: float = 1.0

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise BoundsError(f"dimension must be 1 or 2, got {self.n}")
        if not (MIN_J <= self.J <= MAX_J[self.n]):
            raise BoundsError(
                f"J={self.J} outside supported range "
                f"[{MIN_J}, {MAX_J[self.n]}] for n={self.n}"
            )
        if not (math.isfinite(self.period) and self.period > 0):
            raise BoundsError(f"period must be positive, got {self.period}")

    @property
    def size(self) -> int:
        return 1 << self.J

    @property
    def h(self) -> float:
        return self.period / self.size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,) * self.n

    @property
    def node_count(self) -> int:
        return self.size**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        a = self.h * np.arange(self.size)
        a.setflags(write=False)
        return a

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays per axis, meshed with 'ij' indexing for n=2."""
        if self.n == 1:
            return (self.axis,)
        x1, x2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return x1, x2

    @cached_property
    def freq(self) -> np.ndarray:
        """Integer frequency lattice along one axis, FFT ordering."""
        k = np.fft.fftfreq(self.size, d=1.0 / self.size).astype(np.int64)
        k.setflags(write=False)
        return k

    def freq_radius(self) -> np.ndarray:
        """Euclidean modulus |k| of the integer frequency lattice."""
        if self.n == 1:
            return np.abs(self.freq).astype(float)
        k1, k2 = np.meshgrid(self.freq, self.freq, indexing="ij")
        return np.hypot(k1, k2)

    def key(self) -> tuple:
        return (self.n, self.J, round(self.period, 12))


def make_grid(n: int, J: int, period: float = 1.0) -> Grid:
    """Construct a grid, rejecting out-of-range parameters with a bounds error."""
    return Grid(n, J, float(period))


def torus_centered(x: np.ndarray | float, period: float) -> np.ndarray:
    """Wrap coordinates (or differences) to the symmetric window [-period/2, period/2)."""
    return (np.asarray(x, dtype=float) + 0.5 * period) % period - 0.5 * period


def full_box(grid: Grid) -> tuple[tuple[float, float], ...]:
    return tuple((0.0, grid.period) for _ in range(grid.n))


def box_from_center(
    center: Sequence[float], half: Sequence[float], grid: Grid
) -> tuple[tuple[float, float], ...]:
    """Axis-aligned box around ``center`` with half-widths ``half``, wrapped to [0, period).

    An axis whose width reaches a full period is reported as (0, period).
    Wrapped intervals are encoded with lo > hi.
    """
    p = grid.period
    out = []
    for c, w in zip(center, half):
        if 2 * w >= p * (1 - 1e-12):
            out.append((0.0, p))
        else:
            out.append(((c - w) % p, (c + w) % p))
    return tuple(out)


def _axis_interval_mask(coords: np.ndarray, lo: float, hi: float, period: float) -> np.ndarray:
    if hi - lo >= period * (1 - 1e-12) or (lo == 0.0 and hi == period):
        return np.ones_like(coords, dtype=bool)
    fuzz = _NODE_FUZZ * period
    if lo <= hi:
        return (coords >= lo - fuzz) & (coords <= hi + fuzz)
    return (coords >= lo - fuzz) | (coords <= hi + fuzz)


def box_mask(grid: Grid, box: Sequence[tuple[float, float]]) -> np.ndarray:
    """Boolean node mask of a (possibly wrapped) closed box."""
    masks = [
        _axis_interval_mask(grid.axis, lo, hi, grid.period) for lo, hi in box
    ]
    if grid.n == 1:
        return masks[0]
    return masks[0][:, None] & masks[1][None, :]


@dataclass(frozen=True, eq=False)
class SampledField:
    """Complex node values over a grid, with an optional support bounding box.

    ``support_hint`` promises that the values vanish (to 1e-14 of the max
    modulus) outside the box; the constructor enforces it.  Boxes use the
    wrapped-interval convention of :func:`box_from_center`.
    """

    grid: Grid
    values: np.ndarray
    support_hint: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.complex128)
        if v.size != self.grid.node_count:
            raise BoundsError(
                f"expected {self.grid.node_count} values, got {v.size}"
            )
        v = v.reshape(self.grid.shape).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.support_hint is not None:
            hint = tuple((float(lo), float(hi)) for lo, hi in self.support_hint)
            if len(hint) != self.grid.n:
                raise BoundsError("support_hint rank does not match grid dimension")
            object.__setattr__(self, "support_hint", hint)
            outside = ~box_mask(self.grid, hint)
            if outside.any():
                peak = float(np.max(np.abs(v)))
                leak = float(np.max(np.abs(v[outside])))
                if leak > 1e-14 * peak:
                    raise BoundsError(
                        f"support_hint violated: |values| reach {leak:.3e} outside "
                        f"the box (max {peak:.3e})"
                    )

    @cached_property
    def hat(self) -> np.ndarray:
        """Unnormalized DFT of the node values (cached; fields are immutable)."""
        h = np.fft.fftn(self.values)
        h.setflags(write=False)
        return h

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def scaled(self, c: complex) -> "SampledField":
        return SampledField(self.grid, c * self.values, self.support_hint)

    def __add__(self, other: "SampledField") -> "SampledField":
        if other.grid != self.grid:
            raise BoundsError("cannot add fields on different grids")
        return SampledField(self.grid, self.values + other.values)

    def __sub__(self, other: "SampledField") -> "SampledField":
        if other.grid != self.grid:
            raise BoundsError("cannot subtract fields on different grids")
        return SampledField(self.grid, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, SampledField):
            if other.grid != self.grid:
                raise BoundsError("cannot multiply fields on different grids")
            return SampledField(self.grid, self.values * other.values)
        return self.scaled(complex(other))

    __rmul__ = __mul__


def field_from_function(
    grid: Grid,
    fn: Callable[..., np.ndarray],
    support_hint: tuple[tuple[float, float], ...] | None = None,
) -> SampledField:
    """Sample ``fn(x1[, x2])`` at the grid nodes."""
    return SampledField(grid, np.asarray(fn(*grid.coords())), support_hint)


@dataclass(frozen=True)
class DyadicCube:
    """Dyadic cube Q_{nu,m} scaled by the overlap factor d.

    ``m`` is reduced modulo 2^nu per axis; ``d`` enlarges the cube about its
    center (d=1 is the tiling cube itself, d>1 an overlap container).
    """

    nu: int
    m: tuple[int, ...]
    d: float = 1.0

    def __post_init__(self) -> None:
        if self.nu < 0:
            raise BoundsError(f"cube level must be >= 0, got {self.nu}")
        m = self.m if isinstance(self.m, tuple) else (int(self.m),)
        m = tuple(int(mi) % (1 << self.nu) for mi in m)
        object.__setattr__(self, "m", m)
        if not (self.d >= 1.0 and math.isfinite(self.d)):
            raise BoundsError(f"cube factor d must be >= 1, got {self.d}")


def cube(nu: int, m, d: float = 1.0) -> DyadicCube:
    if isinstance(m, (int, np.integer)):
        m = (int(m),)
    return DyadicCube(int(nu), tuple(int(mi) for mi in m), float(d))


@dataclass(frozen=True)
class CubeGeometry:
    center: tuple[float, ...]
    support_box: tuple[tuple[float, float], ...]
    node_range: tuple[tuple[int, int], ...]  # (first node index, count) per axis


def cube_geometry(c: DyadicCube, grid: Grid) -> CubeGeometry:
    """Center, d-enlarged bounding box, and covered node ranges of a cube."""
    if len(c.m) != grid.n:
        raise BoundsError("cube index rank does not match grid dimension")
    p, h, N = grid.period, grid.h, grid.size
    side = p / (1 << c.nu)
    center = tuple((mi * side) % p for mi in c.m)
    half = [0.5 * c.d * side] * grid.n
    box = box_from_center(center, half, grid)
    ranges = []
    for ci, w in zip(center, half):
        if 2 * w >= p * (1 - 1e-12):
            ranges.append((0, N))
            continue
        first = math.ceil((ci - w) / h - _NODE_FUZZ)
        last = math.floor((ci + w) / h + _NODE_FUZZ)
        ranges.append((first % N, last - first + 1))
    return CubeGeometry(center, box, tuple(ranges))


def cube_node_mask(grid: Grid, c: DyadicCube) -> np.ndarray:
    """Node membership mask of the enlarged cube.

    For d=1 this is the exact half-open tiling cube computed in integer
    arithmetic, so the level-nu cubes partition the nodes with no gaps or
    double counting.  For d != 1 the box is treated as closed with a small
    node fuzz.
    """
    N = grid.size
    step = N >> c.nu  # nodes per cube side
    masks = []
    for mi in c.m:
        idx = np.arange(N)
        if c.d == 1.0:
            centered = (idx - mi * step + (step >> 1)) % N
            masks.append(centered < step)
        else:
            offs = ((idx - mi * step + (N >> 1)) % N) - (N >> 1)
            masks.append(np.abs(offs) <= 0.5 * c.d * step + _NODE_FUZZ)
    if grid.n == 1:
        return masks[0]
    return masks[0][:, None] & masks[1][None, :]


def box_within(inner, outer, period: float, fuzz: float = 1e-12) -> bool:
    """Containment of wrapped per-axis boxes on the torus (closed, fuzzed)."""
    for (il, ih), (ol, oh) in zip(inner, outer):
        len_out = period if (ol, oh) == (0.0, period) else (oh - ol) % period
        len_in = period if (il, ih) == (0.0, period) else (ih - il) % period
        if len_out >= period - fuzz * period:
            continue
        rel = (il - ol) % period
        if rel + len_in > len_out + fuzz * period:
            return False
    return True


def quadrature(f: SampledField) -> complex:
    """Trapezoidal (here: left-endpoint, equivalent on the torus) integral.

    Exact for trigonometric polynomials of degree below 2^J per axis.
    """
    return complex(f.grid.h**f.grid.n * f.values.sum())


def _normalize_alpha(alpha, n: int) -> tuple[int, ...]:
    if isinstance(alpha, (int, np.integer)):
        if n != 1:
            raise BoundsError("a scalar derivative order is ambiguous for n=2")
        alpha = (int(alpha),)
    a = tuple(int(ai) for ai in alpha)
    if len(a) != n or any(ai < 0 for ai in a):
        raise BoundsError(f"bad multi-index {alpha} for dimension {n}")
    return a


# Central difference stencils of orders 1..4 (second-order accurate),
# listed as (offset, weight) pairs in units of h^-order.
_CENTRAL_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def differentiate(f: SampledField, alpha, method: str = "spectral") -> SampledField:
    """Partial derivative D^alpha f.

    ``spectral`` multiplies Fourier coefficients by (2*pi*i*k/period)^alpha
    (the Nyquist mode is zeroed for odd orders, the symmetric convention);
    ``central`` uses periodic central differences.  Derivatives do not
    preserve numerical supports, so the result carries no support hint.
    """
    alpha = _normalize_alpha(alpha, f.grid.n)
    total = sum(alpha)
    if total == 0:
        return f
    if method == "spectral":
        if total > SPECTRAL_ORDER_CAP:
            raise BoundsError(f"|alpha|={total} exceeds spectral cap {SPECTRAL_ORDER_CAP}")
        N = f.grid.size
        hat = f.hat.copy()
        for axis, order in enumerate(alpha):
            if order == 0:
                continue
            w = (2j * np.pi * f.grid.freq / f.grid.period) ** order
            if order % 2 == 1:
                w[N // 2] = 0.0
            shape = [1] * f.grid.n
            shape[axis] = N
            hat *= w.reshape(shape)
        return SampledField(f.grid, np.fft.ifftn(hat))
    if method == "central":
        if total > CENTRAL_ORDER_CAP:
            raise BoundsError(f"|alpha|={total} exceeds central cap {CENTRAL_ORDER_CAP}")
        v = f.values
        for axis, order in enumerate(alpha):
            if order == 0:
                continue
            acc = np.zeros_like(v)
            for off, wgt in _CENTRAL_STENCILS[order]:
                acc += wgt * np.roll(v, -off, axis=axis)
            v = acc / f.grid.h**order
        return SampledField(f.grid, v)
    raise BoundsError(f"unknown differentiation method {method!r}")


def _nyquist_split(coeff: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Extend normalized FFT coefficients so the Nyquist mode is shared
    between +N/2 and -N/2; returns (coeff_ext, freq_ext) along each axis.

    The split makes trigonometric interpolation real for real data and exact
    at the grid nodes."""
    N = grid.size
    freq_ext = np.append(grid.freq, N // 2).astype(float)
    c = coeff
    for axis in range(grid.n):
        c = np.moveaxis(c, axis, 0)
        half = 0.5 * c[N // 2]
        # order afterwards: 0..N/2-1, -N/2, -N/2+1..-1, +N/2  -> matches freq_ext
        c = np.concatenate([c[: N // 2], half[None], c[N // 2 + 1 :], half[None]], axis=0)
        c = np.moveaxis(c, 0, axis)
    return c, freq_ext


def evaluate_offgrid(
    f: SampledField, points, method: str = "trig"
) -> np.ndarray:
    """Evaluate a field at arbitrary torus points.

    ``trig`` sums the interpolating trigonometric polynomial (exact for
    band-limited fields, reproduces node values); ``cubic`` evaluates the
    periodic interpolating cubic spline.
    """
    grid = f.grid
    pts = np.asarray(points, dtype=float)
    if grid.n == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != grid.n:
        raise BoundsError(f"points must have shape (count, {grid.n})")
    pts = pts % grid.period

    if method == "cubic":
        coords = (pts / grid.h).T
        re = map_coordinates(f.values.real, coords, order=3, mode="grid-wrap")
        im = map_coordinates(f.values.imag, coords, order=3, mode="grid-wrap")
        return re + 1j * im

    if method != "trig":
        raise BoundsError(f"unknown interpolation method {method!r}")

    coeff = f.hat / grid.node_count
    cext, fext = _nyquist_split(coeff, grid)
    tau = 2j * np.pi / grid.period
    out = np.empty(pts.shape[0], dtype=np.complex128)
    # chunked to bound the size of the Fourier evaluation matrices
    chunk = max(1, int(4_000_000 / (len(fext) ** grid.n)))
    for lo in range(0, pts.shape[0], chunk):
        sub = pts[lo : lo + chunk]
        if grid.n == 1:
            E = np.exp(tau * np.outer(sub[:, 0], fext))
            out[lo : lo + chunk] = E @ cext
        else:
            E1 = np.exp(tau * np.outer(sub[:, 0], fext))
            E2 = np.exp(tau * np.outer(sub[:, 1], fext))
            out[lo : lo + chunk] = np.einsum("kl,ck,cl->c", cext, E1, E2)
    return out


def trig_eval_tensor(f: SampledField, axes_points: Sequence[np.ndarray]) -> np.ndarray:
    """Trigonometric interpolation on a tensor-product point set.

    Equivalent to evaluate_offgrid on the mesh of the given per-axis points
    but with separable Fourier matrices, so the cost stays near N^2 per axis.
    """
    grid = f.grid
    if len(axes_points) != grid.n:
        raise BoundsError(f"need {grid.n} point axes, got {len(axes_points)}")
    cext, fext = _nyquist_split(f.hat / grid.node_count, grid)
    tau = 2j * np.pi / grid.period
    mats = [
        np.exp(tau * np.outer(np.asarray(t, dtype=float) % grid.period, fext))
        for t in axes_points
    ]
    if grid.n == 1:
        return mats[0] @ cext
    return mats[0] @ cext @ mats[1].T


def dilated_profile(
    f: SampledField,
    level_shift: int,
    anchor: Sequence[float],
    stretch_log2: int = 0,
    sampler: Callable[[np.ndarray], np.ndarray] | None = None,
    method: str = "trig",
) -> SampledField:
    """Materialize x' -> f(anchor + 2^-level_shift * (x' - mid)) on a grid of
    period 2^stretch_log2 * period, centered at the new torus midpoint.

    This is the workhorse for measuring norms of dilated localized functions:
    the source is only ever evaluated inside a window of length
    2^(stretch_log2 - level_shift) * period, which must not exceed one period
    (enforced), so the periodic extension is sampled injectively.
    """
    if stretch_log2 > level_shift:
        raise BoundsError("dilated window would exceed one source period")
    grid = f.grid
    new_grid = Grid(grid.n, grid.J, grid.period * (1 << stretch_log2))
    mid = 0.5 * new_grid.period
    offs = new_grid.axis - mid
    scale = 0.5 ** float(level_shift)
    axes_pts = [anchor[i] + scale * offs for i in range(grid.n)]
    if sampler is None and method == "trig":
        return SampledField(new_grid, trig_eval_tensor(f, axes_pts))
    if grid.n == 1:
        pts = axes_pts[0][:, None]
    else:
        p1, p2 = np.meshgrid(axes_pts[0], axes_pts[1], indexing="ij")
        pts = np.stack([p1.ravel(), p2.ravel()], axis=1)
    if sampler is not None:
        vals = sampler(pts)
    else:
        vals = evaluate_offgrid(f, pts, method=method)
    return SampledField(new_grid, vals.reshape(new_grid.shape))


# -- field file format --------------------------------------------------------


def write_field(f: SampledField, path) -> None:
    """Write the versioned plain-text field format (header + re,im rows)."""
    g = f.grid
    lines = [f"{FIELD_MAGIC} v{FIELD_VERSION} n={g.n} J={g.J} period={g.period!r}"]
    flat = f.values.reshape(-1)  # row-major
    lines.extend(f"{float(z.real)!r},{float(z.imag)!r}" for z in flat)
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> SampledField:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ConfigError(f"{path}: empty field file")
    head = text[0].split()
    if len(head) < 2 or head[0] != FIELD_MAGIC or head[1] != f"v{FIELD_VERSION}":
        raise ConfigError(f"{path}: not a {FIELD_MAGIC} v{FIELD_VERSION} file")
    meta = dict(tok.split("=", 1) for tok in head[2:])
    try:
        grid = Grid(int(meta["n"]), int(meta["J"]), float(meta["period"]))
    except KeyError as e:
        raise ConfigError(f"{path}: missing header key {e}") from e
    if len(text) - 1 != grid.node_count:
        raise ConfigError(
            f"{path}: expected {grid.node_count} value rows, got {len(text) - 1}"
        )
    vals = np.empty(grid.node_count, dtype=np.complex128)
    for i, line in enumerate(text[1:]):
        re_s, im_s = line.split(",")
        vals[i] = complex(float(re_s), float(im_s))
    return SampledField(grid, vals.reshape(grid.shape))

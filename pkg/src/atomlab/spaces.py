"""Elementary norms: L_p, Lipschitz-type seminorms, Hoelder norms, and the
sequence-space norms carried by dyadic coefficient arrays.

Smoothness orders are split as s = |s| + {s} with fractional part in (0, 1],
so integer orders always use the Lipschitz seminorm of the top derivatives
(C^1 is Lipschitz-of-f, not sup-of-f').  Lipschitz seminorms are evaluated
over dyadic offset shells; the true grid supremum lies within a factor 2^sigma
of the shell value for the fields this laboratory produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._errors import BoundsError, ConfigError
from .grid import (
    LEVEL_MARGIN,
    MAX_OVERLAP,
    Grid,
    SampledField,
    cube,
    cube_node_mask,
    differentiate,
)

HOLDER_ORDER_CAP = 6.0

COEFF_MAGIC = "ATOMLAB-COEFF"
COEFF_VERSION = 1


def smoothness_split(s: float) -> tuple[int, float]:
    """Split s > 0 into (integer part, fractional part) with fraction in (0, 1]."""
    if s <= 0:
        raise BoundsError(f"positive smoothness required, got {s}")
    k = math.ceil(s) - 1
    return k, s - k


def _check_exponent(p: float, name: str = "p") -> float:
    p = float(p)
    if math.isinf(p) and p > 0:
        return math.inf
    if not (p > 0 and math.isfinite(p)):
        raise BoundsError(f"{name} must lie in (0, inf], got {p}")
    return p


@dataclass(frozen=True)
class SpaceParams:
    """Smoothness/integrability parameters shared across the laboratory.

    s: smoothness; p, q: integrability/summability in (0, inf];
    K, L: atom smoothness and moment orders (>= 0);
    d: cube overlap factor in (1, 4].
    """

    s: float
    p: float
    q: float
    n: int
    K: float = 1.0
    L: float = 0.0
    d: float = 1.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", _check_exponent(self.p, "p"))
        object.__setattr__(self, "q", _check_exponent(self.q, "q"))
        if self.n not in (1, 2):
            raise BoundsError(f"dimension must be 1 or 2, got {self.n}")
        if not math.isfinite(self.s):
            raise BoundsError(f"finite smoothness required, got {self.s}")
        if self.K < 0 or self.L < 0:
            raise BoundsError("K and L must be >= 0")
        if not (1.0 < self.d <= MAX_OVERLAP):
            raise BoundsError(f"overlap d must lie in (1, {MAX_OVERLAP}], got {self.d}")

    def with_(self, **kw) -> "SpaceParams":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        enc = lambda v: "inf" if v == math.inf else v
        return {
            "s": self.s, "p": enc(self.p), "q": enc(self.q),
            "n": self.n, "K": self.K, "L": self.L, "d": self.d,
        }


def params_from_dict(data: dict) -> SpaceParams:
    dec = lambda v: math.inf if v in ("inf", math.inf) else float(v)
    return SpaceParams(
        s=float(data["s"]), p=dec(data["p"]), q=dec(data["q"]),
        n=int(data["n"]), K=float(data.get("K", 1.0)),
        L=float(data.get("L", 0.0)), d=float(data.get("d", 1.5)),
    )


def sigma_indices(p: float, q: float, n: int) -> tuple[float, float]:
    """The compensation indices sigma_p = n(1/p - 1)_+ and sigma_{p,q}."""
    p = _check_exponent(p, "p")
    q = _check_exponent(q, "q")
    inv = lambda r: 0.0 if math.isinf(r) else 1.0 / r
    sigma_p = n * max(inv(p) - 1.0, 0.0)
    sigma_pq = n * max(inv(min(p, q)) - 1.0, 0.0)
    return sigma_p, sigma_pq


# -- function-side norms -------------------------------------------------------


def lp_norm(f: SampledField, p: float) -> float:
    """Quadrature L_p quasi-norm; p = inf is the node supremum."""
    p = _check_exponent(p, "p")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    hn = f.grid.h**f.grid.n
    return float((hn * np.sum(a**p)) ** (1.0 / p))


def _shell_offsets(grid: Grid):
    """Dyadic shell shifts (node offsets per axis) and their torus distances."""
    N, h = grid.size, grid.h
    shells: list[tuple[tuple[int, ...], float]] = []
    t = 1
    while t <= N // 2:
        for axis_shift in ((t,) if grid.n == 1 else ((t, 0), (0, t))):
            shells.append((axis_shift if grid.n == 2 else (t,), h * t))
        t *= 2
    if grid.n == 2:
        t = 1
        while t * math.sqrt(2.0) <= N / 2:
            dist = h * t * math.sqrt(2.0)
            shells.append(((t, t), dist))
            shells.append(((t, -t), dist))
            t *= 2
    return shells


def lip_seminorm(f: SampledField, sigma: float) -> float:
    """sup |f(x)-f(y)| / |x-y|^sigma over dyadic offset shells.

    Shells use axis-aligned shifts of h, 2h, 4h, ... (plus diagonals for n=2)
    with torus distances capped at period/2.
    """
    if not (0.0 < sigma <= 1.0):
        raise BoundsError(f"lip exponent must lie in (0, 1], got {sigma}")
    v = f.values
    best = 0.0
    for shift, dist in _shell_offsets(f.grid):
        if f.grid.n == 1:
            diff = np.abs(v - np.roll(v, shift[0]))
        else:
            diff = np.abs(v - np.roll(v, shift, axis=(0, 1)))
        best = max(best, float(diff.max()) / dist**sigma)
    return best


def _multi_indices(n: int, total: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(k,) for k in range(total + 1)]
    return [(a, b) for a in range(total + 1) for b in range(total + 1 - a)]


def holder_norm(f: SampledField, s: float, method: str = "spectral") -> float:
    """Hoelder norm of order s; s = 0 is the sup norm.

    Sums sup|D^alpha f| over |alpha| <= |s| and the {s}-Lipschitz shell
    seminorms of the top-order derivatives.
    """
    if s < 0 or s > HOLDER_ORDER_CAP:
        raise BoundsError(f"holder order must lie in [0, {HOLDER_ORDER_CAP}], got {s}")
    if s == 0:
        return lp_norm(f, math.inf)
    k, frac = smoothness_split(s)
    total = 0.0
    for alpha in _multi_indices(f.grid.n, k):
        df = differentiate(f, alpha, method=method)
        total += lp_norm(df, math.inf)
        if sum(alpha) == k:
            total += lip_seminorm(df, frac)
    return total


def holder_product(f: SampledField, g: SampledField, s: float) -> tuple[SampledField, float]:
    """Pointwise product and the ratio ||fg|| / (||f|| ||g||) in C^s."""
    prod = f * g
    nf, ng = holder_norm(f, s), holder_norm(g, s)
    if nf == 0.0 or ng == 0.0:
        return prod, 0.0
    return prod, holder_norm(prod, s) / (nf * ng)


BATTERY_SEED = 0x5EED_BA77

_battery_cache: dict[tuple, tuple[SampledField, ...]] = {}


def _smooth_cutoff(grid: Grid) -> np.ndarray:
    """C^inf window: 1 on |x_i| <= 0.3 P, 0 beyond |x_i| = 0.45 P."""
    def ramp(t: np.ndarray) -> np.ndarray:
        t = np.clip(t, 0.0, 1.0)
        with np.errstate(over="ignore", divide="ignore"):
            a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
            b = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
        return b / (a + b)

    P = grid.period
    out = np.ones(grid.shape, dtype=float)
    axes = grid.coords() if grid.n == 2 else (grid.axis,)
    for ax in axes:
        centered = np.abs(((ax + P / 2) % P) - P / 2)
        out = out * ramp((0.45 * P - centered) / (0.15 * P))
    return out


def holder_test_battery(
    grid: Grid, order: float, count: int = 32, monomial_top: int | None = None
) -> tuple[SampledField, ...]:
    """Deterministic test functions normalized to unit C^order norm.

    Random trigonometric polynomials with decaying spectra, plus cut-off
    centered monomials x^beta for every |beta| <= monomial_top (default: the
    integer part of order under the fraction-in-(0,1] splitting).  All
    entries are centered at the origin; callers translate them by integer
    node shifts where needed.
    """
    if monomial_top is None:
        monomial_top = smoothness_split(order)[0] if order > 0 else 0
    key = (grid.key(), round(float(order), 9), int(count), int(monomial_top))
    cached = _battery_cache.get(key)
    if cached is not None:
        return cached
    rng = np.random.default_rng(BATTERY_SEED)
    entries: list[SampledField] = []
    kmax = min(8, grid.size // 4)
    freq = grid.freq
    rad = np.sqrt(sum(np.meshgrid(*([freq] * grid.n), indexing="ij")[i] ** 2
                      for i in range(grid.n))) if grid.n == 2 else np.abs(freq)
    for _ in range(count):
        coeff = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        coeff = coeff / (1.0 + rad) ** 2
        coeff[rad > kmax] = 0.0
        vals = np.fft.ifftn(coeff).real
        f = SampledField(grid, vals)
        nrm = holder_norm(f, order)
        entries.append(f.scaled(1.0 / nrm))
    top = monomial_top
    if grid.n == 1:
        betas = [(b,) for b in range(top + 1)]
    else:
        betas = [(a, b) for a in range(top + 1) for b in range(top + 1 - a)]
    cutoff = _smooth_cutoff(grid)
    for beta in betas:
        if grid.n == 1:
            x = ((grid.axis + grid.period / 2) % grid.period) - grid.period / 2
            mono = x ** beta[0]
        else:
            x1, x2 = grid.coords()
            P = grid.period
            c1 = ((x1 + P / 2) % P) - P / 2
            c2 = ((x2 + P / 2) % P) - P / 2
            mono = c1 ** beta[0] * c2 ** beta[1]
        f = SampledField(grid, mono * cutoff)
        nrm = holder_norm(f, order)
        entries.append(f.scaled(1.0 / nrm))
    result = tuple(entries)
    _battery_cache[key] = result
    return result


# -- coefficient arrays and sequence norms ------------------------------------


@dataclass(frozen=True)
class CoeffArray:
    """Sparse map (nu, m) -> lambda over dyadic cube indices."""

    n: int
    entries: dict[tuple[int, tuple[int, ...]], complex]

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise BoundsError(f"dimension must be 1 or 2, got {self.n}")
        norm: dict[tuple[int, tuple[int, ...]], complex] = {}
        for (nu, m), lam in self.entries.items():
            nu = int(nu)
            if nu < 0:
                raise BoundsError(f"negative level {nu}")
            if isinstance(m, (int, np.integer)):
                m = (int(m),)
            if len(m) != self.n:
                raise BoundsError(f"index {m} has wrong rank for n={self.n}")
            key = (nu, tuple(int(mi) % (1 << nu) for mi in m))
            norm[key] = norm.get(key, 0j) + complex(lam)
        object.__setattr__(self, "entries", norm)

    @property
    def max_level(self) -> int:
        return max((nu for nu, _ in self.entries), default=0)

    def levels(self) -> list[int]:
        return sorted({nu for nu, _ in self.entries})

    def level_values(self, nu: int) -> np.ndarray:
        return np.array(
            [lam for (l, _), lam in self.entries.items() if l == nu],
            dtype=np.complex128,
        )

    def scaled(self, c: complex) -> "CoeffArray":
        return CoeffArray(self.n, {k: c * v for k, v in self.entries.items()})

    def sorted_items(self):
        """Entries ordered by level ascending, then lexicographically in m."""
        return sorted(self.entries.items(), key=lambda kv: (kv[0][0], kv[0][1]))


def coeffs_from_pairs(n: int, pairs) -> CoeffArray:
    return CoeffArray(n, {(nu, m): lam for nu, m, lam in pairs})


def bpq_norm(lam: CoeffArray, p: float, q: float) -> float:
    """Levelwise l_p norms combined in l_q across levels."""
    p = _check_exponent(p, "p")
    q = _check_exponent(q, "q")
    inner = []
    for nu in lam.levels():
        a = np.abs(lam.level_values(nu))
        if a.size == 0:
            continue
        inner.append(float(a.max()) if math.isinf(p) else float(np.sum(a**p) ** (1 / p)))
    if not inner:
        return 0.0
    arr = np.asarray(inner)
    if math.isinf(q):
        return float(arr.max())
    return float(np.sum(arr**q) ** (1 / q))


def fpq_norm(lam: CoeffArray, p: float, q: float, grid: Grid) -> float:
    """L_p norm of the pointwise l_q sum of L_p-normalized cube indicators.

    Indicators are exactly L_p-normalized on the half-open tiling cubes (for
    period 1 the height is 2^{nu n / p}); p = inf uses plain indicators and
    the node supremum.
    """
    p = _check_exponent(p, "p")
    q = _check_exponent(q, "q")
    if grid.n != lam.n:
        raise BoundsError("grid dimension does not match coefficient array")
    if lam.max_level > grid.J - LEVEL_MARGIN:
        raise BoundsError(
            f"coefficient level {lam.max_level} exceeds cap J-{LEVEL_MARGIN}"
        )
    acc = np.zeros(grid.shape, dtype=float)
    for (nu, m), val in lam.entries.items():
        a = abs(val)
        if a == 0.0:
            continue
        vol = (grid.period * 0.5**nu) ** grid.n
        height = 1.0 if math.isinf(p) else vol ** (-1.0 / p)
        mask = cube_node_mask(grid, cube(nu, m))
        contrib = a * height
        if math.isinf(q):
            np.maximum(acc, np.where(mask, contrib, 0.0), out=acc)
        else:
            acc[mask] += contrib**q
    g = acc if math.isinf(q) else acc ** (1.0 / q)
    if math.isinf(p):
        return float(g.max())
    hn = grid.h**grid.n
    return float((hn * np.sum(g**p)) ** (1.0 / p))


# -- coefficient file format ---------------------------------------------------


def write_coeffs(lam: CoeffArray, path) -> None:
    lines = [f"{COEFF_MAGIC} v{COEFF_VERSION} n={lam.n}"]
    for (nu, m), val in lam.sorted_items():
        idx = ",".join(str(mi) for mi in m)
        lines.append(f"{nu},{idx},{float(val.real)!r},{float(val.imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_coeffs(path) -> CoeffArray:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ConfigError(f"{path}: empty coefficient file")
    head = text[0].split()
    if len(head) < 3 or head[0] != COEFF_MAGIC or head[1] != f"v{COEFF_VERSION}":
        raise ConfigError(f"{path}: not a {COEFF_MAGIC} v{COEFF_VERSION} file")
    n = int(dict(tok.split("=", 1) for tok in head[2:])["n"])
    entries = {}
    for line in text[1:]:
        parts = line.split(",")
        if len(parts) != n + 3:
            raise ConfigError(f"{path}: malformed row {line!r}")
        nu = int(parts[0])
        m = tuple(int(v) for v in parts[1 : 1 + n])
        entries[(nu, m)] = complex(float(parts[1 + n]), float(parts[2 + n]))
    return CoeffArray(n, entries)

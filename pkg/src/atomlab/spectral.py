"""Smooth dyadic resolution of unity and the frequency-side space norms.

Frequencies are measured on the integer lattice (units of 2*pi/period), so a
block j >= 1 lives on the annulus 2^(j-1) <= |k| <= 2^(j+1) and block 0 on
the ball |k| <= 2.  Blocks run up to J_max = J - 2; the top block absorbs the
telescoping remainder so the partition of unity is exact on the whole lattice
while interior blocks keep the exact annulus supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._errors import BoundsError
from .spaces import SpaceParams, _check_exponent, lp_norm
from .grid import Grid, SampledField

RESOLUTION_KINDS = ("standard", "perturbed")


def _shape(u: np.ndarray) -> np.ndarray:
    """exp(-1/u) continued by 0 for u <= 0; the C^inf one-sided mollifier."""
    out = np.zeros_like(u, dtype=float)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _transition(t: np.ndarray) -> np.ndarray:
    """C^inf monotone ramp: 1 for t <= 0, 0 for t >= 1."""
    a = _shape(1.0 - t)
    b = _shape(t)
    return a / (a + b + np.finfo(float).tiny)


def _psi(r: np.ndarray, kind: str) -> np.ndarray:
    """Admissible low-pass profile: 1 on |k| <= 1, supported in |k| <= 2."""
    if kind == "standard":
        return _transition(r - 1.0)
    if kind == "perturbed":
        # same admissibility class, different plateau and ramp shape
        return _transition((r - 1.25) / 0.75) ** 2
    raise BoundsError(f"unknown resolution kind {kind!r}")


@dataclass(frozen=True, eq=False)
class ResolutionOfUnity:
    """Multiplier blocks phi_j sampled on the frequency lattice of a grid."""

    grid: Grid
    kind: str
    j_max: int
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for b in self.blocks:
            b.setflags(write=False)


def make_resolution(grid: Grid, kind: str = "standard") -> ResolutionOfUnity:
    """Build the dyadic resolution of unity on a grid's frequency lattice.

    J_max = J - 2 keeps the top resolved annulus inside the representable
    band; the final block is the telescoping remainder 1 - Psi(2^{1-J_max} k),
    which coincides with the plain dilated block on its annulus and makes the
    lattice partition sum exactly one.
    """
    if kind not in RESOLUTION_KINDS:
        raise BoundsError(f"unknown resolution kind {kind!r}")
    r = grid.freq_radius()
    j_max = grid.J - 2
    cumulative = [_psi(r / 2.0**j, kind) for j in range(j_max)]
    blocks = [cumulative[0]]
    for j in range(1, j_max):
        blocks.append(cumulative[j] - cumulative[j - 1])
    blocks.append(1.0 - cumulative[j_max - 1])
    return ResolutionOfUnity(grid, kind, j_max, tuple(blocks))


def band_project(f: SampledField, j: int, res: ResolutionOfUnity) -> SampledField:
    """Frequency-side projection onto block j."""
    if f.grid != res.grid:
        raise BoundsError("field and resolution live on different grids")
    if not (0 <= j <= res.j_max):
        raise BoundsError(f"block index {j} outside [0, {res.j_max}]")
    return SampledField(f.grid, np.fft.ifftn(f.hat * res.blocks[j]))


def band_lp_norms(f: SampledField, p: float, res: ResolutionOfUnity) -> np.ndarray:
    """L_p norms of all block projections (index 0..j_max)."""
    return np.array(
        [lp_norm(band_project(f, j, res), p) for j in range(res.j_max + 1)]
    )


def besov_norm_fourier(
    f: SampledField, params: SpaceParams, res: ResolutionOfUnity
) -> float:
    """( sum_j 2^{jsq} ||block_j f||_p^q )^{1/q}, truncated at J_max."""
    q = params.q
    terms = band_lp_norms(f, params.p, res)
    weights = 2.0 ** (params.s * np.arange(res.j_max + 1))
    weighted = weights * terms
    if math.isinf(q):
        return float(weighted.max())
    return float(np.sum(weighted**q) ** (1.0 / q))


def tl_norm_fourier(
    f: SampledField, params: SpaceParams, res: ResolutionOfUnity
) -> float:
    """L_p norm of the pointwise l_q block sum; defined for p < inf only."""
    if math.isinf(params.p):
        raise BoundsError("the pointwise-sum scale requires p < inf")
    q = params.q
    stack = np.stack(
        [
            2.0 ** (params.s * j) * np.abs(band_project(f, j, res).values)
            for j in range(res.j_max + 1)
        ]
    )
    if math.isinf(q):
        g = stack.max(axis=0)
    else:
        g = np.sum(stack**q, axis=0) ** (1.0 / q)
    hn = f.grid.h**f.grid.n
    return float((hn * np.sum(g**params.p)) ** (1.0 / params.p))

"""Shared fixtures: grids, kernel pairs, and seeded random fields."""

from __future__ import annotations

import numpy as np
import pytest

from atomlab.grid import Grid, SampledField
from atomlab.localmeans import build_mean_kernels
from atomlab.spectral import make_resolution


@pytest.fixture(scope="session")
def grid10() -> Grid:
    return Grid(1, 10, 1.0)


@pytest.fixture(scope="session")
def grid11() -> Grid:
    return Grid(1, 11, 1.0)


@pytest.fixture(scope="session")
def grid2d() -> Grid:
    return Grid(2, 7, 1.0)


@pytest.fixture(scope="session")
def pair10(grid10):
    return build_mean_kernels(2, 0.5, grid10)


@pytest.fixture(scope="session")
def res10(grid10):
    return make_resolution(grid10)


def random_trig(grid: Grid, seed: int, decay: float = 2.0, kmax: int | None = None) -> SampledField:
    """Seeded real band-limited field with power-law spectrum decay."""
    rng = np.random.default_rng(seed)
    if kmax is None:
        kmax = grid.size // 4
    freq = grid.freq
    if grid.n == 1:
        rad = np.abs(freq)
    else:
        f1, f2 = np.meshgrid(freq, freq, indexing="ij")
        rad = np.sqrt(f1**2 + f2**2)
    coeff = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coeff = coeff / (1.0 + rad) ** decay
    coeff[rad > kmax] = 0.0
    vals = np.fft.ifftn(coeff)
    return SampledField(grid, vals.real + 0.0j)


@pytest.fixture()
def trig_field(grid10):
    return random_trig(grid10, 1234)

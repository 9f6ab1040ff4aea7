"""Experiment configuration, corpus generation, suites, and report emission.

Everything here is deterministic: a config (seed included) maps to one report,
byte-identical across runs except for the wall-clock field.  Randomness comes
from numpy's PCG64 generator seeded per suite, so suites can run in any order
or in parallel without changing results.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import atoms as atoms_mod
from . import grid as grid_mod
from . import operators, spaces
from ._errors import ConfigError, SuiteError
from .atoms import (
    dilate_atom,
    kernel_as_atom,
    make_atom,
    synthesize,
    validate_atom,
)
from .grid import Grid, SampledField
from .localmeans import besov_norm_means, build_mean_kernels, tl_norm_means
from .operators import (
    compose,
    holder_compose,
    lp_change_of_variables,
    make_diffeo,
    multiply,
    multiply_atom,
    transport_atoms,
)
from .spaces import (
    CoeffArray,
    SpaceParams,
    bpq_norm,
    fpq_norm,
    holder_norm,
    lp_norm,
    params_from_dict,
)
from .spectral import besov_norm_fourier, make_resolution, tl_norm_fourier

REPORT_SCHEMA = "atomlab-report/1"
CSV_COLUMNS = (
    "experiment",
    "s",
    "p",
    "q",
    "K",
    "L",
    "ratio_min",
    "ratio_med",
    "ratio_max",
    "pass",
)

CORPUS_KINDS = ("trig", "bump", "atom-sum", "mixed")
ENGINES = ("fourier", "means", "both")


# -- configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    n: int = 1
    J: int = 10
    period: float = 1.0

    def build(self) -> Grid:
        return Grid(self.n, self.J, self.period)


@dataclass(frozen=True)
class CorpusSpec:
    kind: str = "mixed"
    count: int = 30
    decay: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in CORPUS_KINDS:
            raise ConfigError(f"unknown corpus kind {self.kind!r} (have {CORPUS_KINDS})")
        if self.count < 0:
            raise ConfigError(f"corpus count must be >= 0, got {self.count}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Seed, grid, spaces, corpus, engine, suite selection, and thresholds."""

    seed: int = 0
    grid: GridSpec = GridSpec()
    spaces: tuple[SpaceParams, ...] = ()
    corpus: CorpusSpec = CorpusSpec()
    engine: str = "both"
    suites: tuple[str, ...] = ()
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r} (have {ENGINES})")
        for name in self.suites:
            if name not in SUITES:
                raise ConfigError(f"unknown suite {name!r} (have {sorted(SUITES)})")
        for key, value in self.thresholds.items():
            if not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"threshold {key!r} must be positive, got {value!r}")

    def threshold(self, key: str, default: float) -> float:
        return float(self.thresholds.get(key, default))

    def space(self, index: int = 0) -> SpaceParams:
        if self.spaces:
            return self.spaces[min(index, len(self.spaces) - 1)]
        return SpaceParams(0.5, 2.0, 2.0, self.grid.n, K=1.0, L=1.0, d=1.5)

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "grid": {"n": self.grid.n, "J": self.grid.J, "period": self.grid.period},
            "spaces": [_space_dict(sp) for sp in self.spaces],
            "corpus": {
                "kind": self.corpus.kind,
                "count": self.corpus.count,
                "decay": self.corpus.decay,
            },
            "engine": self.engine,
            "suites": list(self.suites),
            "thresholds": dict(sorted(self.thresholds.items())),
        }


def _space_dict(sp: SpaceParams) -> dict:
    enc = lambda v: "inf" if math.isinf(v) else v
    return {
        "s": sp.s,
        "p": enc(sp.p),
        "q": enc(sp.q),
        "n": sp.n,
        "K": sp.K,
        "L": sp.L,
        "d": sp.d,
    }


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        grid_spec = GridSpec(**data.get("grid", {}))
        corpus = CorpusSpec(**data.get("corpus", {}))
        spaces_list = tuple(
            params_from_dict({**sp, "n": sp.get("n", grid_spec.n)})
            for sp in data.get("spaces", [])
        )
        return ExperimentConfig(
            seed=int(data.get("seed", 0)),
            grid=grid_spec,
            spaces=spaces_list,
            corpus=corpus,
            engine=data.get("engine", "both"),
            suites=tuple(data.get("suites", [])),
            thresholds=dict(data.get("thresholds", {})),
        )
    except TypeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    return config_from_dict(data)


# -- corpus -----------------------------------------------------------------------


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, tag)))


def _random_spectrum_field(
    grid: Grid, rng: np.random.Generator, decay: float, kmax: int | None = None
) -> SampledField:
    """Real random trig polynomial with |coeff(k)| ~ (1+|k|)^-decay."""
    if kmax is None:
        kmax = grid.size // 2 - 1
    hat = np.zeros(grid.shape, dtype=complex)
    if grid.n == 1:
        ks = np.arange(-kmax, kmax + 1)
        amps = (rng.standard_normal(ks.size) + 1j * rng.standard_normal(ks.size)) * (
            1.0 + np.abs(ks)
        ) ** (-decay)
        hat[ks % grid.size] = amps
    else:
        ks = np.arange(-kmax, kmax + 1)
        a = rng.standard_normal((ks.size, ks.size))
        b = rng.standard_normal((ks.size, ks.size))
        r = 1.0 + np.abs(ks)[:, None] + np.abs(ks)[None, :]
        block = (a + 1j * b) * r ** (-decay)
        hat[np.ix_(ks % grid.size, ks % grid.size)] = block
    vals = np.real(np.fft.ifftn(hat)) * grid.node_count
    return SampledField(grid, vals)


def _random_bump_field(grid: Grid, rng: np.random.Generator) -> SampledField:
    vals = np.zeros(grid.shape)
    if grid.n == 1:
        x = grid.axis
        pts = x[:, None]
    else:
        x1, x2 = grid.coords()
        pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    for _ in range(3):
        center = rng.uniform(0.0, grid.period, size=grid.n)
        width = rng.uniform(0.05, 0.2) * grid.period
        amp = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        u = grid_mod.torus_centered(pts - center, grid.period) / width
        r2 = np.sum(u * u, axis=1)
        contrib = np.zeros(pts.shape[0])
        inside = r2 < 1.0
        contrib[inside] = amp * np.exp(-1.0 / (1.0 - r2[inside]))
        vals = vals + contrib.reshape(grid.shape)
    return SampledField(grid, vals)


def _random_coeffs(
    grid: Grid,
    rng: np.random.Generator,
    max_level: int,
    count: int,
) -> CoeffArray:
    entries = {}
    for _ in range(count):
        nu = int(rng.integers(0, max_level + 1))
        m = tuple(int(rng.integers(0, 1 << nu)) for _ in range(grid.n))
        entries[(nu, m)] = complex(rng.standard_normal(), rng.standard_normal())
    return CoeffArray(grid.n, entries)


def _random_atom_sum(
    grid: Grid, rng: np.random.Generator, params: SpaceParams
) -> SampledField:
    lam = _random_coeffs(grid, rng, min(4, grid.J - grid_mod.LEVEL_MARGIN), 5)
    mo = min(atoms_mod.MOMENT_PROJECT_CAP, math.ceil(params.L))

    def factory(nu, m):
        return make_atom(nu, m, params, "bump", mo, grid=grid)

    return synthesize(lam, factory, mode="lenient", grid=grid)


def generate_corpus(config: ExperimentConfig) -> list[SampledField]:
    """Deterministic field families; the seed fixes every draw bit-exactly."""
    grid = config.grid.build()
    rng = _rng(config.seed, 0xC0)
    params = config.space()
    kinds = {
        "trig": lambda: _random_spectrum_field(grid, rng, config.corpus.decay),
        "bump": lambda: _random_bump_field(grid, rng),
        "atom-sum": lambda: _random_atom_sum(grid, rng, params),
    }
    order = ("trig", "bump", "atom-sum")
    out = []
    for i in range(config.corpus.count):
        kind = config.corpus.kind
        if kind == "mixed":
            kind = order[i % len(order)]
        out.append(kinds[kind]())
    return out


# -- report -----------------------------------------------------------------------


def _constants_snapshot() -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "field_version": grid_mod.FIELD_VERSION,
        "level_margin": grid_mod.LEVEL_MARGIN,
        "max_overlap": grid_mod.MAX_OVERLAP,
        "battery_seed": spaces.BATTERY_SEED,
        "holder_order_cap": spaces.HOLDER_ORDER_CAP,
        "support_tolerance": atoms_mod.SUPPORT_TOLERANCE,
        "moment_project_cap": atoms_mod.MOMENT_PROJECT_CAP,
        "newton_tol": operators.NEWTON_TOL,
        "perturbation_deriv_cap": operators.PERTURBATION_DERIV_CAP,
        "max_families": operators.MAX_FAMILIES,
        "rng": "numpy PCG64 via SeedSequence((seed, suite_tag))",
    }


@dataclass
class Report:
    """Deterministic experiment outcome; wall_clock is the only varying field."""

    config: dict
    experiments: list
    passed: bool
    wall_clock: float
    schema: str = REPORT_SCHEMA
    constants: dict = field(default_factory=_constants_snapshot)

    def as_dict(self) -> dict:
        return {
            "schema": self.schema,
            "config": self.config,
            "constants": self.constants,
            "experiments": self.experiments,
            "passed": self.passed,
            "wall_clock": self.wall_clock,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(_jsonable(self.as_dict()), indent=indent, sort_keys=True)

    def table(self) -> list[dict]:
        return [{col: row[col] for col in CSV_COLUMNS} for row in self.experiments]


def _jsonable(obj):
    """Strict-JSON form: non-finite floats become strings, keys stay sorted."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    return obj


def _row(
    experiment: str,
    params: SpaceParams,
    ratios: Sequence[float],
    passed: bool,
    **detail,
) -> dict:
    arr = sorted(float(r) for r in ratios) or [0.0]
    return {
        "experiment": experiment,
        "s": params.s,
        "p": math.inf if math.isinf(params.p) else params.p,
        "q": math.inf if math.isinf(params.q) else params.q,
        "K": params.K,
        "L": params.L,
        "ratio_min": arr[0],
        "ratio_med": arr[len(arr) // 2],
        "ratio_max": arr[-1],
        "pass": bool(passed),
        "detail": detail,
    }


# -- suites -----------------------------------------------------------------------


def _criterion_spaces(n: int) -> list[tuple[SpaceParams, tuple[str, ...]]]:
    return [
        (SpaceParams(0.5, 2.0, 2.0, n, K=1.0, L=1.0, d=1.5), ("B", "F")),
        (SpaceParams(1.2, 3.0, 1.5, n, K=2.0, L=1.0, d=1.5), ("B", "F")),
        (SpaceParams(0.3, 1.0, math.inf, n, K=1.0, L=1.0, d=1.5), ("B",)),
    ]


def _suite_norm_equivalence(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    fields = generate_corpus(config)
    pair = build_mean_kernels(2, 0.5, grid)
    res = make_resolution(grid)
    window = config.threshold("norm-equivalence.window", 50.0)
    spread_cap = config.threshold("norm-equivalence.spread", 100.0)
    rows = []
    for params, scales in _criterion_spaces(grid.n):
        for scale in scales:
            ratios = []
            for f in fields:
                if scale == "B":
                    top = besov_norm_fourier(f, params, res)
                    bot = besov_norm_means(f, params, pair)
                else:
                    top = tl_norm_fourier(f, params, res)
                    bot = tl_norm_means(f, params, pair)
                if top == 0.0 and bot == 0.0:
                    continue
                ratios.append(top / bot)
            spread = max(ratios) / min(ratios) if ratios else 1.0
            ok = (
                all(1.0 / window <= r <= window for r in ratios)
                and spread <= spread_cap
            )
            rows.append(
                _row(
                    f"norm-equivalence/{scale}({params.s},{params.p},{params.q})",
                    params,
                    ratios,
                    ok,
                    spread=spread,
                )
            )
    return rows


def _suite_resolution_independence(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    fields = generate_corpus(config)
    std = make_resolution(grid, "standard")
    pert = make_resolution(grid, "perturbed")
    window = config.threshold("resolution-independence.window", 8.0)
    rows = []
    for params, scales in _criterion_spaces(grid.n):
        for scale in scales:
            engine = besov_norm_fourier if scale == "B" else tl_norm_fourier
            ratios = []
            for f in fields:
                a = engine(f, params, std)
                b = engine(f, params, pert)
                if a == 0.0 and b == 0.0:
                    continue
                ratios.append(a / b)
            ok = all(1.0 / window <= r <= window for r in ratios)
            rows.append(
                _row(
                    f"resolution-independence/{scale}({params.s},{params.p},{params.q})",
                    params,
                    ratios,
                    ok,
                )
            )
    return rows


def _suite_holder_besov(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    res = make_resolution(grid)
    window = config.threshold("holder-besov.window", 10.0)
    params = SpaceParams(0.5, math.inf, math.inf, grid.n, K=1.0, L=0.0, d=1.5)
    ratios = []
    for _ in range(20):
        f = _random_spectrum_field(grid, rng, 1.5)
        h = holder_norm(f, 0.5)
        b = besov_norm_fourier(f, params, res)
        ratios.append(h / b)
    ok = all(1.0 / window <= r <= window for r in ratios)
    return [_row("holder-besov/rho=0.5", params, ratios, ok)]


def _suite_exact_identities(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    res = make_resolution(grid)
    pair = build_mean_kernels(2, 0.5, grid)
    tol_id = config.threshold("exact-identities.fpp_bpp", 1e-12)
    tol_hom = config.threshold("exact-identities.homogeneity", 1e-13)
    max_level = grid.J - grid_mod.LEVEL_MARGIN

    fpp_errs, mono_ok, hom_errs = [], True, []
    for i in range(50):
        lam = _random_coeffs(grid, rng, min(5, max_level), int(rng.integers(1, 12)))
        p = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        b = bpq_norm(lam, p, p)
        fnorm = fpq_norm(lam, p, p, grid)
        fpp_errs.append(abs(fnorm - b) / b)
        binf = bpq_norm(lam, p, math.inf)
        for q in (1.0, 1.5, 2.0):
            mono_ok &= binf <= bpq_norm(lam, p, q) * (1.0 + 1e-12)
        c = -3.7
        hom_errs.append(abs(bpq_norm(lam.scaled(c), p, 2.0) - abs(c) * bpq_norm(lam, p, 2.0))
                        / (abs(c) * bpq_norm(lam, p, 2.0)))

    params = config.space()
    f = _random_spectrum_field(grid, rng, 2.0)
    c = -2.5
    fc = f.scaled(c)
    for norm in (
        lambda g: besov_norm_fourier(g, params, res),
        lambda g: tl_norm_fourier(g, params, res),
        lambda g: besov_norm_means(g, params, pair),
        lambda g: tl_norm_means(g, params, pair),
        lambda g: holder_norm(g, 1.5),
        lambda g: lp_norm(g, 2.0),
        lambda g: lp_norm(g, math.inf),
    ):
        base = norm(f)
        hom_errs.append(abs(norm(fc) - abs(c) * base) / (abs(c) * base))

    ok = max(fpp_errs) < tol_id and mono_ok and max(hom_errs) < tol_hom
    row = _row(
        "exact-identities/fpp=bpp+monotone+homogeneous",
        params,
        fpp_errs,
        ok,
        max_fpp_err=max(fpp_errs),
        q_monotone=mono_ok,
        max_homogeneity_err=max(hom_errs),
    )
    return [row]


def _suite_kernel_atoms(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    pair = build_mean_kernels(2, 0.5, grid)
    spread_cap = config.threshold("kernel-atoms.spread", 2.0)
    rows = []
    for K in (0.5, 1.5, 3.0):
        for L in (0.0, 1.0, 2.0):
            params = SpaceParams(0.5, 2.0, 2.0, grid.n, K=K, L=L, d=1.5)
            consts, all_pass = [], True
            for j in range(0, 7):
                cert = validate_atom(kernel_as_atom(pair, j, params), rand_battery=8)
                consts.append(max(cert.c_smooth, cert.c_moment_poly, cert.c_moment_rand))
                all_pass &= cert.passed
            spread = max(consts) / min(consts)
            ok = all_pass and spread <= spread_cap
            rows.append(
                _row(f"kernel-atoms/K={K},L={L}", params, consts, ok, spread=spread)
            )
    return rows


def _dilation_ratio(base, out, floor: float) -> float:
    """Worst output/input constant ratio.

    The dilation lemma is one-sided: the dilated atom is admissible with the
    input constants, so only growth counts.  The polynomial moment ratio is
    skipped below the roundoff floor, and the random battery is excluded
    entirely because its test fields are not scale-covariant.
    """
    worst = out.c_smooth / base.c_smooth
    b, o = base.c_moment_poly, out.c_moment_poly
    if o > floor:
        worst = max(worst, o / max(b, floor))
    return worst


def _suite_dilation(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    factor = config.threshold("dilation.factor", 1.05)
    params = SpaceParams(0.5, 2.0, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
    ratios, all_ok = [], True
    for _ in range(10):
        nu = int(rng.integers(2, min(6, grid.J - grid_mod.LEVEL_MARGIN) + 1))
        m = tuple(int(rng.integers(0, 1 << nu)) for _ in range(grid.n))
        a = make_atom(nu, m, params, "bump", 1, grid=grid)
        base = validate_atom(a, rand_battery=8)
        floor = 1e-9 * max(base.c_smooth, 1.0)
        for j in (1, nu):
            out = validate_atom(dilate_atom(a, j), rand_battery=8)
            r = _dilation_ratio(base, out, floor)
            ratios.append(r)
            all_ok &= out.passed and r <= factor
    return [_row("dilation/j=1,nu", params, ratios, all_ok)]


def _synthesis_draw(grid, rng, params, factory):
    count = int(rng.integers(3, 9))
    max_level = min(6, grid.J - grid_mod.LEVEL_MARGIN)
    lam = _random_coeffs(grid, rng, max_level, count)
    f = synthesize(lam, factory, mode="lenient", grid=grid)
    return lam, f


def _suite_synthesis(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    factor = config.threshold("synthesis.factor", 100.0)
    rt_tol = config.threshold("synthesis.roundtrip", 1e-6)
    params = SpaceParams(0.5, 2.0, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
    res = make_resolution(grid)

    def factory(nu, m):
        return make_atom(nu, m, params, "bump", 1, grid=grid)

    b_ratios, f_ratios = [], []
    for _ in range(20):
        lam, f = _synthesis_draw(grid, rng, params, factory)
        b_ratios.append(besov_norm_fourier(f, params, res) / bpq_norm(lam, params.p, params.q))
        f_ratios.append(tl_norm_fourier(f, params, res) / fpq_norm(lam, params.p, params.q, grid))
    ok_b = all(r <= factor for r in b_ratios)
    ok_f = all(r <= factor for r in f_ratios)

    pair = build_mean_kernels(2, 0.5, grid)
    depth = min(6, grid.J - grid_mod.LEVEL_MARGIN)
    ana_params = params.with_(d=1.5)
    errs = []
    for _ in range(3):
        f = _random_spectrum_field(grid, rng, 1.0, kmax=(1 << depth) // 2)
        lam, pieces = atoms_mod.analyze(f, depth, pair, ana_params)
        rec = np.zeros(grid.shape, dtype=complex)
        for key, coeff in lam.entries.items():
            rec += coeff * pieces[key].field.values
        errs.append(
            float(np.linalg.norm(rec - f.values) / np.linalg.norm(f.values))
        )
    ok_rt = all(e < rt_tol for e in errs)

    return [
        _row("synthesis/B-bound", params, b_ratios, ok_b),
        _row("synthesis/F-bound", params, f_ratios, ok_f),
        _row("synthesis/calderon-roundtrip", ana_params, errs, ok_rt),
    ]


def _suite_convergence(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    factor = config.threshold("convergence.factor", 10.0)
    test_fn = _random_spectrum_field(grid, rng, 3.0, kmax=16)
    rows = []
    for s, p in ((0.5, 2.0), (0.3, 1.0)):
        params = SpaceParams(s, p, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
        ratios = []
        for decay in (1.0, 1.5):
            entries = {
                (nu, (0,) * grid.n): 2.0 ** (-decay * nu)
                for nu in range(0, min(6, grid.J - grid_mod.LEVEL_MARGIN) + 1)
            }
            lam = CoeffArray(grid.n, entries)
            bound = atoms_mod.convergence_bound(lam, params, test_fn)
            denom = bpq_norm(lam, p, math.inf) * holder_norm(test_fn, params.L)
            ratios.append(bound / denom)
        ok = all(r <= factor for r in ratios)
        rows.append(_row(f"convergence/(s,p)=({s},{p})", params, ratios, ok))
    return rows


def _suite_multiplier(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    bound = config.threshold("multiplier.bound", 50.0)
    infl_cap = config.threshold("multiplier.atom_inflation", 4.0)
    id_tol = config.threshold("multiplier.identity_tol", 1e-12)
    params = SpaceParams(0.5, 2.0, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
    rho = 1.5

    ratios = []
    for _ in range(30):
        phi = _random_spectrum_field(grid, rng, 2.5)
        f = _random_spectrum_field(grid, rng, 1.5)
        _, rep = multiply(phi, f, params, rho=rho)
        ratios.append(rep["ratio"])
    ok_pairs = all(r <= bound for r in ratios)

    one = SampledField(grid, np.ones(grid.shape))
    f = _random_spectrum_field(grid, rng, 1.5)
    _, rep1 = multiply(one, f, params, rho=rho)
    ok_id = abs(rep1["ratio"] - 1.0) <= id_tol

    nu = 2
    m = (1,) * grid.n
    a = make_atom(nu, m, params, "bump", 1, grid=grid)
    base = validate_atom(a, rand_battery=16)
    infl_ratios, ok_atom = [], True
    for _ in range(10):
        phi = _random_spectrum_field(grid, rng, 3.0)
        phi = SampledField(grid, phi.values + 2.0 * phi.max_abs())
        h = holder_norm(phi, 2.0)
        _, cert = multiply_atom(phi, a, rho=2.0, rand_battery=16)
        infl = max(
            cert.c_smooth / base.c_smooth, cert.c_moment_rand / base.c_moment_rand
        )
        infl_ratios.append(infl / h)
        ok_atom &= infl <= infl_cap * h
    return [
        _row("multiplier/30-pairs", params, ratios, ok_pairs, bound=bound),
        _row("multiplier/identity", params, [rep1["ratio"]], ok_id),
        _row("multiplier/atom-inflation", params, infl_ratios, ok_atom),
    ]


def _suite_diffeomorphism(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    compose_bound = config.threshold("diffeomorphism.compose_bound", 10.0)
    box_slack = config.threshold("diffeomorphism.box_slack", 1.1)
    holder_bound = config.threshold("diffeomorphism.holder_bound", 10.0)
    params = SpaceParams(0.5, 2.0, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
    family = [
        make_diffeo("perturbation", alpha, n=grid.n, period=grid.period, rho=2.0)
        for alpha in (0.05, 0.1, 0.2)
    ]

    fields = [
        _random_spectrum_field(grid, rng, 1.5, kmax=grid.size // 8) for _ in range(20)
    ]
    compose_ratios = []
    for phi in family:
        for f in fields:
            _, rep = compose(f, phi, params)
            compose_ratios.append(rep["ratio"])
    ok_compose = max(compose_ratios) <= compose_bound

    box_ok, pinf_ok, box_ratios = True, True, []
    for phi in family:
        f = fields[0]
        rep = lp_change_of_variables(f, phi, 2.0)
        box_ratios.append(rep["box_ratio_max"])
        box_ok &= rep["box_ratio_max"] <= (1.0 / phi.c1) ** grid.n * box_slack
        pinf_ok &= lp_change_of_variables(f, phi, math.inf)["ratio"] == 1.0

    holder_ratios = [
        holder_compose(fields[1], phi, 1.5)["ratio"] for phi in family
    ]
    ok_holder = max(holder_ratios) <= holder_bound

    return [
        _row("diffeomorphism/compose-family", params, compose_ratios, ok_compose),
        _row("diffeomorphism/box-measure", params, box_ratios, box_ok and pinf_ok,
             p_inf_exact=pinf_ok),
        _row("diffeomorphism/holder-family", params, holder_ratios, ok_holder),
    ]


def _suite_transport(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    max_m = config.threshold("transport.max_families", 4.0)
    params = SpaceParams(0.5, 2.0, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
    phi = make_diffeo("perturbation", 0.2, n=grid.n, period=grid.period, rho=2.0)
    max_level = min(5, grid.J - grid_mod.LEVEL_MARGIN)
    atoms = []
    for nu in range(2, max_level + 1):
        step = max(1, (1 << nu) // 8) if grid.n == 1 else max(1, (1 << nu) // 2)
        for m0 in range(0, 1 << nu, step):
            m = (m0,) * grid.n
            atoms.append(make_atom(nu, m, params, "bump", 1, grid=grid))
    plan, relocated, certs = transport_atoms(atoms, phi, rand_battery=8)

    injective = True
    for fam in plan.families:
        seen = set()
        for key in fam:
            target = (key[0], plan.index_map[key])
            injective &= target not in seen
            seen.add(target)
    all_pass = all(c.passed for c in certs)
    smooth = [c.c_smooth for c in certs]
    ok = all_pass and injective and plan.M <= max_m
    return [
        _row(
            "transport/perturbation-0.2",
            params,
            smooth,
            ok,
            families=plan.M,
            d_prime=plan.d_out,
            injective=injective,
            atoms=len(atoms),
        )
    ]


def _suite_ordering(config: ExperimentConfig, rng) -> list[dict]:
    grid = config.grid.build()
    tol = config.threshold("ordering.tolerance", 1e-12)
    base = SpaceParams(0.5, 2.0, 2.0, grid.n, K=1.0, L=1.0, d=1.5)
    violations = 0
    spreads = []
    for _ in range(10):
        nu = int(rng.integers(1, 5))
        m = tuple(int(rng.integers(0, 1 << nu)) for _ in range(grid.n))
        template = str(rng.choice(["bump", "cos4", "poly6"]))
        a = make_atom(nu, m, base, template, 1, grid=grid)
        smooth = []
        for K in (0.0, 0.5, 1.0, 1.5):
            cert = validate_atom(
                atoms_mod.AtomSpec(a.field, a.cube, base.with_(K=K), a.sampler),
                rand_battery=0,
            )
            smooth.append(cert.c_smooth)
        for lo, hi in zip(smooth, smooth[1:]):
            if hi < lo * (1.0 - tol):
                violations += 1
        moments = []
        for L in (0.0, 1.0, 2.0):
            cert = validate_atom(
                atoms_mod.AtomSpec(a.field, a.cube, base.with_(L=L), a.sampler),
                rand_battery=0,
            )
            moments.append(cert.c_moment_poly)
        for lo, hi in zip(moments, moments[1:]):
            if hi < lo * (1.0 - tol) - 1e-300:
                violations += 1
        spreads.append(smooth[-1] / smooth[0] if smooth[0] > 0 else 1.0)
    ok = violations == 0
    return [_row("ordering/K-and-L", base, spreads, ok, violations=violations)]


SUITES: dict[str, Callable] = {
    "norm-equivalence": _suite_norm_equivalence,
    "resolution-independence": _suite_resolution_independence,
    "holder-besov": _suite_holder_besov,
    "exact-identities": _suite_exact_identities,
    "kernel-atoms": _suite_kernel_atoms,
    "dilation": _suite_dilation,
    "synthesis": _suite_synthesis,
    "convergence": _suite_convergence,
    "multiplier": _suite_multiplier,
    "diffeomorphism": _suite_diffeomorphism,
    "transport": _suite_transport,
    "ordering": _suite_ordering,
}


# -- runner -----------------------------------------------------------------------


def _thread_count() -> int:
    raw = os.environ.get("ATOMLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"ATOMLAB_THREADS must be an integer, got {raw!r}")


def _run_suite(name: str, config: ExperimentConfig) -> list[dict]:
    tag = list(SUITES).index(name)
    rng = _rng(config.seed, 0x50 + tag)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return SUITES[name](config, rng)
    except Exception as exc:
        raise SuiteError(f"suite {name!r} failed: {exc}") from exc


def run_experiment(config: ExperimentConfig, out_dir=None) -> Report:
    """Run the selected suites and assemble the report in declaration order."""
    start = time.perf_counter()
    names = [n for n in SUITES if n in config.suites]
    threads = _thread_count()
    if threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {n: pool.submit(_run_suite, n, config) for n in names}
            results = [futures[n].result() for n in names]
    else:
        results = [_run_suite(n, config) for n in names]
    experiments = [row for rows in results for row in rows]
    passed = all(row["pass"] for row in experiments)
    report = Report(
        config=config.as_dict(),
        experiments=experiments,
        passed=passed,
        wall_clock=time.perf_counter() - start,
    )
    if out_dir is not None:
        emit_tables(report, out_dir)
    return report


# -- emission ---------------------------------------------------------------------


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_tables(report: Report, out_dir, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    """Write report.json, ratios.csv, and a gnuplot script; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(report.to_json() + "\n")
        written.append(path)
    if "csv" in formats:
        path = out / "ratios.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in report.table():
                writer.writerow([_csv_cell(row[c]) for c in CSV_COLUMNS])
        written.append(path)
        gp = out / "ratios.gp"
        gp.write_text(
            "\n".join(
                [
                    "set datafile separator ','",
                    "set key off",
                    "set logscale y",
                    "set xlabel 'experiment index'",
                    "set ylabel 'ratio'",
                    "set terminal png size 1200,600",
                    "set output 'ratios.png'",
                    "plot 'ratios.csv' every ::1 using 0:8 with points pt 7, \\",
                    "     'ratios.csv' every ::1 using 0:9 with points pt 6, \\",
                    "     'ratios.csv' every ::1 using 0:7 with points pt 4",
                    "",
                ]
            )
        )
        written.append(gp)
    return written


def read_table(path) -> list[dict]:
    """Parse a ratios.csv back into typed rows (inverse of emit_tables)."""
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "experiment": rec["experiment"],
                    "s": float(rec["s"]),
                    "p": float(rec["p"]),
                    "q": float(rec["q"]),
                    "K": float(rec["K"]),
                    "L": float(rec["L"]),
                    "ratio_min": float(rec["ratio_min"]),
                    "ratio_med": float(rec["ratio_med"]),
                    "ratio_max": float(rec["ratio_max"]),
                    "pass": rec["pass"] == "true",
                }
            )
    return rows

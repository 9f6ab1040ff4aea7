"""Command line front end.

Every subcommand prints a small JSON document to stdout and communicates
through exit codes: 0 all thresholds pass, 1 a threshold or certificate
failed, 2 the configuration was rejected, 3 a numerical computation failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from ._errors import (
    BoundsError,
    ConfigError,
    HypothesisError,
    NumericsError,
    ValidationError,
)
from .atoms import make_atom, synthesize, validate_atom
from .grid import Grid
from .harness import (
    CORPUS_KINDS,
    ENGINES,
    SUITES,
    CorpusSpec,
    ExperimentConfig,
    GridSpec,
    _jsonable,
    _random_coeffs,
    emit_tables,
    generate_corpus,
    load_config,
    run_experiment,
)
from .localmeans import besov_norm_means, build_mean_kernels, tl_norm_means
from .operators import (
    diffeo_certificate,
    make_diffeo,
    multiply,
    transport_atoms,
    write_diffeo,
)
from .spaces import SpaceParams, bpq_norm, fpq_norm
from .spectral import besov_norm_fourier, make_resolution, tl_norm_fourier

_DEFAULT_SPACE = "0.5,2,2,1,1,1.5"


def _parse_grid(text: str) -> GridSpec:
    try:
        n_s, j_s = text.split(",")
        return GridSpec(n=int(n_s), J=int(j_s))
    except ValueError as exc:
        raise ConfigError(f"--grid expects 'n,J', got {text!r}") from exc


def _parse_space(text: str, n: int) -> SpaceParams:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 6:
        raise ConfigError(f"--space expects 's,p,q,K,L,d', got {text!r}")
    try:
        num = [math.inf if p == "inf" else float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"--space has a non-numeric entry: {text!r}") from exc
    s, p, q, K, L, d = num
    return SpaceParams(s, p, q, n, K=K, L=L, d=d)


def _corpus_field(args, grid_spec: GridSpec):
    config = ExperimentConfig(
        seed=args.seed,
        grid=grid_spec,
        corpus=CorpusSpec(kind=args.kind, count=args.index + 1),
    )
    return generate_corpus(config)[args.index]


def _emit(payload: dict) -> None:
    print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))


def _cmd_norm(args) -> int:
    grid_spec = _parse_grid(args.grid)
    grid = grid_spec.build()
    params = _parse_space(args.space, grid.n)
    f = _corpus_field(args, grid_spec)
    values: dict[str, float] = {}
    if args.engine in ("fourier", "both"):
        res = make_resolution(grid)
        values["B_fourier"] = besov_norm_fourier(f, params, res)
        if not math.isinf(params.p):
            values["F_fourier"] = tl_norm_fourier(f, params, res)
    if args.engine in ("means", "both"):
        pair = build_mean_kernels(2, 0.5, grid)
        values["B_means"] = besov_norm_means(f, params, pair)
        if not math.isinf(params.p):
            values["F_means"] = tl_norm_means(f, params, pair)
    if args.engine == "both":
        values["B_ratio"] = values["B_fourier"] / values["B_means"]
    _emit({"command": "norm", "space": params.as_dict(), "values": values})
    return 0


def _cmd_validate_atom(args) -> int:
    grid_spec = _parse_grid(args.grid)
    grid = grid_spec.build()
    params = _parse_space(args.space, grid.n)
    a = make_atom(
        args.nu,
        (args.m,) * grid.n,
        params,
        args.template,
        args.moment_order,
        grid=grid,
    )
    cert = validate_atom(a, target_c=args.target_c)
    _emit(
        {
            "command": "validate-atom",
            "cube": {"nu": cert.cube.nu, "m": list(cert.cube.m), "d": cert.cube.d},
            "c_support": cert.c_support,
            "c_smooth": cert.c_smooth,
            "c_moment_poly": cert.c_moment_poly,
            "c_moment_rand": cert.c_moment_rand,
            "kappa": cert.kappa,
            "pass": cert.passed,
        }
    )
    return 0 if cert.passed else 1


def _cmd_synthesize(args) -> int:
    grid_spec = _parse_grid(args.grid)
    grid = grid_spec.build()
    params = _parse_space(args.space, grid.n)
    from numpy.random import SeedSequence, default_rng

    rng = default_rng(SeedSequence((args.seed, 0x51)))
    lam = _random_coeffs(grid, rng, min(4, grid.J - 4), args.count)
    f = synthesize(
        lam, lambda nu, m: make_atom(nu, m, params, "bump", 1, grid=grid), grid=grid
    )
    res = make_resolution(grid)
    norm_b = besov_norm_fourier(f, params, res)
    coeff_b = bpq_norm(lam, params.p, params.q)
    payload = {
        "command": "synthesize",
        "space": params.as_dict(),
        "terms": args.count,
        "B_norm": norm_b,
        "coeff_b_norm": coeff_b,
        "ratio": norm_b / coeff_b if coeff_b else 0.0,
    }
    if not math.isinf(params.p):
        payload["F_norm"] = tl_norm_fourier(f, params, res)
        payload["coeff_f_norm"] = fpq_norm(lam, params.p, params.q, grid)
    _emit(payload)
    return 0


def _cmd_analyze(args) -> int:
    import numpy as np

    from .atoms import analyze

    grid_spec = _parse_grid(args.grid)
    grid = grid_spec.build()
    params = _parse_space(args.space, grid.n)
    if params.d < 1.5:
        params = params.with_(d=1.5)
    f = _corpus_field(args, grid_spec)
    pair = build_mean_kernels(2, 0.5, grid)
    lam, atoms = analyze(f, args.depth, pair, params)
    total = np.zeros(grid.shape, dtype=np.complex128)
    for key, coeff in lam.sorted_items():
        total = total + coeff * atoms[key].field.values
    scale = f.max_abs() or 1.0
    err = float(np.max(np.abs(total - f.values))) / scale
    _emit(
        {
            "command": "analyze",
            "space": params.as_dict(),
            "depth": args.depth,
            "coefficients": len(lam.entries),
            "roundtrip_error": err,
        }
    )
    return 0


def _cmd_multiply(args) -> int:
    grid_spec = _parse_grid(args.grid)
    grid = grid_spec.build()
    params = _parse_space(args.space, grid.n)
    phi = _corpus_field(args, grid_spec)
    f_args = argparse.Namespace(**{**vars(args), "index": args.index + 1})
    f = _corpus_field(f_args, grid_spec)
    g, report = multiply(phi, f, params, rho=args.rho)
    _emit({"command": "multiply", "space": params.as_dict(), **report})
    return 0


def _cmd_diffeo(args) -> int:
    grid_spec = _parse_grid(args.grid)
    kind = "identity" if args.alpha == 0.0 else "perturbation"
    d = make_diffeo(kind, alpha=args.alpha, n=grid_spec.n, period=grid_spec.period)
    cert = diffeo_certificate(d, seed=args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_diffeo(d, out / "diffeo.txt", J=grid_spec.J)
    _emit(
        {
            "command": "diffeo",
            "kind": d.kind,
            "alpha": args.alpha,
            "c1": d.c1,
            "c2": d.c2,
            "jacobian_bound": d.jacobian_bound,
            **cert,
        }
    )
    return 0 if cert["pass"] else 1


def _cmd_transport(args) -> int:
    grid_spec = _parse_grid(args.grid)
    grid = grid_spec.build()
    params = _parse_space(args.space, grid.n)
    kind = "identity" if args.alpha == 0.0 else "perturbation"
    phi = make_diffeo(
        kind, alpha=args.alpha, n=grid.n, period=grid.period,
        rho=max(2.0, params.L + 1.0),
    )
    step = max(1, (1 << args.nu) // 4)
    atoms = [
        make_atom(args.nu, (m,) * grid.n, params, "bump", 1, grid=grid)
        for m in range(0, 1 << args.nu, step)
    ]
    plan, moved, certs = transport_atoms(atoms, phi)
    ok = all(c.passed for c in certs)
    _emit(
        {
            "command": "transport",
            "space": params.as_dict(),
            "atoms": len(atoms),
            "certificates_pass": ok,
            **plan.as_json(),
        }
    )
    return 0 if ok else 1


def _cmd_suite(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        config = ExperimentConfig(
            seed=args.seed,
            grid=_parse_grid(args.grid),
            corpus=CorpusSpec(kind="mixed", count=30),
            engine=args.engine,
            suites=tuple(SUITES),
        )
    if args.seed_override is not None:
        config = dataclasses.replace(config, seed=args.seed_override)
    if args.suite:
        unknown = set(args.suite) - set(SUITES)
        if unknown:
            raise ConfigError(f"unknown suites: {sorted(unknown)}")
        config = dataclasses.replace(config, suites=tuple(args.suite))
    report = run_experiment(config)
    if args.out:
        emit_tables(report, args.out)
    for line in report.table():
        status = "pass" if line["pass"] else "FAIL"
        print(
            f"{status}  {line['experiment']:40s} "
            f"[{line['ratio_min']:.4g}, {line['ratio_med']:.4g}, {line['ratio_max']:.4g}]"
        )
    print(f"report: {'pass' if report.passed else 'FAIL'} "
          f"({len(report.experiments)} experiments, {report.wall_clock:.1f}s)")
    return 0 if report.passed else 1


def _add_common(sub, *, space: bool = True, corpus: bool = False) -> None:
    sub.add_argument("--seed", type=int, default=0, help="RNG seed")
    sub.add_argument("--grid", default="1,10", help="grid as 'n,J'")
    if space:
        sub.add_argument(
            "--space", default=_DEFAULT_SPACE, help="space as 's,p,q,K,L,d' (p,q may be 'inf')"
        )
    if corpus:
        sub.add_argument("--kind", choices=CORPUS_KINDS, default="trig")
        sub.add_argument("--index", type=int, default=0, help="corpus field index")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atomlab",
        description="Function-space laboratory: norms, atoms, and transported decompositions.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("norm", help="compute norms of a seeded corpus field")
    _add_common(p, corpus=True)
    p.add_argument("--engine", choices=ENGINES, default="both")
    p.set_defaults(func=_cmd_norm)

    p = subs.add_parser("validate-atom", help="build an atom and print its certificate")
    _add_common(p)
    p.add_argument("--nu", type=int, default=3, help="cube level")
    p.add_argument("--m", type=int, default=0, help="cube index per axis")
    p.add_argument("--template", default="bump")
    p.add_argument("--moment-order", type=int, default=0)
    p.add_argument("--target-c", type=float, default=1.0 + 1e-9)
    p.set_defaults(func=_cmd_validate_atom)

    p = subs.add_parser("synthesize", help="sum random atoms and compare norms")
    _add_common(p)
    p.add_argument("--count", type=int, default=8, help="number of coefficients")
    p.set_defaults(func=_cmd_synthesize)

    p = subs.add_parser("analyze", help="decompose a corpus field into localized atoms")
    _add_common(p, corpus=True)
    p.add_argument("--depth", type=int, default=4, help="finest level")
    p.set_defaults(func=_cmd_analyze)

    p = subs.add_parser("multiply", help="pointwise multiplier experiment")
    _add_common(p, corpus=True)
    p.add_argument("--rho", type=float, default=None, help="multiplier smoothness")
    p.set_defaults(func=_cmd_multiply)

    p = subs.add_parser("diffeo", help="build and certify a torus diffeomorphism")
    _add_common(p, space=False)
    p.add_argument("--alpha", type=float, default=0.2, help="perturbation amplitude")
    p.add_argument("--out", default=None, help="directory for the map file")
    p.set_defaults(func=_cmd_diffeo)

    p = subs.add_parser("transport", help="relocate atoms along a diffeomorphism")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--nu", type=int, default=3, help="atom level")
    p.set_defaults(func=_cmd_transport)

    p = subs.add_parser("suite", help="run experiment suites against thresholds")
    p.add_argument("--config", default=None, help="JSON config path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seed-override", type=int, default=None,
                   help="replace the seed from --config")
    p.add_argument("--grid", default="1,10")
    p.add_argument("--engine", choices=ENGINES, default="both")
    p.add_argument("--suite", action="append", default=None,
                   help="restrict to a named suite (repeatable)")
    p.add_argument("--out", default=None, help="directory for report artifacts")
    p.set_defaults(func=_cmd_suite)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, HypothesisError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1
    except (BoundsError, NumericsError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

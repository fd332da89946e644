"""
Command-line front end.

    gammakit solve --config run.json --out results/
    gammakit homogenize --config run.json --out results/ --deterministic
    gammakit verify levin --seed 3
    gammakit catalog --json

Exit codes: 0 on success, 1 for bad input (configuration, unknown suite),
2 when a solve did not converge or a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig, apply_overrides, build_problem, load_config
from .errors import ConfigError, GammakitError
from .fields import Field
from .gfld import write_field
from .homogenize import EffectiveResponse, homogenize
from .physics import CATALOG, Problem
from .solver import solve_cell, solve_infinite
from .tensors import bulk_modulus_from_compliance
from .verify import SUITES, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_FAILED = 2

THREADS_VARIABLE = "GAMMAKIT_THREADS"


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        filename=args.log_file,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    try:
        return args.command(args)
    except (ConfigError, GammakitError) as e:
        logger.debug("Rejected input", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gammakit", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    parser.add_argument("--log-file", metavar="PATH", help="log here instead of stderr")
    subparsers = parser.add_subparsers(required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads", type=int, metavar="N", help=f"worker cap (default: ${THREADS_VARIABLE})"
    )
    common.add_argument(
        "--seed", type=int, metavar="N", help="seed for random sampling (default 0)"
    )
    common.add_argument("--tol", type=float, metavar="X", help="relative residual target")
    common.add_argument("--resolution", type=int, metavar="N", help="samples per axis")
    common.add_argument("--deterministic", action="store_true", help="omit timings from reports")
    common.add_argument("--json", action="store_true", help="print the report as JSON")
    common.add_argument("--out", type=Path, metavar="PATH", help="output directory")

    solve = subparsers.add_parser("solve", parents=[common], help="solve one problem")
    solve.add_argument("--config", type=Path, metavar="PATH", required=True)
    solve.add_argument(
        "--profile", metavar="axis=N", action="append", default=[],
        help="write a CSV slice of E and J along axis N (1-based)",
    )
    solve.set_defaults(command=cmd_solve)

    hom = subparsers.add_parser("homogenize", parents=[common], help="effective tensor and source")
    hom.add_argument("--config", type=Path, metavar="PATH", required=True)
    hom.set_defaults(command=cmd_homogenize)

    verify = subparsers.add_parser(
        "verify", parents=[common], help="run a suite of invariant checks"
    )
    verify.add_argument("suite", help=", ".join(SUITES))
    verify.add_argument(
        "--config", type=Path, metavar="PATH", help="take resolution and seed from here"
    )
    verify.set_defaults(command=cmd_verify)

    catalog = subparsers.add_parser("catalog", help="list supported physics")
    catalog.add_argument("--json", action="store_true")
    catalog.set_defaults(command=cmd_catalog)
    return parser


# Shared plumbing #############################################################


def resolve_threads(flag: Optional[int]) -> Optional[int]:
    """
    --threads, else $GAMMAKIT_THREADS, else None (library default).
    """
    if flag is not None:
        if flag < 1:
            raise ConfigError(f"--threads must be at least 1, got {flag}")
        return flag
    raw = os.environ.get(THREADS_VARIABLE)
    if not raw:
        return None
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"${THREADS_VARIABLE} is not an integer: {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"${THREADS_VARIABLE} must be at least 1, got {threads}")
    return threads


def _load(args) -> Tuple[RunConfig, Problem]:
    cfg = apply_overrides(load_config(args.config), tolerance=args.tol, resolution=args.resolution)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg, build_problem(cfg, base_dir=args.config.parent)


def _output_dir(args) -> Path:
    out = args.out if args.out is not None else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path: Path, obj) -> None:
    # Sorted keys and fixed formatting keep reports byte-identical across runs.
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="UTF-8")


def _emit(args, obj) -> None:
    if args.json:
        print(json.dumps(obj, indent=2, sort_keys=True))


def parse_profile(text: str, dim: int) -> int:
    "Zero-based axis from 'axis=N' with N counted from 1."
    key, _, value = text.partition("=")
    if key.strip() != "axis" or not value.strip().isdigit():
        raise ConfigError(f"--profile expects axis=N, got {text!r}")
    axis = int(value) - 1
    if not 0 <= axis < dim:
        raise ConfigError(f"--profile axis must lie in 1..{dim}, got {axis + 1}")
    return axis


def write_profile(path: Path, E: Field, J: Field, axis: int) -> None:
    """
    E and J along one axis through the origin of the cell, one row per
    sample, real and imaginary parts of every component.
    """
    grid = E.grid
    labels = E.layout.component_labels()
    header = ["x"]
    for name in ("E", "J"):
        for label in labels:
            header += [f"{name}.{label}.re", f"{name}.{label}.im"]
    x = grid.points()
    E_values = E.to_real().values
    J_values = J.to_real().values
    with open(path, "w", encoding="UTF-8", newline="") as profile_file:
        writer = csv.writer(profile_file)
        writer.writerow(header)
        for t in range(grid.samples[axis]):
            multi_index = [0] * grid.dim
            multi_index[axis] = t
            point = grid.index_of(*multi_index)
            row: List[object] = [repr(float(x[point, axis]))]
            for values in (E_values, J_values):
                for z in values[point]:
                    row += [repr(float(z.real)), repr(float(z.imag))]
            writer.writerow(row)


# Commands ####################################################################


def cmd_solve(args) -> int:
    cfg, p = _load(args)
    axes = [parse_profile(text, p.grid.dim) for text in args.profile]
    opts = cfg.solve_options(resolve_threads(args.threads))

    if cfg.applied_field is None:
        logger.info("Solving the infinite-body form of %s", p.physics)
        E, J, report = solve_infinite(p, opts)
    else:
        if len(cfg.applied_field) != p.m:
            raise ConfigError(f"applied_field needs {p.m} components for {p.physics}")
        logger.info("Solving the %s cell problem with E0 = %s", p.physics, cfg.applied_field)
        E, J, report = solve_cell(p, cfg.applied_field, opts)

    out = _output_dir(args)
    write_field(out / "E.gfld", E)
    write_field(out / "J.gfld", J)
    for axis in axes:
        write_profile(out / f"profile-axis{axis + 1}.csv", E, J, axis)
    obj = {"problem": p.describe(), "report": report.to_json(args.deterministic)}
    write_json(out / "report.json", obj)
    _emit(args, obj)

    if not report.converged:
        print(
            f"error: not converged (relative residual {report.relative_residual:.3g})",
            file=sys.stderr,
        )
        return EXIT_FAILED
    return EXIT_OK


def derived_quantities(p: Problem, response: EffectiveResponse) -> dict:
    """
    Scalars read off L* for physics that have them: the bulk modulus and
    thermal expansion of an isotropic thermoelastic composite.
    """
    if p.physics != "thermoelasticity" or len(response.basis) != p.m or not response.converged:
        return {}
    n = p.m - 1
    return {
        "bulk_modulus": bulk_modulus_from_compliance(response.L_star[:n, :n]),
        "thermal_expansion": float(np.real(response.L_star[0, n])),
    }


def cmd_homogenize(args) -> int:
    cfg, p = _load(args)
    threads = resolve_threads(args.threads)
    # Columns in parallel, one FFT worker each; otherwise threaded transforms.
    column_workers = threads if threads is not None and threads > 1 else None
    opts = cfg.solve_options(1 if column_workers else threads)

    response = homogenize(
        p, opts, cfg.components, max_workers=column_workers, keep_fields=cfg.dump_columns
    )

    out = _output_dir(args)
    for number, pair in enumerate(response.fields):
        if pair is None:
            continue
        E, J = pair
        write_field(out / f"column-{number}-E.gfld", E)
        write_field(out / f"column-{number}-J.gfld", J)
    obj = {
        "problem": p.describe(),
        "response": response.to_json(args.deterministic),
        "derived": derived_quantities(p, response),
    }
    write_json(out / "effective.json", obj)
    _emit(args, obj)

    if not response.converged:
        failed = [name for name, bad in zip(response.basis, response.failed) if bad]
        print(f"error: columns failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; known: {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_BAD_INPUT
    seed, resolution = 0, 32
    if args.config is not None:
        cfg = load_config(args.config)
        seed, resolution = cfg.seed, max(cfg.grid.build().samples)
    if args.seed is not None:
        seed = args.seed
    if args.resolution is not None:
        resolution = args.resolution

    report = run_suite(
        args.suite,
        seed=seed,
        resolution=resolution,
        workers=resolve_threads(args.threads),
        progress=not args.json and sys.stderr.isatty(),
    )
    obj = report.to_json()
    if args.out is not None:
        write_json(_output_dir(args) / f"verify-{args.suite}.json", obj)
    if args.json:
        _emit(args, obj)
    else:
        for check in report.checks:
            mark = "ok  " if check.passed else "FAIL"
            print(f"{mark} {check.name}: {check.value:.3g} (threshold {check.threshold:.3g})")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_catalog(args) -> int:
    entries = [entry.to_json() for entry in CATALOG]
    if args.json:
        print(json.dumps(entries, indent=2, sort_keys=True))
        return EXIT_OK
    for entry in entries:
        dims = "/".join(f"{d}D" for d in entry["dims"])
        print(f"{entry['tag']:<18} {dims:<6} {entry['theory']}")
        print(f"{'':<18} layout: {', '.join(entry['layout'])}")
        print(f"{'':<18} gamma:  {entry['gamma']}")
    return EXIT_OK

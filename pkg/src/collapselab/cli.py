"""Command-line entry point.

Exit codes: 0 success, 1 malformed config, 2 precondition failure,
3 check failure (``run --check`` or ``check``).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, acceptance, csl_model, rel_kernels
from .config import ConfigError, Scenario, load_scenarios
from .experiments import RUNNERS, ExperimentOutput

OUTPUT_ENV = "COLLAPSELAB_OUTPUT"
EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_CHECK = 0, 1, 2, 3


def versions() -> dict[str, str]:
    return {"collapselab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0]}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, Path):
        return str(v)
    return v


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)] + [",".join(format_value(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "collapselab_output"))


def write_scenario(sc: Scenario, out: ExperimentOutput, root: Path) -> Path:
    target = sc.output_dir if sc.output_dir is not None else root / sc.name
    target.mkdir(parents=True, exist_ok=True)
    write_json(target / "results.json", {
        "scenario": sc.name,
        "experiment": sc.experiment,
        "seed": sc.seed,
        "parameters": dict(sc.raw),
        "results": out.results,
        "check": out.check,
        "versions": versions(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    })
    for name, (header, rows) in out.series.items():
        write_csv(target / f"{name}.csv", header, rows)
    (target / "report.txt").write_text("\n".join(out.report) + "\n")
    return target


def cmd_run(args) -> int:
    try:
        scenarios = load_scenarios(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(args.output) if args.output else default_output_dir()
    failed = []
    for sc in scenarios:
        try:
            out = RUNNERS[sc.experiment](sc, jobs=args.jobs, deep=args.deep)
        except ValueError as exc:
            print(f"[{sc.name}] precondition failed: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        target = write_scenario(sc, out, root)
        print("\n".join(out.report))
        print(f"  wrote {target}")
        if out.check is False:
            failed.append(sc.name)
    if args.check and failed:
        print(f"checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_check(args) -> int:
    results = acceptance.run_suite(seed=args.seed, deep=args.deep)
    for r in results:
        print(r.line())
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    if args.json:
        write_json(Path(args.json), {"seed": args.seed, "deep": args.deep, "versions": versions(),
                                     "criteria": [r.as_dict() for r in results]})
    return EXIT_CHECK if n_fail else EXIT_OK


def cmd_kernel_scan(args) -> int:
    if not args.a > 0 or not 0 < args.x_min < args.x_max or args.n_points < 2:
        print("need a > 0, 0 < x-min < x-max and n-points >= 2", file=sys.stderr)
        return EXIT_PRECONDITION
    x = np.linspace(args.x_min, args.x_max, args.n_points)
    rows = rel_kernels.kernel_scan(args.kind, args.a, x)
    header = ["argument", "value"]
    if args.output:
        write_csv(Path(args.output), header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(format_value(v) for v in row))
    return EXIT_OK


def cmd_report_params(args) -> int:
    try:
        params = csl_model.CslParameters(lam=args.lam, a=args.a)
        rel = csl_model.parameter_relations(params).as_dict()
    except ValueError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    if args.json:
        print(json.dumps(_jsonable(rel), sort_keys=True, indent=2))
    else:
        for k, v in rel.items():
            print(f"{k} = {v['value']:.6g} {v['unit']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collapselab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"collapselab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every scenario in a config file")
    run.add_argument("config")
    run.add_argument("--output", help=f"output root (default ${OUTPUT_ENV} or ./collapselab_output)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for trajectory batches")
    run.add_argument("--deep", action="store_true", help="ten times more trajectories")
    run.add_argument("--check", action="store_true", help="exit 3 when a scenario check fails")
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check", help="run the acceptance suite")
    chk.add_argument("--deep", action="store_true")
    chk.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    chk.add_argument("--json", help="also write the results to this JSON file")
    chk.set_defaults(func=cmd_check)

    ks = sub.add_parser("kernel-scan", help="tabulate a relativistic kernel")
    ks.add_argument("--kind", choices=("spacelike", "timelike", "nonrel"), required=True)
    ks.add_argument("--a", type=float, required=True, help="smearing length (natural units)")
    ks.add_argument("--x-min", type=float, default=0.05)
    ks.add_argument("--x-max", type=float, default=20.0)
    ks.add_argument("--n-points", type=int, default=400)
    ks.add_argument("--output", help="CSV path (default stdout)")
    ks.set_defaults(func=cmd_kernel_scan)

    rp = sub.add_parser("report-params", help="derived dimensionless numbers for a parameter set")
    rp.add_argument("--lam", type=float, default=1e-16, help="collapse rate in 1/s")
    rp.add_argument("--a", type=float, default=1e-5, help="localization length in cm")
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(func=cmd_report_params)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

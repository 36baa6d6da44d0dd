"""Command-line entry point (``fqpol`` or ``python -m fqpol``)."""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import dicke, xcheck
from .lindblad import InvariantBreach
from .model import PhysicalConfig, coupling_strength, gibbs_population
from .scenarios import (ConfigError, SamplingSpec, idealized_csv, load_config, run_scenario,
                        write_atomic)

EXIT_OK, EXIT_USAGE, EXIT_BREACH, EXIT_CHECK_FAILED = 0, 2, 3, 4


def _simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.n_steps is not None:
        cfg = replace(cfg, schedule=replace(cfg.schedule, n_steps=args.n_steps))
    if args.seed is not None and cfg.sampling is not None:
        cfg = replace(cfg, sampling=SamplingSpec(args.seed, cfg.sampling.region_half_width_m,
                                                 cfg.sampling.detuning_sigma_rad_s))
    try:
        result = run_scenario(cfg, args.out, stem=Path(args.config).stem)
    except InvariantBreach as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_BREACH
    side = result.sidecar
    print(f"final mean p_up = {result.final_p_up:.6f}")
    if "schedule" in side:
        print(f"steps run: {side['schedule']['steps_run']} "
              f"(stopped by {side['schedule']['stopped_by']})")
    print(f"wrote {result.csv_path} and {result.json_path}")
    return EXIT_OK


def _idealized(args) -> int:
    if args.m < 1 or args.cycles < 1:
        print("error: --m and --cycles must be positive", file=sys.stderr)
        return EXIT_USAGE
    values = dicke.idealized_protocol(args.m, args.cycles, args.mode)
    text = idealized_csv(values, args.m)
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _coupling(args) -> int:
    try:
        g = coupling_strength(PhysicalConfig(), (args.x, args.y))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{g:.6f}")
    return EXIT_OK


def _gibbs(args) -> int:
    try:
        p = gibbs_population(args.field_mT * 1e-3, args.temp_mK * 1e-3)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{p:.6f}")
    return EXIT_OK


def _xcheck(args) -> int:
    try:
        report = xcheck.run_all(args.m, equivalence=not args.skip_equivalence)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = xcheck.to_json(report) + "\n"
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


def _sweep_one(path: str, out: str) -> tuple[str, int, str]:
    try:
        result = run_scenario(load_config(path), out, stem=Path(path).stem)
        return path, EXIT_OK, f"final mean p_up = {result.final_p_up:.6f}"
    except ConfigError as exc:
        return path, EXIT_USAGE, str(exc)
    except InvariantBreach as exc:
        return path, EXIT_BREACH, str(exc)


def _sweep(args) -> int:
    paths = sorted(str(p) for p in Path(args.config_dir).glob("*.json"))
    if not paths:
        print(f"error: no *.json configs in {args.config_dir}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or args.config_dir
    if args.jobs <= 1:
        results = [_sweep_one(p, out) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, paths, [out] * len(paths)))
    worst = EXIT_OK
    for path, code, message in results:
        print(f"{Path(path).name}: {'ok' if code == EXIT_OK else 'FAILED'} ({message})")
        worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fqpol", description=(
        "Simulate flux-qubit mediated polarization of electron spin ensembles."))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override sampling.seed")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--n-steps", type=int, help="override schedule.n_steps")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("idealized", help="idealized protocol on the sector tables")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--mode", choices=("step1", "step1+2"), default="step1+2")
    p.add_argument("--cycles", type=int, required=True)
    p.add_argument("--out", help="CSV file (default: stdout)")
    p.set_defaults(func=_idealized)

    p = sub.add_parser("coupling", help="coupling (rad/s) at a position inside the loop")
    p.add_argument("--x", type=float, required=True, help="metres from the centre")
    p.add_argument("--y", type=float, required=True, help="metres from the centre")
    p.set_defaults(func=_coupling)

    p = sub.add_parser("gibbs", help="thermal excited-state population")
    p.add_argument("--field-mT", type=float, required=True)
    p.add_argument("--temp-mK", type=float, required=True)
    p.set_defaults(func=_gibbs)

    p = sub.add_parser("xcheck", help="brute-force consistency report (JSON)")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", help="JSON file (default: stdout)")
    p.add_argument("--skip-equivalence", action="store_true",
                   help="skip the density-matrix vs table comparison")
    p.set_defaults(func=_xcheck)

    p = sub.add_parser("sweep", help="run every *.json config in a directory")
    p.add_argument("--config-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory (default: the config directory)")
    p.set_defaults(func=_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``excitonwalk run|ingest|presets|version``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .analysis import PowerLawSettings, msd, power_law_exponent, subdiffusive_onset, trajectory_coherence
from .experiments import ConfigError, ExperimentConfig, list_presets, preset_config, run_experiment
from .io import TrajectoryFormatError, export_series, ingest_trajectory
from .model import SITE_MAP_VARIANTS, SiteMap, fmo_site_map
from .propagation import PropagationError

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4


def _parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="excitonwalk", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or a JSON config")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("preset", nargs="?", help="preset name (see 'presets')")
    src.add_argument("--config", help="path to a JSON config file")
    run.add_argument("--set", dest="overrides", action="append", type=_parse_override, default=[],
                     metavar="KEY=VALUE", help="override a dotted config key; VALUE is parsed as JSON")
    run.add_argument("--out", help="output root (default $EXCITONWALK_OUTPUT or cwd)")
    run.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")

    ing = sub.add_parser("ingest", help="analyse an external density-matrix trajectory")
    ing.add_argument("path")
    ing.add_argument("--sites", type=int, required=True)
    ing.add_argument("--site-map", default="chain", choices=("chain", *SITE_MAP_VARIANTS))
    ing.add_argument("--origin", type=int, default=None, help="0-based origin site for the MSD")
    ing.add_argument("--order", type=int, default=None, help="polynomial interpolation order, e.g. 4")
    ing.add_argument("--fine-step", type=float, default=None)
    ing.add_argument("--tolerance", type=float, default=1e-6)
    ing.add_argument("--window", type=float, default=5, help="power-law window (integer = points)")
    ing.add_argument("--out", default=".", help="directory for msd.csv, b.csv, coherence.csv")

    pre = sub.add_parser("presets", help="list available presets")
    pre.add_argument("--json", action="store_true")
    sub.add_parser("version", help="print the package version")
    return parser


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else preset_config(args.preset)
    if args.overrides:
        cfg = cfg.with_overrides(dict(args.overrides))
    if args.dump_config:
        print(cfg.to_json())
        return EXIT_OK
    result = run_experiment(cfg, args.out)
    print(f"wrote {len(result.files)} files to {result.output_dir}")
    return EXIT_OK


def _cmd_ingest(args) -> int:
    from pathlib import Path

    if args.site_map == "chain":
        site_map = SiteMap.chain(args.sites, args.origin)
    else:
        site_map = fmo_site_map(args.site_map, origin_site=5 if args.origin is None else args.origin)
    traj = ingest_trajectory(args.path, args.sites, site_map, interpolation=args.order,
                             fine_step=args.fine_step, tolerance=args.tolerance)
    window = int(args.window) if float(args.window).is_integer() else args.window
    m = msd(traj, site_map)
    b = power_law_exponent(m, PowerLawSettings(window))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    unit = traj.provenance.get("time_unit", "fs")
    export_series(m, out / "msd.csv", unit)
    export_series(b, out / "b.csv", unit)
    if traj.states is not None:
        export_series(trajectory_coherence(traj), out / "coherence.csv", unit)
    onset = subdiffusive_onset(b)
    print(json.dumps({"samples": len(traj), "onset": onset}))
    return EXIT_OK


def _cmd_presets(args) -> int:
    catalog = list_presets()
    if args.json:
        print(json.dumps(catalog, indent=2))
    else:
        width = max(len(p["name"]) for p in catalog)
        for p in catalog:
            print(f"{p['name']:<{width}}  {p['description']}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "ingest": _cmd_ingest, "presets": _cmd_presets}
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        return handlers[args.command](args)
    except PropagationError as exc:
        print(f"invariant violation at t={exc.time:g}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, TrajectoryFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

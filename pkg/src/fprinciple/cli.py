"""Command line entry point: run, sweep, validate, presets, replay."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import experiment as ex
from .flow import TrajectoryBoundError
from .grad import DivergenceError

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGENCE, EXIT_IO = 0, 1, 2, 3


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _common(p: argparse.ArgumentParser, need_source: bool = True):
    if need_source:
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="JSON experiment config")
        src.add_argument("--preset", help="name of a bundled preset")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=_u64, help="override the config seed")
    p.add_argument("--eta", type=_float_list, help="comma-separated eta cutoffs")
    p.add_argument("--grid-m", type=int, help="override the grid size M")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fprinciple", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train, diagnose and write the artifact bundle")
    _common(p)

    p = sub.add_parser("sweep", help="one run per value along an axis, merged CSV")
    _common(p)
    p.add_argument("--axis", required=True, choices=ex.SWEEP_AXES)
    p.add_argument("--values", required=True, type=_float_list, help="comma-separated axis values")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="report the status of each modelling assumption")
    _common(p)

    sub.add_parser("presets", help="list bundled presets")

    p = sub.add_parser("replay", help="recompute diagnostics from a stored trajectory")
    p.add_argument("trajectory", type=Path)
    _common(p, need_source=False)
    p.add_argument("--config", type=Path, help="config to use instead of the one stored in the file")
    return parser


def _resolve(args) -> ex.ExperimentConfig:
    if getattr(args, "preset", None):
        cfg = ex.load_preset(args.preset)
    elif getattr(args, "config", None):
        cfg = ex.load_config(args.config)
    else:
        cfg = None
    return cfg


def _apply_overrides(cfg: ex.ExperimentConfig, args) -> ex.ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.eta is not None:
        cfg.eta.values = args.eta
    if args.grid_m is not None:
        cfg.grid.M = args.grid_m
    if args.out is not None:
        cfg.out_dir = str(args.out)
    return cfg


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=ex._json_default))


def _dispatch(args) -> int:
    if args.command == "presets":
        for name in ex.preset_names():
            info = ex.preset_info(name)
            print(f"{name}\tv{info['preset_version']}\t{info['description']}")
        return EXIT_OK

    if args.command == "replay":
        cfg = _resolve(args)
        if cfg is None:
            from .flow import load_trajectory

            _, header = load_trajectory(args.trajectory)
            if "config" not in header:
                raise ex.ConfigError("trajectory file carries no config; pass --config")
            cfg = ex.config_from_dict(header["config"])
        cfg = _apply_overrides(cfg, args)
        res = ex.replay(args.trajectory, cfg, args.out)
        if args.out is None:
            sys.stdout.write(res.csv_text)
        else:
            print(f"wrote {args.out}/diagnostics.csv and summary.json")
        return EXIT_OK

    cfg = _apply_overrides(_resolve(args), args)

    if args.command == "validate":
        _print_json(ex.validate_assumptions(cfg))
        return EXIT_OK

    if args.command == "run":
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            res = ex.run(cfg, cfg.out_dir)
        checks = res.summary["checks"]
        for name, c in checks.items():
            print(f"{name}: {'pass' if c['passed'] else 'FAIL'}")
        if cfg.out_dir is None:
            print("no --out given; nothing written", file=sys.stderr)
        else:
            print(f"wrote bundle to {cfg.out_dir}")
        return EXIT_OK

    if args.command == "sweep":
        res = ex.sweep(cfg, args.axis, args.values, cfg.out_dir, args.workers)
        if cfg.out_dir is None:
            sys.stdout.write(res.table)
        else:
            print(f"wrote {cfg.out_dir}/sweep_{args.axis}.csv")
        for r in res.failed:
            print(f"{args.axis}={r['value']}: {r['error']}", file=sys.stderr)
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (DivergenceError, TrajectoryBoundError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ex.ConfigError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: run, sweep, preset and validate subcommands.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.  Nothing
outside the output directory is ever written.
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional

from .config import (ConfigError, load_scenario, load_sweep_variants,
                     merge_overrides, scenario_from_dict, scenario_to_dict)
from .outputs import OutputExists, write_outputs
from .simulator import run as run_scenario
from .simulator import sweep as run_sweep

PRESET_NAMES = ("fig4", "fig5", "fig6", "fig7")


def preset_path(name: str) -> Path:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset: {name!r} (choose from {', '.join(PRESET_NAMES)})")
    return Path(str(resources.files("blocks_sim"))) / "presets" / f"{name}.toml"


def _apply_seed(config, seed: Optional[int]):
    if seed is None:
        return config
    return scenario_from_dict(merge_overrides(scenario_to_dict(config), {"seed": seed}))


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _cmd_run(args) -> int:
    config = _apply_seed(load_scenario(args.config), args.seed)
    result = run_scenario(config)
    files = write_outputs(result, args.out, force=args.force,
                          dump_ledger=args.dump_ledger)
    _say(args.quiet, f"run complete: {len(result.frames)} rounds, "
                     f"{len(files)} files in {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    base = _apply_seed(load_scenario(args.config), args.seed)
    variants = load_sweep_variants(args.sweep or args.config)
    results = run_sweep(base, variants)
    out_root = Path(args.out)
    for label, result in results:
        write_outputs(result, out_root / label, force=args.force,
                      dump_ledger=args.dump_ledger)
    _say(args.quiet, f"sweep complete: {len(results)} runs in {args.out}")
    return 0


def _cmd_preset(args) -> int:
    path = preset_path(args.name)
    base = load_scenario(path)
    try:
        variants = load_sweep_variants(path)
    except ConfigError:
        variants = None
    if variants is None:
        result = run_scenario(base)
        write_outputs(result, args.out, force=args.force,
                      dump_ledger=args.dump_ledger)
        _say(args.quiet, f"preset {args.name} complete: outputs in {args.out}")
    else:
        results = run_sweep(base, variants)
        out_root = Path(args.out)
        for label, result in results:
            write_outputs(result, out_root / label, force=args.force,
                          dump_ledger=args.dump_ledger)
        _say(args.quiet, f"preset {args.name} complete: "
                         f"{len(results)} runs in {args.out}")
    return 0


def _cmd_validate(args) -> int:
    load_scenario(args.config)
    _say(args.quiet, f"{args.config}: OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocks-sim",
        description="Deterministic simulator for a cross-silo knowledge-sharing "
                    "protocol: reputation, impact rewards, prompt cache, ledger.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--force", action="store_true",
                           help="overwrite existing result files")
            p.add_argument("--dump-ledger", action="store_true",
                           help="also write a full ledger snapshot (ledger.json)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run every [sweep.<label>] variant")
    p_sweep.add_argument("--config", required=True, help="base scenario")
    p_sweep.add_argument("--sweep", default=None,
                         help="sweep spec (defaults to the config file itself)")
    p_sweep.add_argument("--seed", type=int, default=None)
    common(p_sweep)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_preset = sub.add_parser("preset", help="run a canned experiment")
    p_preset.add_argument("name", choices=PRESET_NAMES)
    common(p_preset)
    p_preset.set_defaults(fn=_cmd_preset)

    p_val = sub.add_parser("validate", help="check a config file and exit")
    p_val.add_argument("config")
    common(p_val, needs_out=False)
    p_val.set_defaults(fn=_cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, OutputExists) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

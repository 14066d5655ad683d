"""Command line entry point.

Exit status: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, default_config_path, load_config

log = logging.getLogger("groupsps")

_DEFAULTS = {"learn": "fin_study", "transfer": "transfer", "synthetic": "synthetic"}
_ALLOWED = {"learn": ("fin_study", "insitu"), "transfer": ("transfer",), "synthetic": ("synthetic",)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="groupsps", description="Group factor policy search experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, with_out=True):
        sp.add_argument("--config", help="experiment JSON (defaults to the shipped one)")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--calibration", help="simulator calibration JSON")
        if with_out:
            sp.add_argument("--out", help="output directory override")

    common(sub.add_parser("learn", help="fin study or in-situ learning"))
    common(sub.add_parser("transfer", help="media transfer study"))
    common(sub.add_parser("synthetic", help="stub benchmark against the baselines"))
    r = sub.add_parser("render", help="SVG learning curves for finished runs")
    r.add_argument("runs", nargs="+", help="run directories")
    r.add_argument("--out", help="directory for the SVGs (default: each run directory)")
    v = sub.add_parser("validate-config", help="check a config against the schema")
    v.add_argument("--config", help="config to check (default: all shipped configs)")
    v.add_argument("--calibration", help="also parse this calibration file")
    return p


def _load(args, command):
    path = args.config or default_config_path(_DEFAULTS[command])
    cfg = load_config(path)
    if cfg.experiment not in _ALLOWED[command]:
        raise ConfigError(f"{path}: experiment {cfg.experiment!r} cannot run under '{command}'")
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.calibration is not None:
        changes["calibration_path"] = args.calibration
    return cfg.replace(**changes) if changes else cfg


def _load_calibration(path):
    from .sim import load_calibration
    try:
        return load_calibration(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _run(args) -> list:
    from . import harness

    if args.command == "validate-config":
        paths = [args.config] if args.config else [default_config_path(n) for n in _DEFAULTS.values()]
        for p in paths:
            load_config(p)
            print(f"{p}: ok")
        if args.calibration:
            cal = _load_calibration(args.calibration)
            print(f"{args.calibration}: ok ({cal.content_hash})")
        return []
    if args.command == "render":
        out = []
        for run in args.runs:
            out += harness.render_run(run, args.out)
        return out
    cfg = _load(args, args.command)
    if args.command == "synthetic":
        return harness.run_synthetic(cfg).paths
    cal = _load_calibration(cfg.calibration_path)
    if args.command == "learn":
        return harness.run_fin_study(cfg, cal).paths
    return harness.run_transfer(cfg, cal).paths


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        paths = _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner for the synthetic studies.

Subcommands
-----------
run         full pipeline, writes CSV tables and manifest.json
sweep-k     metrics for several chain lengths (sweep_k.csv)
calibrate   Z before/after every calibrator (calibration.csv)
diagnose    print discriminator diagnostics as JSON, write nothing

Exit status is 0 on success, 1 for invalid configuration or arguments and
2 for runtime failures (restart budget, DRS budget, training divergence,
I/O).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .calibration import KINDS
from .experiments import (
    SELECTORS,
    ConfigError,
    build_setup,
    default_config,
    load_config,
    run_experiment,
    sweep_k,
)
from .mlp import TrainingError
from .samplers import DRSBudgetExceeded, RestartBudgetExceeded

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad arguments; route them to 1."""

    def error(self, message):
        raise ConfigError("<arguments>", message)


def _add_common(p):
    p.add_argument("config", nargs="?", help="JSON config file (defaults are used if omitted)")
    p.add_argument("--experiment", choices=("univariate4", "grid25", "calibration_study"))
    p.add_argument("--k", type=int, help="MH chain length")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--selector", action="append", choices=SELECTORS,
                   help="selector to run; repeat for several")
    p.add_argument("--gamma", type=float, help="DRS logit shift")
    p.add_argument("--n-pilot", type=int, help="DRS pilot draws")
    p.add_argument("--calibrator", choices=KINDS)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mhgan", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [("run", "run the full pipeline"),
                       ("sweep-k", "metrics for several chain lengths"),
                       ("calibrate", "compare calibrators by the Z diagnostic"),
                       ("diagnose", "print discriminator diagnostics")]:
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "sweep-k":
            p.add_argument("--k-values", default="1,5,25,125,640",
                           help="comma-separated ascending chain lengths")
    return parser


def _config(args):
    if args.config:
        cfg = load_config(args.config)
        if args.experiment and args.experiment != cfg.experiment:
            raise ConfigError("experiment", f"--experiment {args.experiment} conflicts "
                                            f"with the config file ({cfg.experiment})")
    else:
        cfg = default_config(args.experiment or "grid25",
                             0 if args.seed is None else args.seed)
    if args.command == "calibrate":
        cfg = cfg.with_overrides(selectors=[])
    return cfg.with_overrides(**{
        "k": args.k, "n_samples": args.n_samples, "seed": args.seed,
        "selectors": args.selector, "drs.gamma": args.gamma,
        "drs.n_pilot": args.n_pilot, "calibrator": args.calibrator,
        "output_dir": args.out,
    })


def _dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "run":
        result = run_experiment(cfg)
        for row in result.metrics:
            print(f"{row['selector']:>5}  hq={row['high_quality_rate']:.4f}  "
                  f"jsd={row['mode_jsd']:.4f}  std={row['within_mode_std']:.4f}")
        print(f"wrote {cfg['output_dir']}")
    elif args.command == "sweep-k":
        try:
            ks = [int(v) for v in args.k_values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("k_values", f"not a list of integers: {args.k_values!r}")
        for row in sweep_k(cfg, ks):
            print(f"k={row['k']:<5} {row['selector']:>5}  hq={row['high_quality_rate']:.4f}  "
                  f"jsd={row['mode_jsd']:.4f}")
    elif args.command == "calibrate":
        for row in run_experiment(cfg, calibration_table=True).calibration:
            print(f"{row['calibrator']:>9}  z_before={row['z_before']:+.3f}  "
                  f"z_after={row['z_after']:+.3f}")
    else:
        info = dict(build_setup(cfg).info)
        info["calibrator"] = info["calibrator"]["kind"]
        print(json.dumps(info, indent=2, sort_keys=True, default=float))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RestartBudgetExceeded, DRSBudgetExceeded, TrainingError, OSError,
            ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command line entry point: ``dgfflab run | verify | list-experiments``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for an
invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigInvalid, DGFFLabError
from .experiments import EXPERIMENT_FUNCTIONS, context_from_config, run_experiment, scoreboard, write_result

log = logging.getLogger("dgfflab")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="dgfflab", description="Hard-wall and capacitor experiments for the lattice free field.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the experiment named in the config"), ("verify", "run the full property battery")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="YAML experiment file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument("--replicas-scale", type=float, default=None, help="multiply every replica count")
    sub.add_parser("list-experiments", help="print the available experiments")
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output = args.out
    if args.replicas_scale is not None:
        if not args.replicas_scale > 0:
            raise ConfigInvalid("must be positive", field="replicas_scale")
        cfg.params["replicas_scale"] = args.replicas_scale
    cfg.validate()
    return cfg


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = _parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            doc = (EXPERIMENT_FUNCTIONS[name].__doc__ or "").strip().splitlines()[0]
            print(f"{name:20s} {doc}")
        return EXIT_PASS
    try:
        cfg = _load(args)
        if args.command == "verify" and cfg.experiment != "identity-suite":
            cfg.experiment = "identity-suite"
        result = run_experiment(cfg, context_from_config(cfg))
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DGFFLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_result(result, cfg, cfg.output)
    sys.stdout.write(scoreboard(result))
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

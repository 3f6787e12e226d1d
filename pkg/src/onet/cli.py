"""Command line entry point: ``onet run <config>``, ``onet list``, ``onet check``."""

from __future__ import annotations

import argparse
import sys
import tempfile

from .experiments import FAST_EXPERIMENTS, REGISTRY
from .harness import ConfigError, ExperimentConfig, load_config, resolve_parameters, write_result

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def run_experiment(cfg: ExperimentConfig, verbose: bool = True) -> int:
    """Run one configured experiment, write its artifacts, return the exit code."""
    try:
        if cfg.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {cfg.experiment!r}; see 'onet list'")
        exp = REGISTRY[cfg.experiment]
        params = resolve_parameters(exp.defaults, cfg.parameters)
        result = exp.run(params, list(cfg.seeds))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    paths = write_result(cfg, result)
    if verbose:
        for key, value in result.summary.items():
            print(f"  {key} = {value}")
        for path in paths:
            print(f"  wrote {path}")
        print(f"{cfg.experiment}: {'PASS' if result.accepted else 'FAIL'}")
    return EXIT_OK if result.accepted else EXIT_FAIL


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg)


def _cmd_list(args) -> int:
    for name, exp in REGISTRY.items():
        print(f"{name}: {exp.description}")
        if args.verbose:
            for key, value in exp.defaults.items():
                print(f"    {key} = {value!r}")
    return EXIT_OK


def _cmd_check(args) -> int:
    code = EXIT_OK
    with tempfile.TemporaryDirectory() as tmp:
        for name in FAST_EXPERIMENTS:
            rc = run_experiment(ExperimentConfig(name, output_dir=tmp), verbose=False)
            print(f"{name}: {'PASS' if rc == EXIT_OK else 'FAIL'}")
            code = max(code, rc)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="onet", description="DeepONet rate experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)
    p_list = sub.add_parser("list", help="list registered experiments")
    p_list.add_argument("-v", "--verbose", action="store_true", help="show default parameters")
    p_list.set_defaults(func=_cmd_list)
    p_check = sub.add_parser("check", help="run the fast invariant experiments")
    p_check.set_defaults(func=_cmd_check)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

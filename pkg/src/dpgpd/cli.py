"""Command-line entry point: ``run``, ``preset``, ``oracle`` and ``sweep``."""
from __future__ import annotations

import argparse
import logging
import sys

from .harness import ConfigError, RunConfig, parse_value, preset, run_experiment, sweep_configs
from .oracles import run_suite

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2


def _report(res) -> int:
    for seed, err in sorted(res.failures.items()):
        print(f"FAILED seed {seed}: {err}", file=sys.stderr)
    done = len(res.records)
    print(f"{res.config.experiment}: {done}/{len(res.config.seeds)} seeds completed -> {res.config.output_dir}")
    return EXIT_OK if res.ok else EXIT_ABORT


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"grid entry must look like key=v1,v2,..., got {item!r}")
        key, vals = item.split("=", 1)
        key = key.strip()
        if key == "seeds":
            raise ConfigError("seeds cannot be swept; set them in the config")
        grid[key] = [parse_value(key, v.strip()) for v in vals.split(",") if v.strip()]
    return grid


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpgpd", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("config")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    pr = sub.add_parser("preset", help="run a built-in preset")
    pr.add_argument("name")
    pr.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    pr.add_argument("--dump", action="store_true", help="print the resolved config and exit")

    o = sub.add_parser("oracle", help="print reference values of an oracle suite")
    o.add_argument("suite")

    sw = sub.add_parser("sweep", help="run a config over a parameter grid")
    sw.add_argument("config")
    sw.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "oracle":
            try:
                values = run_suite(args.suite)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from exc
            for k, v in values.items():
                print(f"{k} = {v!r}")
            return EXIT_OK
        if args.cmd == "run":
            cfg = RunConfig.load(args.config).with_overrides(args.override)
            return _report(run_experiment(cfg))
        if args.cmd == "preset":
            cfg = preset(args.name).with_overrides(args.override)
            if args.dump:
                print(cfg.to_toml(), end="")
                return EXIT_OK
            return _report(run_experiment(cfg))
        if args.cmd == "sweep":
            base = RunConfig.load(args.config)
            codes = [_report(run_experiment(c)) for c in sweep_configs(base, _parse_grid(args.grid))]
            return max(codes)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

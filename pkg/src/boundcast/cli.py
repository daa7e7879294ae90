"""Command line entry point: ``boundcast <subcommand> [--config FILE] [--key value ...]``.

Flags mirror :class:`~boundcast.harness.RunConfig` field names with dashes
(``--prior-scale 1e-4``); values given on the command line override those
read from the ``key = value`` config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from . import harness
from .errors import InsufficientDataError, ParameterError
from .synth import synth_corpus

RUN_COMMANDS = {
    "ingest": "normalise farm files and write one bounded series per farm-year",
    "filter-farms": "apply the capacity-drift filter and list kept farms",
    "train": "fit every method on each training year",
    "run": "train, stream and score all farm-scenarios",
    "sensitivity": "disturb trained states and record skill",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    for f in fields(harness.RunConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="VALUE")


def _config(args) -> harness.RunConfig:
    pairs = harness.read_config_file(args.config) if args.config else {}
    for f in fields(harness.RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            pairs[f.name] = v
    return harness.config_from_pairs(pairs)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boundcast", description="Probabilistic forecasting of bounded half-hourly wind power.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in RUN_COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
        if name == "sensitivity":
            p.add_argument("--farm", default=None, help="farm id (default: first in the manifest)")

    p = sub.add_parser("evaluate", help="score forecast CSV files written by `run --write-forecasts true`")
    p.add_argument("--forecast-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--eps", type=float, default=0.005)

    p = sub.add_parser("synth", help="write a simulated farm corpus with a manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-farms", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="2020-12-01")
    p.add_argument("--periods", type=int, default=2976, help="half-hour steps per farm")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--nu-end", type=float, default=None)
    p.add_argument("--phi", type=float, default=0.85)
    p.add_argument("--phi-end", type=float, default=None)
    p.add_argument("--sigma2", type=float, default=0.3)
    p.add_argument("--level", type=float, default=0.35)
    p.add_argument("--capacity-mw", type=float, default=100.0)
    p.add_argument("--missing-rate", type=float, default=0.0)
    return ap


def _print_table(path) -> None:
    with open(path) as fh:
        sys.stdout.write(fh.read())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            synth_corpus(
                args.out_dir,
                args.n_farms,
                args.seed,
                args.start,
                args.periods,
                args.nu,
                args.nu_end,
                args.phi,
                args.phi_end,
                args.sigma2,
                args.level,
                args.capacity_mw,
                args.missing_rate,
            )
            print(f"wrote {args.n_farms} farms to {args.out_dir}")
        elif args.command == "evaluate":
            for row in harness.evaluate_forecast_dir(args.forecast_dir, args.out_dir, args.eps):
                print(f"{row[0]}\t{row[1]}\tn={row[2]}\tcrps={row[3]:.4f}%")
        else:
            cfg = _config(args)
            if args.command == "ingest":
                rows = harness.ingest_corpus(cfg)
                print(f"ingested {len(rows)} farm-years into {cfg.out_dir}/ingest")
            elif args.command == "filter-farms":
                for r in harness.filter_corpus(cfg):
                    print(f"{r['farm']}\t{'keep' if r['keep'] else 'drop'}")
            elif args.command == "train":
                print(f"trained {len(harness.train_corpus(cfg))} farm-scenarios; see {cfg.out_dir}/trained.json")
            elif args.command == "run":
                harness.run_experiment(cfg)
                _print_table(f"{cfg.out_dir}/crps_table.csv")
            elif args.command == "sensitivity":
                for k, v in harness.run_sensitivity(cfg, args.farm).items():
                    print(f"{k}\tbaseline={v['baseline']:.4f}\tmean={v['mean']:.4f}\tstd={v['std']:.5f}")
    except (InsufficientDataError, ParameterError, FileNotFoundError) as exc:
        print(f"boundcast {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

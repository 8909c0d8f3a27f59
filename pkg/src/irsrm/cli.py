"""Command line entry point: ``irsrm simulate`` and ``irsrm bound``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .admm import delta_upper_bound
from .experiments import aggregate, load_config, run_experiment, summary_to_csv, write_csv
from .model import dbm_to_watt

# large-network settings; slow (hours), so only used on request
FULL_SCALE = dict(K=5, M=10, L=20, trials=10000)


def build_parser():
    ap = argparse.ArgumentParser(prog="irsrm", description="Modular IRS relay simulations.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured sweep and write per-trial CSV")
    sim.add_argument("--config", required=True, help="flat key = value config file")
    sim.add_argument("--out", required=True, help="CSV path for the per-trial records")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--trace-dir", default=None, help="dump ADMM iteration traces here")
    sim.add_argument("--seed", type=int, default=None, help="override master_seed")
    sim.add_argument("--summary", default=None, help="also write mean/stderr per method and value")
    sim.add_argument("--full-scale", action="store_true",
                     help="start from large-network defaults (K=5, M=10, L=20, 10^4 trials)")

    bd = sub.add_parser("bound", help="print the sparsity budget that triggers every module")
    bd.add_argument("--M", type=int, required=True)
    bd.add_argument("--K", type=int, required=True)
    bd.add_argument("--N", type=int, required=True)
    bd.add_argument("--pmax-dbm", type=float, required=True)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bound":
        print(f"{delta_upper_bound(args.M, args.K, args.N, dbm_to_watt(args.pmax_dbm)):.9g}")
        return 0
    base = dict(FULL_SCALE) if args.full_scale else {}
    try:
        cfg = load_config(args.config, _defaults=base, master_seed=args.seed)
    except (OSError, ValueError) as e:
        print(f"irsrm: {e}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("irsrm: --workers must be >= 1", file=sys.stderr)
        return 2
    records = run_experiment(cfg, workers=args.workers, trace_dir=args.trace_dir)
    write_csv(records, args.out)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8", newline="") as fh:
            fh.write(summary_to_csv(aggregate(records)))
    return 0


if __name__ == "__main__":
    sys.exit(main())

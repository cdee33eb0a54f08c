"""Command line interface: train, oracle, eval.

    dsalab train --config exp.cfg [--seed S] [--replicas K] [--out DIR]
    dsalab oracle --n 4 --p-stay 0.1 --p-switch 0.1 --p-dswitch 0.8
    dsalab eval --checkpoint ckpt.txt --config exp.cfg --steps 100000

The environment variable DSA_LOG (debug|info|warning|error) controls log
verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import load_config
from .env import CyclicParams
from .errors import DsaError, UnsupportedGeometry
from .experiment import evaluate_checkpoint, run_experiment
from .metrics import rho_or_nan
from .oracle import optimal_throughput, sensing_policy_table


def _setup_logging() -> None:
    level = os.environ.get("DSA_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsalab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training experiment from a config file")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, help="override the config's base seed")
    train.add_argument("--replicas", type=int, help="override the config's replica count")
    train.add_argument("--out", help="override the config's output directory")
    train.add_argument("--steps", type=int, help="override the config's total_steps")
    train.add_argument("--workers", type=int, help="override the config's worker count")

    oracle = sub.add_parser("oracle", help="print the cyclic sensing-policy table and P_max")
    oracle.add_argument("--n", type=int, required=True, help="channel count (even, >= 4)")
    oracle.add_argument("--p-stay", type=float, required=True)
    oracle.add_argument("--p-switch", type=float, required=True)
    oracle.add_argument("--p-dswitch", type=float, required=True)

    evalp = sub.add_parser("eval", help="frozen-policy throughput of a saved checkpoint")
    evalp.add_argument("--checkpoint", required=True)
    evalp.add_argument("--config", required=True)
    evalp.add_argument("--steps", type=int, required=True)
    evalp.add_argument("--seed", type=int)
    return parser


def _cmd_train(args) -> int:
    overrides = {
        "base_seed": args.seed,
        "n_replicas": args.replicas,
        "out_dir": args.out,
        "total_steps": args.steps,
        "workers": args.workers,
    }
    config = load_config(args.config)
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    result = run_experiment(config)
    print(f"windows:   {result.windows_csv}")
    print(f"aggregate: {result.aggregate_csv}")
    if result.checkpoints:
        print(f"checkpoints: {len(result.checkpoints)} file(s) in {config.out_dir}")
    tail = result.traces[0].rho()
    finals = [t.rho()[-1] for t in result.traces]
    print(f"final-window rho: mean {np.nanmean(finals):.4f} over {len(finals)} replica(s)")
    return 0


def _cmd_oracle(args) -> int:
    if args.n % 2 or args.n < 4:
        raise UnsupportedGeometry(f"need an even channel count >= 4, got {args.n}")
    params = CyclicParams(args.n, args.p_stay, args.p_switch, args.p_dswitch)
    rows = sensing_policy_table(args.n)
    width = max(len(str(r.x_prev)) for r in rows if r.x_prev is not None)
    width = max(width, len("don't care"))
    print(f"{'X(t-1)':<{width}}  {'X(t)':<{width}}  U(t)  next_subset")
    for row in rows:
        prev = "don't care" if row.x_prev is None else str(row.x_prev)
        print(f"{prev:<{width}}  {str(row.x_curr):<{width}}  {row.state:<4d}  {row.next_subset}")
    print(f"P_max = {optimal_throughput(params):g}")
    return 0


def _cmd_eval(args) -> int:
    config = load_config(args.config)
    trace = evaluate_checkpoint(config, args.checkpoint, args.steps, seed=args.seed)
    rho = np.array([rho_or_nan(w) for w in trace.windows])
    defined = rho[~np.isnan(rho)]
    print(f"windows: {len(trace.windows)} (length {config.window_len})")
    print(f"mean rho: {defined.mean():.4f}")
    print(f"final-window rho: {rho[-1]:.4f}")
    return 0


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_eval(args)
    except DsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

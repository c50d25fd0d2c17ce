"""Command-line entry point: ``piag-verify --config run.cfg --out results/``."""

from __future__ import annotations

import argparse
import sys

from .errors import InputError, OracleError
from .experiment import load_config, point_label, run_experiment

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_ORACLE = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="piag-verify",
        description="Run PIAG sweeps and verify the convergence theory along every trace.")
    p.add_argument("--config", help="flat key = value experiment file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--epsilon", type=float, help="absolute target for F_k (default 1e-8 * F_0)")
    p.add_argument("--tol", type=float, help="relative inequality tolerance, scaled by max(1, F_0)")
    p.add_argument("--seed", type=int, help="instance seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out=args.out, max_iters=args.max_iters,
                          epsilon=args.epsilon, tol=args.tol, seed=args.seed)
    except (InputError, OSError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        status, results = run_experiment(cfg)
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except InputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for r in results:
        verdicts = " ".join(f"{c.name}={c.verdict}" for c in r.report)
        print(f"{point_label(r.Q, r.K)} eta={r.eta:.6g} hit={r.hit_iter} budget={r.budget} {verdicts}")
    return status


if __name__ == "__main__":
    sys.exit(main())

"""
Sharpness sweep: closed-form strong bounds against the linear program.

Usage:
    python evaluation/evaluate_sharpness.py \
        --n 1000 \
        --seed 0 \
        --log-path logs/eval/sharpness.log \
        --csv-out evaluation/data/sharpness.csv

Random q-tables are drawn from a Dirichlet over the 16 latent types, mapped to
their observed law and gamma, and bounded both ways.

The output CSV will have columns:
    instance_id,alpha,gamma,lower_closed,lower_lp,upper_closed,upper_lp,max_abs_diff,residual,true_ace
"""
import argparse
import csv
import logging
import os
import sys
import time

import numpy as np
from tqdm import tqdm

# TODO - add source directory to path in a different way
SRC = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src"))
sys.path.insert(0, SRC)

from closed_bounds import strong_bounds
from law import ace_from_qtable_strong, observables_from_qtable_strong, random_qtable_strong
from lp_engine import build_strong_system, primal_residual, strong_bounds_lp
from utils import configure_logger, pretty_section

TOL = 1e-9


def main():
    parser = argparse.ArgumentParser(description="Compare closed-form and LP bounds on random instances.")
    parser.add_argument("--n", type=int, default=1000, help="Number of random instances")
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--alpha", type=float, default=1.0,
                        help="Dirichlet concentration (small values give sparse tables)")
    parser.add_argument("--log-path", required=True, help="Path to write logs")
    parser.add_argument("--csv-out", required=True, help="Path to the per-instance output CSV")
    args = parser.parse_args()

    if args.n < 1:
        parser.error("--n must be positive")
    output_dir = os.path.dirname(args.csv_out)
    try:
        os.makedirs(output_dir or ".", exist_ok=True)
    except OSError as e:
        parser.error(f"Could not create output directory '{output_dir}': {e}")

    logger = logging.getLogger(__name__)
    configure_logger(args.log_path, level=logging.DEBUG)

    rng = np.random.default_rng(args.seed)
    details = []
    diffs = []
    residuals = []
    outside = 0
    start = time.time()

    print(f"Starting sharpness sweep over {args.n} instances (seed {args.seed}, alpha {args.alpha})\n")
    for idx in tqdm(range(args.n), desc="instances"):
        q = random_qtable_strong(rng, args.alpha)
        law, gamma = observables_from_qtable_strong(q)
        closed = strong_bounds(law, gamma)
        lp = strong_bounds_lp(law, gamma)
        system = build_strong_system(law, gamma)
        residual = max(primal_residual(system, lp.witness_lower), primal_residual(system, lp.witness_upper))
        diff = max(abs(closed.lower - lp.lower), abs(closed.upper - lp.upper))
        true_ace = ace_from_qtable_strong(q)
        if not closed.contains(true_ace):
            outside += 1
            logger.warning("Instance %d: true ACE %.6g outside [%.6g, %.6g]",
                           idx, true_ace, closed.lower, closed.upper)
        if diff > TOL:
            logger.warning("Instance %d: closed form and LP differ by %.3g", idx, diff)
        else:
            logger.debug("Instance %d: diff %.3g residual %.3g", idx, diff, residual)

        diffs.append(diff)
        residuals.append(residual)
        details.append({
            "instance_id": idx,
            "alpha": args.alpha,
            "gamma": f"{gamma:.12g}",
            "lower_closed": f"{closed.lower:.12g}",
            "lower_lp": f"{lp.lower:.12g}",
            "upper_closed": f"{closed.upper:.12g}",
            "upper_lp": f"{lp.upper:.12g}",
            "max_abs_diff": f"{diff:.3e}",
            "residual": f"{residual:.3e}",
            "true_ace": f"{true_ace:.12g}",
        })

    elapsed = time.time() - start
    diffs = np.array(diffs)
    mismatches = int(np.sum(diffs > TOL))

    summary = (
        f"Evaluated {args.n} instances in {elapsed:.1f}s\n\n"
        f"Closed form vs LP:    {args.n - mismatches}/{args.n} agree within {TOL:g}\n"
        f"  min diff  = {diffs.min():.3e}\n"
        f"  mean diff = {diffs.mean():.3e}\n"
        f"  max diff  = {diffs.max():.3e}\n"
        f"Max primal residual:  {max(residuals):.3e}\n"
        f"True ACE outside bounds: {outside}"
    )

    with open(args.csv_out, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=details[0].keys())
        writer.writeheader()
        writer.writerows(details)

    logger.info("Sharpness details written to %s", args.csv_out)
    logger.info(summary)

    pretty_section("📊 Sharpness summary", summary)
    pretty_section("📜 Log files", f"Log path: {args.log_path}\nOutput details path: {args.csv_out}")


if __name__ == '__main__':
    main()

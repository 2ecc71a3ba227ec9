"""Outcome fraction against trajectory count for the two-level gambler's-ruin model.

Writes a CSV (trajectories, fraction_0, stderr) showing the approach to |c_0|^2.
"""
import argparse
import math
from pathlib import Path

import numpy as np

from collapselab.cli import write_csv
from collapselab.collapse_engine import CollapseOperatorSet, run_nonlinear_batch
from collapselab.noise_paths import TimeGrid
from collapselab.quantum_core import HermitianOperator, StateVector


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--max-trajectories", type=int, default=10_000)
    ap.add_argument("--output", default="born_convergence.csv")
    args = ap.parse_args()
    psi = StateVector(np.array([0.6, 0.8]))
    ops = CollapseOperatorSet.single(HermitianOperator.diag([1.0, -1.0]), 1.0)
    batch = run_nonlinear_batch(psi, ops, TimeGrid.spanning(10.0, 4000), args.seed, range(args.max_trajectories))
    hits = np.cumsum(batch.outcomes == 0)
    counts = np.unique(np.geomspace(10, args.max_trajectories, 30).astype(int))
    rows = []
    for n in counts:
        f = hits[n - 1] / n
        rows.append([int(n), float(f), math.sqrt(f * (1 - f) / n)])
    write_csv(Path(args.output), ["trajectories", "fraction_0", "stderr"], rows)
    print(f"final fraction {rows[-1][1]:.4f} +- {rows[-1][2]:.4f} (Born 0.36); wrote {args.output}")


if __name__ == "__main__":
    main()

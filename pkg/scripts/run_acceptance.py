"""Run the acceptance suite and write a JSON summary.

    python scripts/run_acceptance.py --seed 20250101 --json acceptance.json
"""
import argparse
import json
import sys

from collapselab.acceptance import DEFAULT_SEED, run_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--deep", action="store_true")
    ap.add_argument("--json")
    args = ap.parse_args()
    results = run_suite(args.seed, deep=args.deep)
    for r in results:
        print(r.line())
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.as_dict() for r in results], fh, indent=2, sort_keys=True)
    return 0 if all(r.passed for r in results) else 3


if __name__ == "__main__":
    sys.exit(main())

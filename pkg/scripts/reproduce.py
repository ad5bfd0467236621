"""Run the end-to-end 1 - 1/e^2 reproduction and print the summary table."""

import argparse
import sys

from poaforge.cli import main


def parse():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--csv", metavar="PATH", help="also write the table as CSV")
    return p.parse_args()


if __name__ == "__main__":
    args = parse()
    base = ["repro", "--seed", str(args.seed)] + (["--quick"] if args.quick else [])
    rc = main(base)
    if args.csv and rc == 0:
        rc = main(base + ["--emit", "csv", "--out", args.csv])
    sys.exit(rc)

"""Run the reduction fuzz suite over a seed range and summarize the traces."""

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor

from poaforge.cli import threads
from poaforge.fuzz import fuzz_case

FIELDS = ["seed", "n", "m", "form", "psi", "iterations", "poa_in", "poa_out", "ok"]


def summary(seed):
    row = fuzz_case(seed)
    out = {k: row[k] for k in FIELDS}
    out["halve_gap"] = max((max(g) for g in row["halve_gaps"]), default=0.0)
    out["problems"] = "; ".join(row["problems"])
    return out


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--out", help="CSV with one row per seed")
    args = p.parse_args()
    seeds = range(args.start, args.start + args.count)
    with ProcessPoolExecutor(max_workers=threads()) as pool:
        rows = list(pool.map(summary, seeds, chunksize=32))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=FIELDS + ["halve_gap", "problems"])
            w.writeheader()
            w.writerows(rows)
    bad = [r for r in rows if not r["ok"]]
    print(f"{len(rows)} seeds, {len(bad)} failing, "
          f"min poa_out {min(r['poa_out'] for r in rows):.9f}, "
          f"max halve gap {max(r['halve_gap'] for r in rows):.1e}")
    for r in bad[:10]:
        print(f"  seed {r['seed']}: {r['problems']}")
    sys.exit(1 if bad else 0)

"""Write the three long-form sweep CSVs into a directory."""

import argparse
import os
import sys

from poaforge.cli import main

SWEEPS = {
    "lambda_mu.csv": ["--kind", "lambda-mu"],
    "discretization.csv": ["--kind", "discretization", "--values", "50,100,200,500,1000,2000"],
    "finite_n.csv": ["--kind", "finite-n", "--values", "4,8,16,32,64,128,256,512,1000"],
}

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("outdir", nargs="?", default="sweeps")
    p.add_argument("--grid", type=int, default=30)
    args = p.parse_args()
    os.makedirs(args.outdir, exist_ok=True)
    for name, flags in SWEEPS.items():
        extra = ["--grid", str(args.grid)] if "lambda-mu" in flags else []
        rc = main(["sweep", *flags, *extra, "--out", os.path.join(args.outdir, name)])
        if rc:
            sys.exit(rc)
        print(f"wrote {os.path.join(args.outdir, name)}")

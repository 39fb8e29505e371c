"""Ablation grid on an existing dataset; writes per-cell reports and summary.csv.

    python3 scripts/ablation_grid.py --dataset runs/desk/data --axes mode,stride --out runs/ablate
"""

import argparse
import sys

from spire.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--axes", default="mode", help="comma list of mode, sigma, stride, components")
    ap.add_argument("--out", default="runs/ablate")
    ap.add_argument("--set", dest="sets", action="append", default=[])
    args = ap.parse_args()
    extra = [x for kv in args.sets for x in ("--set", kv)]
    sys.exit(main(["--out", args.out, "--set", f"ablate.axes={args.axes}"] + extra
                  + ["ablate", "--dataset", args.dataset]))

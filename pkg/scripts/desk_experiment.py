"""Desk-scale run: generate the default dataset, then train/infer/eval once per supervision mode.

    python3 scripts/desk_experiment.py --out runs/desk [--modes prps,impulse,gaussian] [--set k=v ...]
"""

import argparse
import json
import time
from pathlib import Path

from spire import io
from spire.cli import main


def run(out: Path, modes, extra):
    data = out / "data"
    if main(["--out", str(data)] + extra + ["gen"]) != 0:
        raise SystemExit("gen failed")
    rows = []
    for mode in modes:
        run_dir = out / mode
        sets = extra + ["--set", f"prps.mode={mode}"]
        t0 = time.perf_counter()
        steps = [
            ["train", "--dataset", str(data)],
            ["infer", "--dataset", str(data), "--weights", str(run_dir / "weights.bin")],
            ["eval", "--pred", str(run_dir / "detections.csv"),
             "--gt", str(data / "test" / "annotations.csv"),
             "--manifest", str(data / "test" / "manifest.json")],
        ]
        for step in steps:
            if main(["--out", str(run_dir)] + sets + step) != 0:
                raise SystemExit(f"{mode}: {step[0]} failed")
        rep = io.read_json(run_dir / "report.json")
        rows.append({"mode": mode, "precision": rep["precision"], "recall": rep["recall"],
                     "f1": rep["f1"], "fa": rep["fa"], "minutes": (time.perf_counter() - t0) / 60})
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--modes", default="prps,impulse,gaussian")
    ap.add_argument("--set", dest="sets", action="append", default=[])
    args = ap.parse_args()
    extra = [x for kv in args.sets for x in ("--set", kv)]
    rows = run(Path(args.out), args.modes.split(","), extra)
    print(f"{'mode':10s} {'P':>7s} {'R':>7s} {'F1':>7s} {'Fa':>10s} {'min':>6s}")
    for r in rows:
        print(f"{r['mode']:10s} {r['precision']:7.4f} {r['recall']:7.4f} {r['f1']:7.4f} "
              f"{r['fa']:10.2e} {r['minutes']:6.1f}")
    (Path(args.out) / "desk_summary.json").write_text(json.dumps(rows, indent=2) + "\n")

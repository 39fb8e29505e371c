"""Parameter / FLOP table for the stride and component variants, plus forward latency.

    python3 scripts/bench_table.py [--size 640] [--latency]
"""

import argparse
import time

import numpy as np

from spire.model import HrpeConfig, build_model, count_params_flops

VARIANTS = {
    "s=2": HrpeConfig(stride=2),
    "s=4": HrpeConfig(),
    "s=8": HrpeConfig(stride=8),
    "s=4 no SE": HrpeConfig(enable_reweighting=False),
    "s=4 plain units": HrpeConfig(enable_channel_reorg=False),
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=640)
    ap.add_argument("--latency", action="store_true", help="also time one forward pass per variant")
    args = ap.parse_args()
    print(f"{'variant':16s} {'params (M)':>11s} {'FLOPs (G)':>10s} {'output':>10s} {'ms':>8s}")
    for name, cfg in VARIANTS.items():
        info = count_params_flops(cfg, args.size, args.size)
        ms = ""
        if args.latency:
            model = build_model(cfg, seed=0)
            x = np.zeros((1, 1, args.size, args.size), np.float32)
            t0 = time.perf_counter()
            model.forward(x)
            ms = f"{1000 * (time.perf_counter() - t0):8.0f}"
        shape = "x".join(str(d) for d in info["output_shape"][1:])
        print(f"{name:16s} {info['params_m']:11.3f} {info['flops_g']:10.2f} {shape:>10s} {ms:>8s}")

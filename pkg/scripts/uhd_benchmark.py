#!/usr/bin/env python3
"""Benchmark tiled dehazing at UHD sizes: timings, memory, MAC counts."""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hazeflow import FlowConfig, TilePlan
from hazeflow.bench import run_bench


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--height", type=int, default=2160)
    p.add_argument("--width", type=int, default=3840)
    p.add_argument("--net-width", type=int, default=8)
    p.add_argument("--lut-size", type=int, default=33)
    p.add_argument("--solver", default="rk4",
                   choices=("euler", "midpoint", "rk4"))
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--overlap", type=int, default=32)
    args = p.parse_args()

    cfg = FlowConfig(solver=args.solver, steps=args.steps)
    plan = None
    if args.tile and (args.height > args.tile or args.width > args.tile):
        plan = TilePlan(tile=args.tile, overlap=args.overlap)
    report = run_bench(args.height, args.width, cfg,
                       net_width=args.net_width, lut_size=args.lut_size,
                       plan=plan)
    print(report.format())


if __name__ == "__main__":
    main()

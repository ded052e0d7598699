#!/usr/bin/env python3
"""Occlusion/noise sweeps for the M=1 model and the M=4 vs M=1 comparison.

Trains both desk models on the same synthetic dataset (reusing finished
checkpoints under --work) and writes results.json there.
"""
import argparse
import json
import logging
from pathlib import Path

from lidarhmp import experiments as X
from lidarhmp.dataset import atomic_write_json

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--work", default="runs/trends")
ap.add_argument("--skip-diverse", action="store_true", help="only the M=1 sweeps")
args = ap.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

store, val, ck = X.train_trend_model(args.work, 1)
out = {"sweeps": X.trend_sweeps(store, val, ck)}
for mode, rows in out["sweeps"].items():
    print(mode, " ".join(f"{r['level']:.0f}%:{r['avg_short']:.2f}" for r in rows))
if not args.skip_diverse:
    cmp = X.diverse_comparison(args.work)
    out["diverse"] = cmp
    print(f"M=1 MPJPE@1000 {cmp['m1']['mpjpe_mm']['h1000']:.2f} mm, "
          f"M=4 minMPJPE@1000 {cmp['m4']['min_mpjpe_mm']['h1000']:.2f} mm")
atomic_write_json(Path(args.work) / "results.json", out)

#!/usr/bin/env python3
"""Overfit the desk model to a single window; prints the training-set MPJPE per horizon."""
import argparse
import json
import logging

from lidarhmp.experiments import run_overfit

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--work", default="runs/overfit")
args = ap.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")
res = run_overfit(args.work)
print(json.dumps({"steps": res["steps"], "seconds": round(res["seconds"], 1),
                  "mpjpe_mm": res["report"]["mpjpe_mm"]}, indent=2))

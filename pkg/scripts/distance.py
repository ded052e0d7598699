#!/usr/bin/env python3
"""MPJPE by subject distance: trains on a 6-27 m dataset, then bins held-out windows by range."""
import argparse
import json
import logging
from pathlib import Path

from lidarhmp import experiments as X
from lidarhmp.harness.data import split_by_sequence
from lidarhmp.harness.evaluate import robustness_sweep
from lidarhmp.harness.train import train
from lidarhmp.synth import SynthParams

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--work", default="runs/distance")
ap.add_argument("--seqs", type=int, default=48)
ap.add_argument("--epochs", type=int, default=40)
ap.add_argument("--bins", default="6,10,15,20,27")
args = ap.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

work = Path(args.work)
data = X.ensure_data(work / "data", SynthParams(n_sequences=args.seqs, frames_per_sequence=20, seed=13))
run = X.TREND_RUN.replace(epochs=args.epochs)
store, samples = X.windows(data, run)
tr, val = split_by_sequence(samples, run.seed, 0.25)
ck = train(tr, run, work / "ckpt", curve_path=work / "curve.csv").checkpoint
rows = robustness_sweep(val, ck.params, run.model, store.fps, "distance",
                        [float(x) for x in args.bins.split(",")], run.seed)
print(json.dumps(rows, indent=2))

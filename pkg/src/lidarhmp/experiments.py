"""Reproducible desk-scale experiments shared by ``scripts/`` and the acceptance suite."""
from __future__ import annotations

import dataclasses
import time
from pathlib import Path

from . import model as M
from .config import RunConfig
from .harness.checkpoint import load_checkpoint
from .harness.data import load_dataset, split_by_sequence, window_samples
from .harness.evaluate import evaluate, robustness_sweep
from .harness.train import train
from .synth import SynthParams, synth_dataset

# one clean 8-frame sequence -> exactly one 4+4 window
OVERFIT_DATA = SynthParams(n_sequences=1, frames_per_sequence=8, seed=3, dist_min=8.0, dist_max=8.0)
OVERFIT_RUN = RunConfig(model=dataclasses.replace(M.DESK, t_obs=4, t_pred=4), batch=1,
                        epochs=2000, max_steps=2000, seed=0, ckpt_every=500)

# 32 clean sequences of 20 frames -> 7 windows each at 4+10
TREND_DATA = SynthParams(n_sequences=32, frames_per_sequence=20, seed=11, dist_min=6.0, dist_max=12.0)
TREND_RUN = RunConfig(model=dataclasses.replace(M.DESK, t_obs=4, t_pred=10), lr=1e-3, batch=8,
                      epochs=40, seed=0, ckpt_every=5)
LEVELS = (0, 20, 40, 80)


def windows(data_dir, cfg: RunConfig):
    store = load_dataset(data_dir)
    m = cfg.model
    return store, window_samples(store, m.t_obs, m.t_pred, cfg.stride, m.n_points)


def ensure_data(root, params: SynthParams) -> Path:
    root = Path(root)
    if not (root / "manifest.json").exists():
        synth_dataset(root, params)
    return root


def run_overfit(workdir, run: RunConfig = OVERFIT_RUN) -> dict:
    """Train on a single window and report its training-set MPJPE."""
    work = Path(workdir)
    data = ensure_data(work / "overfit_data", OVERFIT_DATA)
    store, samples = windows(data, run)
    t0 = time.perf_counter()
    res = train(samples, run, work / "overfit_ckpt", curve_path=work / "overfit_curve.csv")
    seconds = time.perf_counter() - t0
    rep = evaluate(samples, res.checkpoint.params, run.model, store.fps, seed=run.seed)
    return {"steps": res.checkpoint.step, "seconds": seconds, "n_samples": len(samples),
            "report": rep}


def train_trend_model(workdir, m_hypotheses: int, run: RunConfig = TREND_RUN):
    """Train (or reuse a finished checkpoint of) the trend model with M banks."""
    work = Path(workdir)
    data = ensure_data(work / "trend_data", TREND_DATA)
    run = run.replace(m_hypotheses=m_hypotheses)
    ck = work / f"trend_m{m_hypotheses}"
    store, samples = windows(data, run)
    tr, val = split_by_sequence(samples, run.seed)
    if (ck / "manifest.json").exists():
        done = load_checkpoint(ck, run)
        if done.config == run and done.epoch >= run.epochs:
            return store, val, done
    res = train(tr, run, ck, curve_path=work / f"trend_m{m_hypotheses}_curve.csv")
    return store, val, res.checkpoint


def trend_sweeps(store, val, ckpt, seed: int = 0) -> dict:
    m = ckpt.config.model
    return {mode: robustness_sweep(val, ckpt.params, m, store.fps, mode, LEVELS, seed)
            for mode in ("occlusion", "noise")}


def diverse_comparison(workdir) -> dict:
    store, val, one = train_trend_model(workdir, 1)
    _, _, four = train_trend_model(workdir, 4)
    r1 = evaluate(val, one.params, one.config.model, store.fps, seed=one.config.seed)
    r4 = evaluate(val, four.params, four.config.model, store.fps, seed=four.config.seed)
    return {"m1": r1, "m4": r4}


def non_decreasing(xs) -> bool:
    return all(b >= a for a, b in zip(xs, xs[1:]))

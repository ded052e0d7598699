from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import model as M
from ..autodiff import AdamState, Params, TrainingDivergence, adam_step
from ..config import RunConfig
from ..dataset import atomic_write_bytes
from .checkpoint import Checkpoint, save_checkpoint
from .data import MotionSample, collate

log = logging.getLogger(__name__)

CURVE_FIELDS = ("step", "loss", "l_initial", "l_final", "l_cd")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    curve: list[dict] = field(default_factory=list)


def batch_loss(batch: M.Batch, params: Params, cfg: M.ModelConfig) -> M.LossParts:
    if cfg.m_hypotheses > 1:
        return M.wta_loss(M.forward_diverse(batch, params, cfg), batch, cfg)
    return M.loss_total(M.forward(batch, params, cfg), batch, cfg)


def write_curve(path, curve: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CURVE_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in curve:
        w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in CURVE_FIELDS})
    atomic_write_bytes(path, buf.getvalue().encode())


def new_checkpoint(cfg: RunConfig) -> Checkpoint:
    params = M.init_params(cfg.model, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    return Checkpoint(cfg, params, AdamState(lr=cfg.lr), rng.bit_generator.state, epoch=0, step=0)


def train(samples: list[MotionSample], cfg: RunConfig, out_ckpt=None,
          resume: Checkpoint | None = None, epochs: int | None = None,
          curve_path=None) -> TrainResult:
    """Seeded Adam training; ``epochs`` overrides ``cfg.epochs`` as the target epoch count.

    Batches follow a per-epoch permutation drawn from the checkpointed RNG,
    so a resumed run replays exactly what an uninterrupted one would do.
    """
    if not samples:
        raise ValueError("train: empty dataset")
    ckpt = resume if resume is not None else new_checkpoint(cfg)
    ckpt.config = cfg
    ckpt.adam.lr = cfg.lr
    params, adam = ckpt.params, ckpt.adam
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.rng_state
    target = cfg.epochs if epochs is None else epochs
    curve: list[dict] = []
    mcfg = cfg.model
    done = False
    while ckpt.epoch < target and not done:
        order = rng.permutation(len(samples))
        for s in range(0, len(order), cfg.batch):
            batch = collate([samples[i] for i in order[s:s + cfg.batch]], mcfg)
            params.zero_grad()
            parts = batch_loss(batch, params, mcfg)
            loss = float(parts.total.data)
            if not math.isfinite(loss):
                raise TrainingDivergence(
                    f"loss became {loss} at step {ckpt.step + 1}; last good checkpoint kept"
                )
            parts.total.backward()
            adam_step(params, adam)
            ckpt.step += 1
            row = {"step": ckpt.step, "loss": loss, "l_initial": parts.initial,
                   "l_final": parts.final, "l_cd": parts.cd}
            curve.append(row)
            log.debug("step %d loss %.6f", ckpt.step, loss)
            if cfg.max_steps is not None and ckpt.step >= cfg.max_steps:
                done = True
                break
        ckpt.epoch += 1
        ckpt.rng_state = rng.bit_generator.state
        log.info("epoch %d step %d loss %.6f", ckpt.epoch, ckpt.step, curve[-1]["loss"])
        if out_ckpt is not None and (ckpt.epoch % cfg.ckpt_every == 0 or ckpt.epoch >= target or done):
            save_checkpoint(out_ckpt, ckpt)
    if curve_path is not None:
        write_curve(curve_path, curve)
    return TrainResult(ckpt, curve)

"""Horizon MPJPE evaluation and robustness sweeps, in world coordinates."""
from __future__ import annotations

import numpy as np

from .. import model as M
from .. import sim
from ..autodiff import Params, no_grad
from ..pcops import ContractError
from .data import MotionSample, collate

SHORT = (100, 200, 300, 400)
LONG = (600, 800, 1000)
SWEEP_MODES = ("occlusion", "noise", "distance")


def horizon_frame(ms: int, fps: float) -> int:
    return int(round(ms * fps / 1000.0))


def resolve_horizons(cfg: M.ModelConfig, fps: float, horizons=None) -> dict[int, int]:
    """ms -> 1-based future frame. Default: every standard horizon that fits."""
    if horizons is None:
        return {h: horizon_frame(h, fps) for h in SHORT + LONG
                if 1 <= horizon_frame(h, fps) <= cfg.t_pred}
    out = {}
    for h in horizons:
        f = horizon_frame(h, fps)
        if f < 1 or f > cfg.t_pred:
            raise ContractError(
                f"horizon {h} ms maps to frame {f} at {fps} fps; model predicts 1..{cfg.t_pred}")
        out[int(h)] = f
    return out


def predict_world(samples: list[MotionSample], params: Params, cfg: M.ModelConfig,
                  batch: int = 16) -> np.ndarray:
    """(M, S, T_p, 24, 3) future joints with the anchor centroid added back."""
    hyps = []
    with no_grad():
        for s in range(0, len(samples), batch):
            chunk = samples[s:s + batch]
            b = collate(chunk, cfg, with_targets=False)
            outs = M.forward_diverse(b, params, cfg)
            cen = np.stack([x.centroid for x in chunk])[:, None, None, :]
            hyps.append(np.stack([o.final_joints.data[:, cfg.t_obs:].astype(np.float64) + cen
                                  for o in outs]))
    return np.concatenate(hyps, axis=1)


def _errors(pred: np.ndarray, samples: list[MotionSample]) -> np.ndarray:
    """(M, S, T_p) per-frame MPJPE in mm."""
    gt = np.stack([s.future_gt_joints for s in samples])
    return np.linalg.norm(pred - gt[None], axis=-1).mean(axis=-1) * 1000.0


def _table(per_frame: np.ndarray, hz: dict[int, int]) -> dict[str, float]:
    """Average over samples (fixed index order) at each horizon, plus AVGs."""
    t = {f"h{h}": float(per_frame[:, f - 1].mean()) for h, f in hz.items()}
    short = [t[f"h{h}"] for h in SHORT if h in hz]
    long_ = [t[f"h{h}"] for h in LONG if h in hz]
    if short:
        t["avg_short"] = float(np.mean(short))
    if long_:
        t["avg_long"] = float(np.mean(long_))
    return t


def evaluate(samples: list[MotionSample], params: Params, cfg: M.ModelConfig, fps: float,
             horizons=None, seed: int | None = None) -> dict:
    """EvalReport as a JSON-ready dict. With M > 1, ``mpjpe_mm`` is hypothesis 0."""
    if not samples:
        raise ContractError("evaluate: no samples")
    hz = resolve_horizons(cfg, fps, horizons)
    err = _errors(predict_world(samples, params, cfg), samples)
    main = _table(err[0], hz)
    report = {
        "seed": seed,
        "fps": fps,
        "n_samples": len(samples),
        "m_hypotheses": cfg.m_hypotheses,
        "horizon_frames": {f"h{h}": f for h, f in hz.items()},
        "mpjpe_mm": {k: v for k, v in main.items() if k.startswith("h")},
        "avg_short": main.get("avg_short"),
        "avg_long": main.get("avg_long"),
        "sweeps": {m: [] for m in SWEEP_MODES},
    }
    if cfg.m_hypotheses > 1:
        report["min_mpjpe_mm"] = _table(err.min(axis=0), hz)
        report["per_hypothesis_mm"] = [_table(e, hz) for e in err]
    return report


def _augment(sample: MotionSample, idx: int, mode: str, level: float, seed: int) -> MotionSample:
    """Augment ceil(level * T_o) observed frames. The frame order is a fixed
    per-sample permutation, so higher levels strictly contain lower ones."""
    k = sim.n_augmented(level / 100.0, sample.t_obs)
    if k == 0:
        return sample
    order = np.random.default_rng([seed, idx, 11]).permutation(sample.t_obs)[:k]
    frames = list(sample.observed_raw)
    for f in sorted(order.tolist()):
        stream = np.random.default_rng([seed, idx, f, 1 if mode == "occlusion" else 2])
        if mode == "occlusion":
            frames[f] = sim.inject_occlusion(frames[f], 0.4, stream)
        else:
            frames[f] = sim.inject_noise(frames[f], 30, 0.3, stream)
    return sample.with_observed(frames, sweep=mode, level=level)


def robustness_sweep(samples: list[MotionSample], params: Params, cfg: M.ModelConfig,
                     fps: float, mode: str, levels, seed: int = 0, horizons=None) -> list[dict]:
    """One row per level.

    occlusion/noise: ``levels`` are percentages of observed frames to augment.
    distance: ``levels`` are ascending bin edges in meters; rows are [lo, hi).
    """
    if mode not in SWEEP_MODES:
        raise ContractError(f"sweep mode must be one of {SWEEP_MODES}, got {mode!r}")
    levels = [float(x) for x in levels]
    rows = []
    if mode == "distance":
        if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ContractError("distance sweep needs >= 2 ascending bin edges")
        dist = np.array([s.meta.get("distance", np.nan) for s in samples], dtype=float)
        if np.isnan(dist).any():
            raise ContractError("distance sweep needs per-sequence distances in the manifest")
        for lo, hi in zip(levels, levels[1:]):
            sel = [s for s, d in zip(samples, dist) if lo <= d < hi]
            row = {"bin": [lo, hi], "n_samples": len(sel)}
            row.update(evaluate(sel, params, cfg, fps, horizons)["mpjpe_mm"] if sel else {})
            rows.append(row)
        return rows
    for level in levels:
        if not 0 <= level <= 100:
            raise ContractError(f"{mode} level {level} outside [0, 100]")
        aug = [_augment(s, i, mode, level, seed) for i, s in enumerate(samples)]
        rep = evaluate(aug, params, cfg, fps, horizons, seed)
        row = {"level": level, "n_samples": len(aug), **rep["mpjpe_mm"]}
        for k in ("avg_short", "avg_long"):
            if rep[k] is not None:
                row[k] = rep[k]
        if "min_mpjpe_mm" in rep:
            row["min_mpjpe_mm"] = rep["min_mpjpe_mm"]
        rows.append(row)
    return rows


def sweep_mean(row: dict) -> float:
    """Average MPJPE over the horizon columns of a sweep row."""
    vals = [v for k, v in row.items() if k.startswith("h") and k[1:].isdigit()]
    return float(np.mean(vals))

"""End-to-end finite-difference check of the full training loss on a tiny model."""
from __future__ import annotations

import numpy as np

from . import model as M
from .autodiff import numeric_grad, rel_error
from .pcops import NOISE


def micro_batch(cfg: M.ModelConfig = M.MICRO, batch: int = 2, seed: int = 0) -> M.Batch:
    """Random batch with some NOISE points, one empty part and masked cloud padding."""
    rng = np.random.default_rng(seed)
    n, k = cfg.n_points, cfg.k_parts
    points = rng.normal(size=(batch, cfg.t_obs, n, 3))
    labels = rng.integers(0, k, size=(batch, cfg.t_obs, n))
    labels[..., :2] = NOISE
    labels[labels == k - 1] = 0  # last part always missing
    member = labels[:, :, None, :] == np.arange(k)[None, None, :, None]
    b = M.Batch(points, member, member.any(-1))
    b.gt_joints = rng.normal(scale=0.5, size=(batch, cfg.t_total, M.N_JOINTS, 3))
    b.gt_clouds = rng.normal(size=(batch, cfg.t_total, n, 3))
    b.cloud_mask = rng.random((batch, cfg.t_total, n)) > 0.2
    b.cloud_mask[:, -1] = False  # a frame with no target points
    return b


def end_to_end_check(cfg: M.ModelConfig = M.MICRO, seed: int = 0, coords: int = 3,
                     eps: float = 1e-6) -> dict[str, float]:
    """Relative error of d(total loss)/d(param) for every named parameter.

    Float64 throughout; ``coords`` random entries per parameter are probed.
    Errors share one normalizer, the largest analytic gradient entry.
    """
    params = M.init_params(cfg, seed, np.float64)
    batch = micro_batch(cfg, seed=seed)

    def loss():
        return M.loss_total(M.forward(batch, params, cfg), batch, cfg).total

    params.zero_grad()
    loss().backward()
    analytic = {n: np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for n, t in params.items()}
    scale = max(np.abs(a).max() for a in analytic.values())
    rng = np.random.default_rng([seed, 3])
    out = {}
    for name, t in params.items():
        size = t.data.size
        idx = np.sort(rng.choice(size, size=min(coords, size), replace=False))
        num = numeric_grad(loss, t, eps, idx).reshape(-1)[idx]
        out[name] = rel_error(analytic[name].reshape(-1)[idx], num, scale)
    return out

"""LiDAR point-cloud motion predictor.

Pipeline per sample: shared point MLP -> global and per-part max pooling ->
descriptor tokens (global + K parts) refined by one spatial and one temporal
transformer layer -> learnable motion queries cross-attend to the observed
descriptor -> alternating spatial/temporal layers -> coarse joints ->
joint and feature token embedding -> alternating spatial/temporal layers
with learnable positional encodings -> joint head and per-part point head.

Everything carries a leading batch axis B. Shapes below omit it.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import nn
from .autodiff.engine import Tensor
from .pcops import K_PARTS

N_JOINTS = 24
POINTS_PER_PART = 32


@dataclass(frozen=True)
class ModelConfig:
    t_obs: int = 4
    t_pred: int = 4
    n_points: int = 256
    k_parts: int = K_PARTS
    d1: int = 128
    d2: int = 64
    heads: int = 4
    n_st_pairs: int = 2
    m_hypotheses: int = 1
    pointnet_widths: tuple[int, ...] = (64, 128)

    @property
    def t_total(self) -> int:
        return self.t_obs + self.t_pred

    @property
    def n_tokens(self) -> int:
        return self.k_parts + 1

    @property
    def n_refine_tokens(self) -> int:
        return self.k_parts + N_JOINTS + 1

    def validate(self) -> None:
        if self.t_obs < 1 or self.t_pred < 1:
            raise nn.ConfigError("t_obs and t_pred must be >= 1")
        if self.m_hypotheses < 1:
            raise nn.ConfigError("m_hypotheses must be >= 1")
        for name in ("d1", "d2"):
            if getattr(self, name) % self.heads:
                raise nn.ConfigError(f"{name}={getattr(self, name)} not divisible by heads={self.heads}")
        if self.n_points < 1 or self.k_parts < 1:
            raise nn.ConfigError("n_points and k_parts must be positive")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["pointnet_widths"] = list(self.pointnet_widths)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["pointnet_widths"] = tuple(d.get("pointnet_widths", cls.pointnet_widths))
        return cls(**d)


DESK = ModelConfig()
PAPER = ModelConfig(d1=1024, d2=512, heads=8, pointnet_widths=(64, 128))
MICRO = ModelConfig(t_obs=2, t_pred=2, n_points=16, d1=16, d2=8, heads=2, n_st_pairs=1,
                    pointnet_widths=(8,))


@dataclass
class Batch:
    points: np.ndarray  # (B, T_o, N, 3)
    member: np.ndarray  # (B, T_o, K, N) bool
    present: np.ndarray  # (B, T_o, K) bool
    gt_joints: np.ndarray | None = None  # (B, T, 24, 3)
    gt_clouds: np.ndarray | None = None  # (B, T, G, 3)
    cloud_mask: np.ndarray | None = None  # (B, T, G) bool

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class ForwardOutput:
    descriptor: Tensor  # (B, T_o, K+1, d1)
    mapped: Tensor  # F: (B, T, K+1, d1)
    refined: Tensor  # F': (B, T, K+1, d1)
    coarse_joints: Tensor  # (B, T, 24, 3)
    tokens: Tensor  # (B, T, K+25, d2)
    final_joints: Tensor  # (B, T, 24, 3)
    pred_points: Tensor  # (B, T, K, 32, 3)
    extras: dict = field(default_factory=dict)


# -- parameters -----------------------------------------------------------
def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> nn.Params:
    cfg.validate()
    rng = np.random.default_rng(seed)
    p = nn.Params(dtype)
    d1, d2, T, S = cfg.d1, cfg.d2, cfg.t_total, cfg.n_tokens
    nn.init_mlp(p, "pointnet", [3, *cfg.pointnet_widths, d1], rng)
    p.add("desc.missing", rng.normal(0.0, 0.02, size=d1))
    p.add("desc.pos", rng.normal(0.0, 0.02, size=(cfg.t_obs, S, d1)))
    nn.init_transformer_layer(p, "desc.st", d1, cfg.heads, rng)
    nn.init_transformer_layer(p, "desc.tt", d1, cfg.heads, rng)
    for m in range(cfg.m_hypotheses):
        p.add(f"query.{m}", rng.normal(0.0, 0.02, size=(T, S, d1)))
    nn.init_layer_norm(p, "map.ln_q", d1)
    nn.init_layer_norm(p, "map.ln_kv", d1)
    nn.init_attention(p, "map.cross", d1, cfg.heads, rng)
    nn.init_layer_norm(p, "map.ln_ff", d1)
    nn.init_linear(p, "map.ff1", d1, 2 * d1, rng)
    nn.init_linear(p, "map.ff2", 2 * d1, d1, rng)
    for i in range(cfg.n_st_pairs):
        nn.init_transformer_layer(p, f"map.s{i}", d1, cfg.heads, rng)
        nn.init_transformer_layer(p, f"map.t{i}", d1, cfg.heads, rng)
    nn.init_linear(p, "coarse", S * d1, N_JOINTS * 3, rng)
    nn.init_mlp(p, "embed_joint", [3, d2, d2], rng)
    nn.init_mlp(p, "embed_feat", [d1, d2, d2], rng)
    p.add("refine.spatial_pos", rng.normal(0.0, 0.02, size=(cfg.n_refine_tokens, d2)))
    p.add("refine.temporal_pos", rng.normal(0.0, 0.02, size=(T, 1, d2)))
    for i in range(cfg.n_st_pairs):
        nn.init_transformer_layer(p, f"refine.s{i}", d2, cfg.heads, rng)
        nn.init_transformer_layer(p, f"refine.t{i}", d2, cfg.heads, rng)
    nn.init_mlp(p, "head_joint", [d2, d2, d2, 3], rng)
    nn.init_mlp(p, "head_point", [d2, d2, d2, POINTS_PER_PART * 3], rng)
    return p


def check_params(params: nn.Params, cfg: ModelConfig) -> None:
    """Raise naming the first parameter whose shape disagrees with ``cfg``."""
    ref = init_params(cfg, 0, np.float32)
    missing = [n for n in ref if n not in params]
    if missing:
        raise ad.ShapeError(f"parameter {missing[0]!r} missing for this config")
    for name in params:
        if name not in ref:
            raise ad.ShapeError(f"parameter {name!r} not used by this config")
        if params[name].shape != ref[name].shape:
            raise ad.ShapeError(
                f"parameter {name!r} has shape {params[name].shape}, config expects {ref[name].shape}"
            )


# -- forward pieces -------------------------------------------------------
def encode_frame(points: Tensor, params: nn.Params, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """(..., N, 3) -> point features (..., N, d1) and global max (..., d1)."""
    if not np.all(np.isfinite(points.data)):
        raise ValueError("encode_frame: non-finite input points")
    feats = nn.mlp(points, params, "pointnet", len(cfg.pointnet_widths) + 1)
    return feats, ad.max_(feats, axis=-2)


def part_pool(feats: Tensor, member: np.ndarray) -> Tensor:
    """Per-part channelwise max: (..., N, d) x (..., K, N) -> (..., K, d); empty parts -> 0."""
    k = member.shape[-2]
    lead = feats.shape[:-2]
    expanded = ad.add(ad.reshape(feats, (*lead, 1, *feats.shape[-2:])),
                      np.zeros((k, 1, 1), dtype=feats.dtype))
    return ad.max_(expanded, axis=-2, mask=member[..., None])


def raw_descriptor(batch: Batch, params: nn.Params, cfg: ModelConfig) -> Tensor:
    """(B, T_o, K+1, d1) global + part tokens before positional encoding and enhancement."""
    if not batch.present.any(axis=(1, 2)).all():
        raise ValueError("build_descriptor: a sample has no labeled points in any frame")
    pts = Tensor(batch.points.astype(params.dtype, copy=False))
    feats, glo = encode_frame(pts, params, cfg)
    part = part_pool(feats, batch.member)
    absent = (~batch.present).astype(params.dtype)[..., None]
    part = part + ad.mul(absent, params["desc.missing"])
    B, To = glo.shape[:2]
    return ad.concat([ad.reshape(glo, (B, To, 1, cfg.d1)), part], axis=2)


def build_descriptor(batch: Batch, params: nn.Params, cfg: ModelConfig) -> Tensor:
    """(B, T_o, K+1, d1): token 0 global, tokens 1..K parts, then enhanced."""
    h = raw_descriptor(batch, params, cfg) + params["desc.pos"]
    h = nn.transformer_over_axis(h, 2, cfg.heads, params, "desc.st")
    return nn.transformer_over_axis(h, 1, cfg.heads, params, "desc.tt")


def motion_latent_map(h: Tensor, params: nn.Params, cfg: ModelConfig,
                      hypothesis: int = 0) -> tuple[Tensor, Tensor, Tensor]:
    """Cross-attend the query bank to the descriptor; returns (F, F', coarse joints)."""
    if not 0 <= hypothesis < cfg.m_hypotheses:
        raise IndexError(f"hypothesis {hypothesis} outside 0..{cfg.m_hypotheses - 1}")
    B = h.shape[0]
    S, T, d1 = cfg.n_tokens, cfg.t_total, cfg.d1
    kv = nn.ln(ad.reshape(h, (B, cfg.t_obs * S, d1)), params, "map.ln_kv")
    bank = ad.reshape(params[f"query.{hypothesis}"], (T * S, d1))
    q = nn.ln(bank, params, "map.ln_q")
    f = bank + nn.multi_head_attention(q, kv, kv, cfg.heads, params, "map.cross")
    ff = nn.linear(ad.relu(nn.linear(nn.ln(f, params, "map.ln_ff"), params, "map.ff1")), params, "map.ff2")
    f = ad.reshape(f + ff, (B, T, S, d1))
    mapped = f
    for i in range(cfg.n_st_pairs):
        f = nn.transformer_over_axis(f, 2, cfg.heads, params, f"map.s{i}")
        f = nn.transformer_over_axis(f, 1, cfg.heads, params, f"map.t{i}")
    coarse = nn.linear(ad.reshape(f, (B, T, S * d1)), params, "coarse")
    return mapped, f, ad.reshape(coarse, (B, T, N_JOINTS, 3))


def stcr_refine(coarse: Tensor, refined: Tensor, params: nn.Params, cfg: ModelConfig,
                extras: dict | None = None) -> Tensor:
    """Joint and feature tokens -> (B, T, K+25, d2) after alternating ST/TT layers."""
    e_joint = nn.mlp(coarse, params, "embed_joint", 2)
    e_feat = nn.mlp(refined, params, "embed_feat", 2)
    if extras is not None:
        extras.update(joint_embed=e_joint, feat_embed=e_feat)
    tk = ad.concat([e_joint, e_feat], axis=2)
    for i in range(cfg.n_st_pairs):
        tk = nn.transformer_over_axis(tk + params["refine.spatial_pos"], 2, cfg.heads, params,
                                      f"refine.s{i}")
        tk = nn.transformer_over_axis(tk + params["refine.temporal_pos"], 1, cfg.heads, params,
                                      f"refine.t{i}")
    return tk


def decode_heads(tokens: Tensor, params: nn.Params, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """Joint tokens -> (B, T, 24, 3); part tokens -> (B, T, K, 32, 3)."""
    B, T = tokens.shape[:2]
    joints = nn.mlp(tokens[:, :, :N_JOINTS], params, "head_joint", 3)
    part_tok = tokens[:, :, N_JOINTS + 1:]
    pts = nn.mlp(part_tok, params, "head_point", 3)
    return joints, ad.reshape(pts, (B, T, cfg.k_parts, POINTS_PER_PART, 3))


def forward_from_descriptor(h: Tensor, params: nn.Params, cfg: ModelConfig,
                            hypothesis: int = 0) -> ForwardOutput:
    mapped, refined, coarse = motion_latent_map(h, params, cfg, hypothesis)
    extras: dict = {}
    tokens = stcr_refine(coarse, refined, params, cfg, extras)
    joints, pts = decode_heads(tokens, params, cfg)
    return ForwardOutput(h, mapped, refined, coarse, tokens, joints, pts, extras)


def forward(batch: Batch, params: nn.Params, cfg: ModelConfig, hypothesis: int = 0) -> ForwardOutput:
    return forward_from_descriptor(build_descriptor(batch, params, cfg), params, cfg, hypothesis)


def forward_diverse(batch: Batch, params: nn.Params, cfg: ModelConfig) -> list[ForwardOutput]:
    """One output per query bank; the descriptor is computed once and shared."""
    h = build_descriptor(batch, params, cfg)
    return [forward_from_descriptor(h, params, cfg, m) for m in range(cfg.m_hypotheses)]


# -- losses ---------------------------------------------------------------
def _require_gt(batch: Batch, cfg: ModelConfig) -> np.ndarray:
    gt = batch.gt_joints
    if gt is None or gt.shape[1:] != (cfg.t_total, N_JOINTS, 3):
        raise ValueError(
            f"ground-truth joints for all {cfg.t_total} frames required, got "
            f"{None if gt is None else gt.shape}"
        )
    return gt


def loss_joints(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Per-sample sum over frames of squared Frobenius error: (B,)."""
    if pred.shape != gt.shape:
        raise ad.ShapeError(f"loss_joints: pred {pred.shape} vs gt {gt.shape}")
    return ad.sq_err_sum(pred, Tensor(gt.astype(pred.dtype, copy=False)), axis=(1, 2, 3))


def loss_initial(out: ForwardOutput, batch: Batch, cfg: ModelConfig) -> Tensor:
    return loss_joints(out.coarse_joints, _require_gt(batch, cfg))


def loss_final(out: ForwardOutput, batch: Batch, cfg: ModelConfig) -> Tensor:
    return loss_joints(out.final_joints, _require_gt(batch, cfg))


def chamfer_loss(pred: Tensor, clouds: np.ndarray, mask: np.ndarray) -> tuple[Tensor, int]:
    """Per-sample Chamfer summed over frames.

    pred (B, T, P, 3); clouds (B, T, G, 3) with ``mask`` (B, T, G) marking real
    points. Frames without any real point contribute nothing; their count is
    returned alongside.
    """
    counts = mask.sum(axis=-1)
    skipped = int((counts == 0).sum())
    dt = pred.dtype
    d = ad.pairwise_sqdist(pred, Tensor(clouds.astype(dt, copy=False)))  # (B, T, P, G)
    to_gt = ad.mean(ad.min_(d, axis=3, mask=mask[:, :, None, :]), axis=2)  # (B, T)
    to_pred = ad.min_(d, axis=2)  # (B, T, G)
    weights = (mask / np.maximum(counts, 1)[..., None]).astype(dt)
    from_gt = ad.sum_(ad.mul(to_pred, weights), axis=2)
    has = (counts > 0).astype(dt)
    return ad.sum_(ad.mul(to_gt + from_gt, has), axis=1), skipped


def loss_points(out: ForwardOutput, batch: Batch, cfg: ModelConfig) -> tuple[Tensor, int]:
    if batch.gt_clouds is None or batch.cloud_mask is None:
        raise ValueError("loss_points: ground-truth clouds missing")
    B, T = out.pred_points.shape[:2]
    flat = ad.reshape(out.pred_points, (B, T, cfg.k_parts * POINTS_PER_PART, 3))
    return chamfer_loss(flat, batch.gt_clouds, batch.cloud_mask)


@dataclass
class LossParts:
    total: Tensor  # scalar
    per_sample: Tensor  # (B,)
    initial: float
    final: float
    cd: float
    skipped_frames: int = 0
    winners: np.ndarray | None = None


def loss_components(out: ForwardOutput, batch: Batch, cfg: ModelConfig) -> tuple[Tensor, Tensor, Tensor, int]:
    li = loss_initial(out, batch, cfg)
    lf = loss_final(out, batch, cfg)
    lc, skipped = loss_points(out, batch, cfg)
    return li, lf, lc, skipped


def loss_total(out: ForwardOutput, batch: Batch, cfg: ModelConfig) -> LossParts:
    """Unweighted sum of the three terms, summed over the batch."""
    li, lf, lc, skipped = loss_components(out, batch, cfg)
    per = li + lf + lc
    return LossParts(ad.sum_(per), per, float(li.data.sum()), float(lf.data.sum()),
                     float(lc.data.sum()), skipped)


def future_mpjpe(joints: np.ndarray, gt: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """(B,) mean MPJPE (mm) over the predicted frames."""
    fut = slice(cfg.t_obs, cfg.t_total)
    d = np.linalg.norm(joints[:, fut].astype(np.float64) - gt[:, fut].astype(np.float64), axis=-1)
    return d.mean(axis=(1, 2)) * 1000.0


def wta_loss(outs: list[ForwardOutput], batch: Batch, cfg: ModelConfig) -> LossParts:
    """Per sample, only the hypothesis with the lowest future MPJPE is trained."""
    gt = _require_gt(batch, cfg)
    scores = np.stack([future_mpjpe(o.final_joints.data, gt, cfg) for o in outs], axis=1)
    winners = np.argmin(scores, axis=1)
    if len(outs) == 1:
        parts = loss_total(outs[0], batch, cfg)
        parts.winners = winners
        return parts
    per = None
    li = lf = lc = 0.0
    skipped = 0
    for m, o in enumerate(outs):
        sel = winners == m
        if not sel.any():
            continue
        a, b, c, s = loss_components(o, batch, cfg)
        w = sel.astype(o.final_joints.dtype)
        term = ad.mul(a + b + c, w)
        per = term if per is None else per + term
        li += float((a.data * w).sum())
        lf += float((b.data * w).sum())
        lc += float((c.data * w).sum())
        skipped += s
    return LossParts(ad.sum_(per), per, li, lf, lc, skipped, winners)

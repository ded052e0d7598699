"""Point-cloud preprocessing and metrics.

All metric computations run in float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

K_PARTS = 9
NOISE = 255


class EmptyInputError(ValueError):
    pass


class DataCorruptionError(ValueError):
    pass


class ContractError(ValueError):
    pass


@dataclass
class ProcessedFrame:
    points: np.ndarray  # (N, 3) centered
    labels: np.ndarray  # (N,) uint8
    centroid: np.ndarray  # (3,) subtracted offset
    source_count: int
    valid: np.ndarray | None = None  # (N,) bool, False on padding repeats

    def __post_init__(self):
        if self.valid is None:
            self.valid = np.ones(len(self.points), dtype=bool)


@dataclass
class PartBins:
    bins: list[np.ndarray]  # K index arrays
    noise: np.ndarray  # indices labeled NOISE
    mask: np.ndarray  # (K,) bool, bin nonempty

    def membership(self, n_points: int) -> np.ndarray:
        """(K, n_points) boolean membership matrix."""
        m = np.zeros((len(self.bins), n_points), dtype=bool)
        for k, idx in enumerate(self.bins):
            m[k, idx] = True
        return m


def farthest_point_sample(points: np.ndarray, n_target: int) -> np.ndarray:
    """Greedy FPS starting at the point farthest from the centroid.

    When fewer than ``n_target`` points exist, every index is returned in FPS
    order followed by repeats of index 0. Ties resolve to the lowest index.
    """
    pts = np.asarray(points, dtype=np.float64)
    m = len(pts)
    if m == 0:
        raise EmptyInputError("farthest_point_sample: no points")
    k = min(m, n_target)
    centroid = pts.mean(axis=0)
    start = int(np.argmax(((pts - centroid) ** 2).sum(axis=1)))
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    dist = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, ((pts - pts[nxt]) ** 2).sum(axis=1))
    if n_target > m:
        chosen = np.concatenate([chosen, np.zeros(n_target - m, dtype=np.int64)])
    return chosen


def center_normalize(points: np.ndarray, labels: np.ndarray, centroid: np.ndarray | None = None,
                     valid: np.ndarray | None = None, source_count: int | None = None) -> ProcessedFrame:
    """Subtract a centroid (default: mean of the non-padding points)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        raise EmptyInputError("center_normalize: empty frame")
    if valid is None:
        valid = np.ones(len(pts), dtype=bool)
    if centroid is None:
        centroid = pts[valid].mean(axis=0)
    centroid = np.asarray(centroid, dtype=np.float64)
    return ProcessedFrame(
        points=pts - centroid,
        labels=np.asarray(labels, dtype=np.uint8),
        centroid=centroid.copy(),
        source_count=len(pts) if source_count is None else source_count,
        valid=np.asarray(valid, dtype=bool),
    )


def sample_frame(points: np.ndarray, labels: np.ndarray, n_points: int,
                 centroid: np.ndarray | None = None) -> ProcessedFrame:
    """FPS to ``n_points`` then center. Padding repeats are marked invalid."""
    idx = farthest_point_sample(points, n_points)
    valid = np.zeros(n_points, dtype=bool)
    valid[: min(len(points), n_points)] = True
    return center_normalize(np.asarray(points)[idx], np.asarray(labels)[idx], centroid,
                            valid, source_count=len(points))


def bin_by_part(labels: np.ndarray, k_parts: int = K_PARTS) -> PartBins:
    lab = np.asarray(labels)
    bad = (lab != NOISE) & ((lab < 0) | (lab >= k_parts))
    if bad.any():
        raise DataCorruptionError(f"labels outside 0..{k_parts - 1} and {NOISE}: {np.unique(lab[bad])}")
    bins = [np.flatnonzero(lab == k) for k in range(k_parts)]
    return PartBins(bins=bins, noise=np.flatnonzero(lab == NOISE),
                    mask=np.array([len(b) > 0 for b in bins]))


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptyInputError("chamfer: empty point set")
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-timestamp mean joint distance in millimeters; inputs in meters."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ContractError(f"mpjpe: pred {pred.shape} vs gt {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1).mean(axis=-1) * 1000.0


def mpjpe_mean(pred: np.ndarray, gt: np.ndarray, frames=None) -> float:
    per_t = mpjpe(pred, gt)
    if frames is not None:
        per_t = per_t[list(frames)]
    return float(per_t.mean())


def min_mpjpe(hypotheses: np.ndarray, gt: np.ndarray) -> tuple[float, int]:
    """Lowest horizon-averaged MPJPE over hypotheses, and its index."""
    hyp = np.asarray(hypotheses, dtype=np.float64)
    if hyp.ndim != 4 or len(hyp) == 0:
        raise ContractError(f"min_mpjpe: need (M>=1, T, 24, 3) hypotheses, got {hyp.shape}")
    scores = np.array([mpjpe_mean(h, gt) for h in hyp])
    best = int(np.argmin(scores))
    return float(scores[best]), best

"""Dataset loading, sliding windows, per-sample preprocessing and batching."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .. import pcops
from ..dataset import FormatError, read_manifest, read_sequence
from ..model import Batch, ModelConfig
from ..pcops import NOISE, ProcessedFrame
from ..sim import ScanFrame


@dataclass
class Sequence:
    frames: list[ScanFrame]
    fps: float
    meta: dict


@dataclass
class DatasetStore:
    root: Path
    manifest: dict
    sequences: list[Sequence]

    @property
    def fps(self) -> float:
        return self.sequences[0].fps if self.sequences else float(self.manifest["params"]["fps"])


def load_dataset(path) -> DatasetStore:
    root = Path(path)
    manifest = read_manifest(root)
    if manifest.get("format") != "lhmp" or manifest.get("version") != 1:
        raise FormatError(f"{root}: manifest is not an lhmp v1 dataset")
    seqs = []
    for entry in manifest["sequences"]:
        fps, frames = read_sequence(root / entry["file"])
        if len(frames) != entry["n_frames"]:
            raise FormatError(f"{entry['file']}: {len(frames)} frames, manifest says {entry['n_frames']}")
        seqs.append(Sequence(frames, fps, entry))
    return DatasetStore(root, manifest, seqs)


@dataclass
class MotionSample:
    """One window: ``t_obs`` observed scans followed by ``t_pred`` future frames.

    All frames are expressed relative to one anchor: the centroid of the
    sampled points of the last nonempty observed frame.
    """

    observed_raw: list[ScanFrame]
    future_raw: list[ScanFrame]
    n_points: int
    meta: dict = field(default_factory=dict)

    @property
    def t_obs(self) -> int:
        return len(self.observed_raw)

    @property
    def observed_gt_joints(self) -> np.ndarray:
        return np.stack([f.gt_joints for f in self.observed_raw]).astype(np.float64)

    @property
    def future_gt_joints(self) -> np.ndarray:
        return np.stack([f.gt_joints for f in self.future_raw]).astype(np.float64)

    @property
    def future_gt_clouds(self) -> list[np.ndarray]:
        return [f.points for f in self.future_raw]

    @cached_property
    def centroid(self) -> np.ndarray:
        for f in reversed(self.observed_raw):
            if len(f.points):
                idx = pcops.farthest_point_sample(f.points, self.n_points)
                valid = idx[: min(len(f.points), self.n_points)]
                return np.asarray(f.points, dtype=np.float64)[valid].mean(axis=0)
        raise ValueError(f"window {self.meta} has no observed points")

    def _process(self, frame: ScanFrame) -> ProcessedFrame:
        if len(frame.points) == 0:
            n = self.n_points
            return ProcessedFrame(np.zeros((n, 3)), np.full(n, NOISE, dtype=np.uint8),
                                  self.centroid.copy(), 0, np.zeros(n, dtype=bool))
        return pcops.sample_frame(frame.points, frame.labels, self.n_points, self.centroid)

    @cached_property
    def observed(self) -> list[ProcessedFrame]:
        return [self._process(f) for f in self.observed_raw]

    @cached_property
    def future_processed(self) -> list[ProcessedFrame]:
        return [self._process(f) for f in self.future_raw]

    def with_observed(self, frames: list[ScanFrame], **meta) -> "MotionSample":
        return MotionSample(frames, self.future_raw, self.n_points, {**self.meta, **meta})


def window_samples(store: DatasetStore, t_obs: int, t_pred: int, stride: int = 1,
                   n_points: int = 256) -> list[MotionSample]:
    """Sliding windows that never cross sequence boundaries."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    span = t_obs + t_pred
    out = []
    for seq in store.sequences:
        n = len(seq.frames)
        for start in range(0, n - span + 1, stride):
            frames = seq.frames[start:start + span]
            meta = {"sequence": seq.meta.get("index"), "start": start,
                    "distance": seq.meta.get("distance"), "kind": seq.meta.get("kind"),
                    "noise_frames": [i - start for i in seq.meta.get("noise_frames", [])
                                     if start <= i < start + span],
                    "occluded_frames": [i - start for i in seq.meta.get("occluded_frames", [])
                                        if start <= i < start + span]}
            out.append(MotionSample(frames[:t_obs], frames[t_obs:], n_points, meta))
    return out


def split_by_sequence(samples: list[MotionSample], seed: int, val_fraction: float = 0.1
                      ) -> tuple[list[MotionSample], list[MotionSample]]:
    """Seeded split on sequence ids so no sequence lands in both halves."""
    ids = sorted({s.meta.get("sequence") for s in samples})
    rng = np.random.default_rng([seed, 7])
    n_val = int(round(val_fraction * len(ids)))
    val_ids = set(rng.permutation(ids)[:n_val].tolist()) if n_val else set()
    train = [s for s in samples if s.meta.get("sequence") not in val_ids]
    val = [s for s in samples if s.meta.get("sequence") in val_ids]
    return train, val


def collate(samples: list[MotionSample], cfg: ModelConfig, with_targets: bool = True) -> Batch:
    for s in samples:
        if s.t_obs != cfg.t_obs or len(s.future_raw) != cfg.t_pred or s.n_points != cfg.n_points:
            raise ValueError(f"sample {s.meta} does not match model windows/sampling")
    points = np.stack([[f.points for f in s.observed] for s in samples])
    labels = np.stack([[f.labels for f in s.observed] for s in samples])
    member = labels[:, :, None, :] == np.arange(cfg.k_parts)[None, None, :, None]
    present = member.any(axis=-1)
    batch = Batch(points, member, present)
    if with_targets:
        gt, clouds, masks = [], [], []
        for s in samples:
            frames = s.observed + s.future_processed
            joints = np.concatenate([s.observed_gt_joints, s.future_gt_joints]) - s.centroid
            gt.append(joints)
            clouds.append([f.points for f in frames])
            masks.append([f.valid & (f.labels != NOISE) for f in frames])
        batch.gt_joints = np.stack(gt)
        batch.gt_clouds = np.stack(clouds)
        batch.cloud_mask = np.stack(masks)
    return batch

"""Synthetic dataset generation: motion -> skinning -> scan -> augmentation -> files."""
from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import sim
from .dataset import MANIFEST, atomic_write_json, write_sequence

DEFAULT_KINDS = ("walk", "squat", "arm_raise", "turn")


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclasses.dataclass(frozen=True)
class SynthParams:
    n_sequences: int = 200
    frames_per_sequence: int = 14
    fps: float = 10.0
    dist_min: float = 6.0
    dist_max: float = 27.0
    noise_frame_ratio: float = 0.0
    occl_frame_ratio: float = 0.0
    n_noise: int = 30
    noise_radius: float = 0.3
    cube_side: float = 0.4
    kinds: tuple[str, ...] = DEFAULT_KINDS
    segments_per_capsule: int = 8
    scan: sim.ScanConfig = sim.ScanConfig()
    seed: int = 0

    def validate(self) -> None:
        for name in ("noise_frame_ratio", "occl_frame_ratio"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise sim.ConfigurationError(f"{name}={r} outside [0, 1]")
        if self.n_sequences < 0 or self.frames_per_sequence < 1:
            raise sim.ConfigurationError("need n_sequences >= 0 and frames_per_sequence >= 1")
        if not 0 < self.dist_min <= self.dist_max:
            raise sim.ConfigurationError(f"bad distance range [{self.dist_min}, {self.dist_max}]")
        for k in self.kinds:
            if k not in sim.MOTION_KINDS:
                raise sim.ConfigurationError(f"unknown motion kind {k!r}")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["kinds"] = list(self.kinds)
        d["scan"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["scan"].items()}
        return d


def generate_sequence(params: SynthParams, index: int) -> tuple[list[sim.ScanFrame], dict]:
    """Frames and manifest entry for sequence ``index``; depends only on (seed, index)."""
    rng = _stream(params.seed, index)
    kind = params.kinds[int(rng.integers(len(params.kinds)))]
    distance = float(rng.uniform(params.dist_min, params.dist_max))
    azimuth = float(rng.uniform(0.0, 2.0 * np.pi))
    heading = float(rng.uniform(0.0, 2.0 * np.pi))
    motion_seed = int(rng.integers(2**31))
    n = params.frames_per_sequence
    order_n = rng.permutation(n)
    order_o = rng.permutation(n)
    noisy = set(order_n[: sim.n_augmented(params.noise_frame_ratio, n)].tolist())
    occluded = set(order_o[: sim.n_augmented(params.occl_frame_ratio, n)].tolist())

    rig = sim.default_rig()
    local = sim.make_motion(kind, n, params.fps, motion_seed, rig)
    cfg = dataclasses.replace(params.scan, distance=distance)
    frames = []
    for i in range(n):
        joints = sim.place(local[i], distance, azimuth, heading)
        mesh = sim.skin_rig(rig, joints, params.segments_per_capsule)
        frame = sim.ray_cast(mesh, cfg, joints, timestamp=i / params.fps)
        if i in occluded:
            frame = sim.inject_occlusion(frame, params.cube_side, _stream(params.seed, index, i, 1))
        if i in noisy:
            frame = sim.inject_noise(frame, params.n_noise, params.noise_radius,
                                     _stream(params.seed, index, i, 2))
        frames.append(frame)
    entry = {
        "file": f"seq_{index:05d}.lhmp",
        "index": index,
        "kind": kind,
        "distance": distance,
        "azimuth": azimuth,
        "heading": heading,
        "motion_seed": motion_seed,
        "n_frames": n,
        "noise_frames": sorted(noisy),
        "occluded_frames": sorted(occluded),
        "point_counts": [len(f.points) for f in frames],
    }
    return frames, entry


def _write_one(args) -> dict:
    params, index, out = args
    frames, entry = generate_sequence(params, index)
    write_sequence(Path(out) / entry["file"], frames, params.fps)
    return entry


def synth_dataset(out_path, params: SynthParams, workers: int | None = None) -> dict:
    """Write every sequence plus ``manifest.json``; returns the manifest."""
    params.validate()
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"{out} is not writable")
    jobs = [(params, i, str(out)) for i in range(params.n_sequences)]
    workers = workers or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_write_one, jobs))
    else:
        entries = [_write_one(j) for j in jobs]
    manifest = {
        "format": "lhmp",
        "version": 1,
        "seed": params.seed,
        "params": params.to_json(),
        "sequences": entries,
    }
    atomic_write_json(out / MANIFEST, manifest)
    return manifest

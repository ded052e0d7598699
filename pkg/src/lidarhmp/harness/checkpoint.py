"""Checkpoint directory: ``manifest.json`` + ``params.bin`` (float32 little-endian).

The manifest lists every blob entry (name, shape, byte offset, length) for
parameters and Adam moments, plus the run config, Adam scalars, the batching
RNG state and the epoch counter.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import AdamState, Params, ShapeError
from ..config import RunConfig
from ..dataset import atomic_write_bytes, atomic_write_json
from ..model import check_params

MANIFEST = "manifest.json"
BLOB = "params.bin"


class CheckpointCorruption(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    params: Params
    adam: AdamState
    rng_state: dict | None
    epoch: int
    step: int = 0


def _entries(ckpt: Checkpoint):
    for name, t in ckpt.params.items():
        yield name, t.data
    for name in ckpt.params:
        if name in ckpt.adam.m:
            yield f"adam.m/{name}", ckpt.adam.m[name]
            yield f"adam.v/{name}", ckpt.adam.v[name]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    blobs, table, offset = [], [], 0
    for name, arr in _entries(ckpt):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format": "lhmp-ckpt",
        "version": 1,
        "config": ckpt.config.to_dict(),
        "seed": ckpt.config.seed,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "adam": {"lr": ckpt.adam.lr, "beta1": ckpt.adam.beta1, "beta2": ckpt.adam.beta2,
                 "eps": ckpt.adam.eps, "step": ckpt.adam.step},
        "rng_state": ckpt.rng_state,
        "entries": table,
        "blob_bytes": offset,
    }
    atomic_write_bytes(root / BLOB, b"".join(blobs))
    atomic_write_json(root / MANIFEST, manifest)


def load_checkpoint(path, expect: RunConfig | None = None) -> Checkpoint:
    root = Path(path)
    manifest = json.loads((root / MANIFEST).read_text())
    blob = (root / BLOB).read_bytes()
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointCorruption(
            f"{root}: blob has {len(blob)} bytes, manifest says {manifest['blob_bytes']}"
        )
    config = RunConfig.from_dict(manifest["config"])
    params = Params(np.float32)
    adam = AdamState(**manifest["adam"])
    for e in manifest["entries"]:
        n_expected = int(np.prod(e["shape"], dtype=np.int64)) * 4
        if e["length"] != n_expected or e["offset"] + e["length"] > len(blob):
            raise CheckpointCorruption(f"{root}: entry {e['name']!r} has inconsistent extent")
        arr = np.frombuffer(blob, dtype="<f4", count=e["length"] // 4, offset=e["offset"])
        arr = arr.reshape(e["shape"]).astype(np.float32)
        name = e["name"]
        if name.startswith("adam.m/"):
            adam.m[name[7:]] = arr
        elif name.startswith("adam.v/"):
            adam.v[name[7:]] = arr
        else:
            params.add(name, arr)
    model_cfg = (expect or config).model
    try:
        check_params(params, model_cfg)
    except ShapeError as exc:
        raise ShapeError(f"{root}: {exc}") from None
    return Checkpoint(config, params, adam, manifest["rng_state"], manifest["epoch"],
                      manifest.get("step", 0))

"""``.lhmp`` sequence container and dataset manifest.

Little-endian layout::

    b"LHMP" | u32 version=1 | f32 fps | u32 frame_count
    per frame: u32 n | n*3 f32 xyz | n u8 labels | 72 f32 joints
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .sim import N_JOINTS, ScanFrame

MAGIC = b"LHMP"
VERSION = 1
MANIFEST = "manifest.json"
_HEADER = struct.Struct("<4sIfI")


class FormatError(ValueError):
    pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | os.PathLike, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def encode_sequence(frames: list[ScanFrame], fps: float) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, fps, len(frames))]
    for f in frames:
        n = len(f.points)
        parts.append(struct.pack("<I", n))
        parts.append(np.asarray(f.points, dtype="<f4").reshape(n, 3).tobytes())
        parts.append(np.asarray(f.labels, dtype=np.uint8).reshape(n).tobytes())
        parts.append(np.asarray(f.gt_joints, dtype="<f4").reshape(N_JOINTS * 3).tobytes())
    return b"".join(parts)


def write_sequence(path, frames: list[ScanFrame], fps: float) -> None:
    atomic_write_bytes(path, encode_sequence(frames, fps))


def decode_sequence(buf: bytes, source: str = "<bytes>") -> tuple[float, list[ScanFrame]]:
    if len(buf) < _HEADER.size:
        raise FormatError(f"{source}: truncated header at byte 0 ({len(buf)} bytes)")
    magic, version, fps, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version} at byte 4")
    off = _HEADER.size
    frames = []
    for i in range(count):
        if off + 4 > len(buf):
            raise FormatError(f"{source}: truncated frame {i} header at byte {off}")
        (n,) = struct.unpack_from("<I", buf, off)
        need = 4 + 12 * n + n + 4 * N_JOINTS * 3
        if off + need > len(buf):
            raise FormatError(f"{source}: truncated frame {i} at byte {off} (needs {need} bytes)")
        p = off + 4
        pts = np.frombuffer(buf, dtype="<f4", count=3 * n, offset=p).reshape(n, 3).astype(np.float32)
        p += 12 * n
        lab = np.frombuffer(buf, dtype=np.uint8, count=n, offset=p).copy()
        p += n
        joints = np.frombuffer(buf, dtype="<f4", count=N_JOINTS * 3, offset=p).reshape(N_JOINTS, 3)
        frames.append(ScanFrame(pts, lab, joints.astype(np.float32), timestamp=i / fps))
        off += need
    if off != len(buf):
        raise FormatError(f"{source}: {len(buf) - off} trailing bytes at byte {off}")
    return float(fps), frames


def read_sequence(path) -> tuple[float, list[ScanFrame]]:
    return decode_sequence(Path(path).read_bytes(), str(path))


def read_manifest(root) -> dict:
    path = Path(root) / MANIFEST
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None

"""Synthetic LiDAR scans of a capsule-skinned 24-joint humanoid.

Coordinates are meters, z up. The rig faces +y in its local frame. Beam
direction for azimuth theta and elevation phi is
``[cos(phi) sin(theta), cos(phi) cos(theta), sin(phi)]`` and a ray hits a
triangle plane at ``c + d * n.(q - c) / n.d``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .pcops import K_PARTS, NOISE

N_JOINTS = 24

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)
PARENTS = np.array([-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21])

PART_NAMES = (
    "head", "left_arm", "right_arm", "upper_body", "lower_body",
    "upper_left_leg", "upper_right_leg", "lower_left_leg", "lower_right_leg",
)
HEAD, L_ARM, R_ARM, UPPER, LOWER, UL_LEG, UR_LEG, LL_LEG, LR_LEG = range(K_PARTS)

_REST = np.array([
    [0.00, 0.00, 0.95], [0.09, 0.00, 0.87], [-0.09, 0.00, 0.87], [0.00, 0.00, 1.05],
    [0.10, 0.00, 0.50], [-0.10, 0.00, 0.50], [0.00, 0.00, 1.18], [0.10, -0.02, 0.08],
    [-0.10, -0.02, 0.08], [0.00, 0.00, 1.30], [0.10, 0.12, 0.03], [-0.10, 0.12, 0.03],
    [0.00, 0.00, 1.50], [0.07, 0.00, 1.43], [-0.07, 0.00, 1.43], [0.00, 0.02, 1.62],
    [0.18, 0.00, 1.42], [-0.18, 0.00, 1.42], [0.22, 0.00, 1.14], [-0.22, 0.00, 1.14],
    [0.24, 0.02, 0.88], [-0.24, 0.02, 0.88], [0.25, 0.03, 0.80], [-0.25, 0.03, 0.80],
])

# indexed by child joint; entry 0 unused (root has no bone)
_BONE_RADIUS = np.array([
    0.0, 0.08, 0.08, 0.13, 0.075, 0.075, 0.14, 0.055, 0.055, 0.15, 0.045, 0.045,
    0.06, 0.06, 0.06, 0.10, 0.06, 0.06, 0.045, 0.045, 0.038, 0.038, 0.035, 0.035,
])
_BONE_PART = np.array([
    -1, LOWER, LOWER, LOWER, UL_LEG, UR_LEG, UPPER, LL_LEG, LR_LEG, UPPER, LL_LEG, LR_LEG,
    UPPER, UPPER, UPPER, HEAD, L_ARM, R_ARM, L_ARM, R_ARM, L_ARM, R_ARM, L_ARM, R_ARM,
])


class ConfigurationError(ValueError):
    pass


class DegenerateBoneError(ValueError):
    pass


class AugmentationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HumanoidRig:
    joints: np.ndarray  # (24, 3) rest pose
    parent: np.ndarray  # (24,), root = -1
    bone_radius: np.ndarray  # (24,) by child joint
    part_of_bone: np.ndarray  # (24,) by child joint

    @property
    def bones(self) -> list[tuple[int, int]]:
        return [(int(self.parent[j]), j) for j in range(len(self.parent)) if self.parent[j] >= 0]

    def validate(self) -> None:
        roots = np.flatnonzero(self.parent < 0)
        if len(roots) != 1:
            raise ConfigurationError(f"rig needs exactly one root, found {len(roots)}")
        for j in range(len(self.parent)):
            seen, k = set(), j
            while k >= 0:
                if k in seen:
                    raise ConfigurationError(f"kinematic cycle through joint {j}")
                seen.add(k)
                k = int(self.parent[k])
        for _, c in self.bones:
            if not 0 <= self.part_of_bone[c] < K_PARTS:
                raise ConfigurationError(f"bone ending at joint {c} has no part label")


def default_rig() -> HumanoidRig:
    return HumanoidRig(_REST.copy(), PARENTS.copy(), _BONE_RADIUS.copy(), _BONE_PART.copy())


@dataclass
class LabeledMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (F, 3) int
    tri_part: np.ndarray  # (F,) uint8
    tri_normal: np.ndarray  # (F, 3) unit
    tri_bone: np.ndarray | None = None  # (F,) child joint of the source bone


@dataclass(frozen=True)
class ScanConfig:
    center: tuple[float, float, float] = (0.0, 0.0, 2.0)
    n_azimuth: int = 1024
    n_elevation: int = 64
    elevation_range: tuple[float, float] = (-0.35, 0.12)
    max_range: float = 120.0
    distance: float = 10.0

    def validate(self) -> None:
        if self.n_azimuth < 1 or self.n_elevation < 1:
            raise ConfigurationError("beam grid needs at least one row and one column")
        lo, hi = self.elevation_range
        if not lo < hi and self.n_elevation > 1:
            raise ConfigurationError(f"elevation_range {self.elevation_range} must increase")
        if self.distance <= 0:
            raise ConfigurationError("distance must be positive")

    @classmethod
    def paper(cls, **kw) -> "ScanConfig":
        return cls(n_azimuth=2048, n_elevation=128, **kw)

    def azimuths(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_azimuth) / self.n_azimuth

    def elevations(self) -> np.ndarray:
        lo, hi = self.elevation_range
        if self.n_elevation == 1:
            return np.array([0.5 * (lo + hi)])
        return np.linspace(lo, hi, self.n_elevation)


@dataclass
class ScanFrame:
    points: np.ndarray  # (M, 3)
    labels: np.ndarray  # (M,) uint8
    gt_joints: np.ndarray  # (24, 3)
    timestamp: float = 0.0
    tri_index: np.ndarray | None = None  # hit triangle per point (sim only, not serialized)
    flags: dict = field(default_factory=dict)

    def copy(self) -> "ScanFrame":
        return ScanFrame(self.points.copy(), self.labels.copy(), self.gt_joints.copy(),
                         self.timestamp, None if self.tri_index is None else self.tri_index.copy(),
                         dict(self.flags))


def beam_direction(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    return np.stack([np.cos(phi) * np.sin(theta), np.cos(phi) * np.cos(theta), np.sin(phi)], axis=-1)


# -- motion ---------------------------------------------------------------
MOTION_KINDS = ("walk", "squat", "arm_raise", "turn", "still")


def _rot(axis: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def forward_kinematics(rig: HumanoidRig, local_rot: np.ndarray, root_trans: np.ndarray) -> np.ndarray:
    """Joint positions for per-joint local rotations (24, 3, 3)."""
    glob = np.empty((N_JOINTS, 3, 3))
    pos = np.empty((N_JOINTS, 3))
    for j in range(N_JOINTS):
        p = rig.parent[j]
        if p < 0:
            glob[j] = local_rot[j]
            pos[j] = rig.joints[j] + root_trans
        else:
            glob[j] = glob[p] @ local_rot[j]
            pos[j] = pos[p] + glob[p] @ (rig.joints[j] - rig.joints[p])
    return pos


def make_motion(kind: str, n_frames: int, fps: float = 10.0, seed: int = 0,
                rig: HumanoidRig | None = None) -> np.ndarray:
    """(n_frames, 24, 3) joint trajectory in the rig's local frame."""
    if kind not in MOTION_KINDS:
        raise ConfigurationError(f"unknown motion kind {kind!r}; expected one of {MOTION_KINDS}")
    if n_frames < 1 or fps <= 0:
        raise ConfigurationError("need n_frames >= 1 and fps > 0")
    rig = rig or default_rig()
    if kind == "still":
        return np.repeat(rig.joints[None], n_frames, axis=0).copy()

    rng = np.random.default_rng([seed, MOTION_KINDS.index(kind)])
    amp = rng.uniform(0.85, 1.1)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    out = np.empty((n_frames, N_JOINTS, 3))
    eye = np.broadcast_to(np.eye(3), (N_JOINTS, 3, 3))
    for i in range(n_frames):
        t = i / fps
        rot = eye.copy()
        trans = np.zeros(3)
        if kind == "walk":
            speed = 0.75 * amp
            w = 2.0 * np.pi * 0.8 * t + phase
            swing = 0.3 * amp * math.sin(w)
            rot[1] = _rot("x", swing)
            rot[2] = _rot("x", -swing)
            rot[4] = _rot("x", -0.35 * amp * max(0.0, math.sin(w + 1.2)))
            rot[5] = _rot("x", -0.35 * amp * max(0.0, math.sin(w + 1.2 + np.pi)))
            rot[16] = _rot("x", -0.25 * amp * math.sin(w))
            rot[17] = _rot("x", 0.25 * amp * math.sin(w))
            rot[18] = _rot("x", 0.2)
            rot[19] = _rot("x", 0.2)
            trans = np.array([0.0, speed * t, 0.02 * math.sin(2 * w)])
        elif kind == "squat":
            s = 0.5 * (1.0 - math.cos(2.0 * np.pi * t / 2.5 + phase))
            bend = 1.0 * amp * s
            rot[1] = _rot("x", bend)
            rot[2] = _rot("x", bend)
            rot[4] = _rot("x", -2.0 * bend)
            rot[5] = _rot("x", -2.0 * bend)
            rot[7] = _rot("x", bend)
            rot[8] = _rot("x", bend)
            rot[16] = _rot("x", 0.8 * bend)
            rot[17] = _rot("x", 0.8 * bend)
            trans = np.array([0.0, 0.0, -0.87 * (1.0 - math.cos(bend))])
        elif kind == "arm_raise":
            w = 2.0 * np.pi * t / 3.0 + phase
            up_l = 1.3 * amp * 0.5 * (1.0 - math.cos(w))
            up_r = 1.3 * amp * 0.5 * (1.0 - math.cos(w + np.pi / 2))
            rot[16] = _rot("y", -up_l)
            rot[17] = _rot("y", up_r)
            rot[18] = _rot("y", -0.3 * up_l)
            rot[19] = _rot("y", 0.3 * up_r)
        elif kind == "turn":
            rot[0] = _rot("z", 0.6 * amp * t + phase)
            w = 2.0 * np.pi * 0.5 * t
            rot[16] = _rot("x", -0.15 * math.sin(w))
            rot[17] = _rot("x", 0.15 * math.sin(w))
        out[i] = forward_kinematics(rig, rot, trans)
    return out


def place(joints: np.ndarray, distance: float, azimuth: float, heading: float) -> np.ndarray:
    """Rotate local joints by ``heading`` about z and move them to ``distance``
    along ``azimuth`` (horizontal plane, ground at z=0)."""
    r = _rot("z", heading)
    offset = np.array([distance * math.sin(azimuth), distance * math.cos(azimuth), 0.0])
    return joints @ r.T + offset


# -- skinning -------------------------------------------------------------
def capsule_triangle_count(segments: int) -> int:
    """Triangles per capsule: two pole fans plus the ring strips (4 * s * n_cap)."""
    return 4 * segments * _cap_rings(segments)


def _cap_rings(segments: int) -> int:
    return max(2, segments // 4)


def _capsule(a: np.ndarray, b: np.ndarray, r: float, segments: int) -> tuple[np.ndarray, np.ndarray]:
    axis = b - a
    length = float(np.linalg.norm(axis))
    w = axis / length
    helper = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(w, helper)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    n_cap = _cap_rings(segments)
    ang = 2.0 * np.pi * np.arange(segments) / segments
    circle = np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v

    rings = []
    for k in range(1, n_cap + 1):  # bottom hemisphere up to the equator at a
        alpha = 0.5 * np.pi * k / n_cap
        rings.append(a - r * math.cos(alpha) * w + r * math.sin(alpha) * circle)
    for k in range(n_cap):  # top hemisphere from the equator at b
        beta = 0.5 * np.pi * (1.0 - k / n_cap)
        rings.append(b + r * math.cos(beta) * w + r * math.sin(beta) * circle)
    verts = np.concatenate([(a - r * w)[None], *rings, (b + r * w)[None]])
    n_ring = len(rings)
    top = len(verts) - 1

    def ring_idx(ri, i):
        return 1 + ri * segments + (i % segments)

    tris = []
    for i in range(segments):
        tris.append((0, ring_idx(0, i + 1), ring_idx(0, i)))
    for ri in range(n_ring - 1):
        for i in range(segments):
            a0, a1 = ring_idx(ri, i), ring_idx(ri, i + 1)
            b0, b1 = ring_idx(ri + 1, i), ring_idx(ri + 1, i + 1)
            tris.append((a0, a1, b1))
            tris.append((a0, b1, b0))
    for i in range(segments):
        tris.append((top, ring_idx(n_ring - 1, i), ring_idx(n_ring - 1, i + 1)))
    return verts, np.array(tris, dtype=np.int64)


def _closest_on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return a + t[..., None] * ab


def skin_rig(rig: HumanoidRig, pose: np.ndarray, segments_per_capsule: int = 8) -> LabeledMesh:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (N_JOINTS, 3):
        raise ConfigurationError(f"pose must be (24, 3), got {pose.shape}")
    all_v, all_t, part, bone = [], [], [], []
    offset = 0
    for p, c in rig.bones:
        a, b = pose[p], pose[c]
        if np.linalg.norm(b - a) < 1e-6:
            raise DegenerateBoneError(f"bone {JOINT_NAMES[p]} -> {JOINT_NAMES[c]} has zero length")
        v, t = _capsule(a, b, float(rig.bone_radius[c]), segments_per_capsule)
        all_v.append(v)
        all_t.append(t + offset)
        offset += len(v)
        part.extend([rig.part_of_bone[c]] * len(t))
        bone.extend([c] * len(t))
    verts = np.concatenate(all_v)
    tris = np.concatenate(all_t)
    tri_bone = np.array(bone)

    q0, q1, q2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    n = np.cross(q1 - q0, q2 - q0)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    centroid = (q0 + q1 + q2) / 3.0
    pa = pose[rig.parent[tri_bone]]
    pb = pose[tri_bone]
    ab = pb - pa
    tt = np.clip(((centroid - pa) * ab).sum(1) / (ab * ab).sum(1), 0.0, 1.0)
    outward = centroid - (pa + tt[:, None] * ab)
    flip = (n * outward).sum(1) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    n[flip] *= -1.0
    return LabeledMesh(verts, tris, np.array(part, dtype=np.uint8), n, tri_bone)


# -- ray casting ----------------------------------------------------------
_BARY_TOL = 1e-12
_PARALLEL_TOL = 1e-12


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _candidate_beams(mesh: LabeledMesh, cfg: ScanConfig) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth and elevation indices whose beams may reach the mesh."""
    az = cfg.azimuths()
    el = cfg.elevations()
    c = np.asarray(cfg.center, dtype=np.float64)
    rel = mesh.vertices - c
    dist = np.linalg.norm(rel, axis=1)
    horiz = np.linalg.norm(rel[:, :2], axis=1)
    tri = mesh.triangles
    edges = np.concatenate([
        np.linalg.norm(mesh.vertices[tri[:, i]] - mesh.vertices[tri[:, (i + 1) % 3]], axis=1)
        for i in range(3)
    ])
    all_idx = (np.arange(len(az)), np.arange(len(el)))
    if dist.min() <= 0 or horiz.min() <= 0:
        return all_idx
    # points inside a triangle can deviate from its vertices' angles by at most ~edge/dist
    margin = 2.0 * edges.max() / min(dist.min(), horiz.min()) + 1e-6
    if margin > 0.5:
        return all_idx
    theta = np.arctan2(rel[:, 0], rel[:, 1])
    phi = np.arcsin(np.clip(rel[:, 2] / dist, -1.0, 1.0))
    theta0 = math.atan2(rel[:, 0].mean(), rel[:, 1].mean())
    dth = _wrap(theta - theta0)
    if dth.max() - dth.min() > np.pi:
        return all_idx
    az_rel = _wrap(az - theta0)
    ai = np.flatnonzero((az_rel >= dth.min() - margin) & (az_rel <= dth.max() + margin))
    ei = np.flatnonzero((el >= phi.min() - margin) & (el <= phi.max() + margin))
    return ai, ei


def intersect_beams(mesh: LabeledMesh, origin: np.ndarray, dirs: np.ndarray,
                    max_range: float, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Nearest triangle hit per beam: (ranges with inf for misses, triangle index or -1)."""
    q0 = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - q0
    e2 = mesh.vertices[mesh.triangles[:, 2]] - q0
    n = mesh.tri_normal
    num = ((q0 - origin) * n).sum(1)  # n.(q - c)
    d00 = (e1 * e1).sum(1)
    d01 = (e1 * e2).sum(1)
    d11 = (e2 * e2).sum(1)
    inv_den = 1.0 / (d00 * d11 - d01 * d01)
    oq = origin - q0  # (F, 3)

    best_t = np.full(len(dirs), np.inf)
    best_i = np.full(len(dirs), -1, dtype=np.int64)
    for s in range(0, len(dirs), chunk):
        d = dirs[s:s + chunk]
        nd = d @ n.T  # (B, F)
        ok = np.abs(nd) > _PARALLEL_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(ok, num / np.where(ok, nd, 1.0), np.inf)
        ok &= (t > 0) & (t <= max_range)
        t = np.where(ok, t, 0.0)
        # p - q0 = (c - q0) + t d
        d20 = (oq * e1).sum(1) + t * (d @ e1.T)
        d21 = (oq * e2).sum(1) + t * (d @ e2.T)
        u = (d11 * d20 - d01 * d21) * inv_den
        v = (d00 * d21 - d01 * d20) * inv_den
        ok &= (u >= -_BARY_TOL) & (v >= -_BARY_TOL) & (u + v <= 1.0 + _BARY_TOL)
        t = np.where(ok, t, np.inf)
        idx = np.argmin(t, axis=1)  # lowest index wins ties
        tb = t[np.arange(len(d)), idx]
        best_t[s:s + chunk] = tb
        best_i[s:s + chunk] = np.where(np.isfinite(tb), idx, -1)
    return best_t, best_i


def ray_cast(mesh: LabeledMesh, cfg: ScanConfig, gt_joints: np.ndarray | None = None,
             timestamp: float = 0.0) -> ScanFrame:
    """Scan ``mesh`` with the spherical beam grid; points ordered azimuth-major."""
    cfg.validate()
    if len(mesh.triangles) == 0:
        raise ConfigurationError("ray_cast needs a nonempty mesh")
    c = np.asarray(cfg.center, dtype=np.float64)
    ai, ei = _candidate_beams(mesh, cfg)
    theta = cfg.azimuths()[ai]
    phi = cfg.elevations()[ei]
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dirs = beam_direction(tt.reshape(-1), pp.reshape(-1))
    t, tri = intersect_beams(mesh, c, dirs, cfg.max_range)
    hit = tri >= 0
    points = c + t[hit, None] * dirs[hit]
    joints = np.zeros((N_JOINTS, 3)) if gt_joints is None else np.asarray(gt_joints, dtype=np.float64)
    return ScanFrame(points, mesh.tri_part[tri[hit]].astype(np.uint8), joints, timestamp,
                     tri_index=tri[hit])


# -- augmentation ---------------------------------------------------------
def inject_noise(frame: ScanFrame, n_noise: int, radius: float = 0.3, seed=0) -> ScanFrame:
    """Append ``n_noise`` NOISE points uniform in the shell between the points'
    bounding box and that box grown by ``radius``."""
    if radius <= 0:
        raise ConfigurationError("noise radius must be positive")
    out = frame.copy()
    if len(frame.points) == 0:
        warnings.warn("inject_noise: empty frame left unchanged", AugmentationWarning, stacklevel=2)
        out.flags["noise_skipped"] = True
        return out
    if n_noise == 0:
        return out
    rng = np.random.default_rng(seed)
    body = frame.points[frame.labels != NOISE] if np.any(frame.labels != NOISE) else frame.points
    lo, hi = body.min(0), body.max(0)
    glo, ghi = lo - radius, hi + radius
    picked = []
    while len(picked) < n_noise:
        cand = rng.uniform(glo, ghi, size=(4 * n_noise, 3))
        inside = np.all((cand >= lo) & (cand <= hi), axis=1)
        picked.extend(cand[~inside])
    noise = np.array(picked[:n_noise])
    out.points = np.concatenate([frame.points, noise])
    out.labels = np.concatenate([frame.labels, np.full(n_noise, NOISE, dtype=np.uint8)])
    if frame.tri_index is not None:
        out.tri_index = np.concatenate([frame.tri_index, np.full(n_noise, -1)])
    return out


def occlusion_cube(frame: ScanFrame, seed) -> np.ndarray | None:
    """Center of the occluding cube: a random non-noise point."""
    body = np.flatnonzero(frame.labels != NOISE)
    if len(body) == 0:
        return None
    rng = np.random.default_rng(seed)
    return frame.points[body[rng.integers(len(body))]].copy()


def inject_occlusion(frame: ScanFrame, cube_side: float = 0.4, seed=0) -> ScanFrame:
    """Drop every point within the closed axis-aligned cube around a random body point."""
    if cube_side <= 0:
        raise ConfigurationError("cube_side must be positive")
    out = frame.copy()
    center = occlusion_cube(frame, seed)
    if center is None:
        return out
    keep = ~np.all(np.abs(frame.points - center) <= 0.5 * cube_side, axis=1)
    out.points = frame.points[keep]
    out.labels = frame.labels[keep]
    if frame.tri_index is not None:
        out.tri_index = frame.tri_index[keep]
    out.flags["occlusion_center"] = center.tolist()
    return out


def n_augmented(ratio: float, n_frames: int) -> int:
    """ceil(ratio * n_frames), robust to float round-off (0.7 * 10 -> 7)."""
    return int(math.ceil(round(ratio * n_frames, 9)))

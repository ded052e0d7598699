"""Slow, obviously-correct reference implementations used only by tests."""
from __future__ import annotations

import math

import numpy as np


def chamfer_loops(a, b) -> float:
    a = [np.asarray(p, dtype=float) for p in a]
    b = [np.asarray(p, dtype=float) for p in b]

    def one_way(x, y):
        total = 0.0
        for p in x:
            total += min(float(((p - q) ** 2).sum()) for q in y)
        return total / len(x)

    return one_way(a, b) + one_way(b, a)


def mpjpe_loops(pred, gt) -> list[float]:
    out = []
    for P, G in zip(pred, gt):
        s = sum(math.sqrt(sum((p[i] - g[i]) ** 2 for i in range(3))) for p, g in zip(P, G))
        out.append(1000.0 * s / len(P))
    return out


def min_mpjpe_loops(hyps, gt) -> float:
    return min(sum(mpjpe_loops(h, gt)) / len(gt) for h in hyps)


def fps_loops(points, n):
    pts = [tuple(map(float, p)) for p in points]
    m = len(pts)
    c = [sum(p[i] for p in pts) / m for i in range(3)]

    def d2(p, q):
        return sum((p[i] - q[i]) ** 2 for i in range(3))

    best, start = -1.0, 0
    for i, p in enumerate(pts):
        if d2(p, c) > best:
            best, start = d2(p, c), i
    chosen = [start]
    while len(chosen) < min(n, m):
        far, pick = -1.0, 0
        for i, p in enumerate(pts):
            dmin = min(d2(p, pts[j]) for j in chosen)
            if dmin > far:
                far, pick = dmin, i
        chosen.append(pick)
    return chosen + [0] * (n - len(chosen))


def moller_trumbore(origin, direction, v0, v1, v2, eps=1e-12):
    """Hit distance or None (the textbook algorithm, one triangle)."""
    e1, e2 = v1 - v0, v2 - v0
    h = np.cross(direction, e2)
    a = float(e1 @ h)
    if abs(a) < eps:
        return None
    f = 1.0 / a
    s = origin - v0
    u = f * float(s @ h)
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(s, e1)
    v = f * float(direction @ q)
    if v < 0.0 or u + v > 1.0:
        return None
    t = f * float(e2 @ q)
    return t if t > 0 else None


def cast_all_triangles(vertices, triangles, origin, dirs, max_range):
    """Nearest hit per beam testing every triangle. Returns (t, tri) like the simulator."""
    origin = np.asarray(origin, dtype=float)
    ts = np.full(len(dirs), np.inf)
    idx = np.full(len(dirs), -1)
    # vectorized over triangles, looped over beams
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    s = origin - v0
    q = np.cross(s, e1)
    for b, d in enumerate(dirs):
        h = np.cross(d, e2)
        a = (e1 * h).sum(1)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = 1.0 / a
            u = f * (s * h).sum(1)
            v = f * (q @ d)
            t = f * (e2 * q).sum(1)
        ok = (np.abs(a) > 1e-12) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0) & (t <= max_range)
        if ok.any():
            cand = np.where(ok, t, np.inf)
            j = int(np.argmin(cand))
            ts[b], idx[b] = cand[j], j
    return ts, idx

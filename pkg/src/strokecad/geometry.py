"""Small geometric helpers shared across the package.

Everything here is pure numpy on float64 arrays; nothing mutates its inputs.
"""

from __future__ import annotations

import numpy as np

EPS_PLANE = 1e-9  # plane-side tolerance, model units


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize a vector; raises on near-zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero vector")
    return v / n


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal (u, v) spanning the plane orthogonal to `normal`."""
    n = unit(normal)
    seed = np.array([1.0, 0.0, 0.0]) if abs(n[0]) <= abs(n[1]) and abs(n[0]) <= abs(n[2]) else (
        np.array([0.0, 1.0, 0.0]) if abs(n[1]) <= abs(n[2]) else np.array([0.0, 0.0, 1.0]))
    u = unit(np.cross(n, seed))
    v = np.cross(n, u)
    return u, v


def polygon_area_2d(pts: np.ndarray) -> float:
    """Signed area of a 2D polygon (positive = counter-clockwise)."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polyline_length(pts: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def sample_polyline(pts: np.ndarray, n: int) -> np.ndarray:
    """n points uniformly spaced by arc length along a polyline (2D or 3D)."""
    pts = np.asarray(pts, dtype=np.float64)
    if len(pts) < 2:
        return np.repeat(pts, n, axis=0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total < 1e-15:
        return np.repeat(pts[:1], n, axis=0)
    t = np.linspace(0.0, total, n)
    out = np.empty((n, pts.shape[1]))
    for k in range(pts.shape[1]):
        out[:, k] = np.interp(t, s, pts[:, k])
    return out


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Distance from point p to segment ab (any dimension)."""
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < 1e-30:
        return float(np.linalg.norm(p - a))
    t = np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def points_segments_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Min distance from each point to any of the segments (a[i], b[i]). Vectorized."""
    points = np.asarray(points, dtype=np.float64)
    ab = b - a                                        # (m, d)
    denom = np.einsum("md,md->m", ab, ab)
    denom = np.where(denom < 1e-30, 1.0, denom)
    ap = points[:, None, :] - a[None, :, :]           # (n, m, d)
    t = np.clip(np.einsum("nmd,md->nm", ap, ab) / denom[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return d.min(axis=1)


def simplify_collinear(loop: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop vertices of a closed loop lying within `tol` of the segment joining
    their neighbours. Repeats until stable; never drops below 3 vertices."""
    pts = np.asarray(loop, dtype=np.float64)
    changed = True
    while changed and len(pts) > 3:
        a = np.roll(pts, 1, axis=0)
        b = np.roll(pts, -1, axis=0)
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom = np.where(denom < 1e-30, 1.0, denom)
        t = np.clip(np.einsum("ij,ij->i", pts - a, ab) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = np.einsum("ij,ij->i", pts - closest, pts - closest)
        dl = (d2 < tol * tol).tolist()
        # never drop two adjacent vertices in one pass
        keep = np.ones(len(pts), dtype=bool)
        prev_dropped = False
        for i in range(len(pts)):
            if dl[i] and not prev_dropped:
                keep[i] = False
                prev_dropped = True
            else:
                prev_dropped = False
        changed = not keep.all()
        if changed:
            pts = pts[keep]
            if len(pts) < 3:
                break
    return pts


def ear_clip(poly: np.ndarray) -> np.ndarray:
    """Triangulate a simple 2D polygon by ear clipping.

    Returns (k, 3) index triples into `poly`. Winding may be CW or CCW;
    output triangles follow the input winding.
    """
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    if n < 3:
        return np.zeros((0, 3), dtype=np.int32)
    reversed_input = polygon_area_2d(poly) < 0.0
    idx = list(range(n))[::-1] if reversed_input else list(range(n))
    tris = []
    scale = max(poly.max(axis=0) - poly.min(axis=0)) or 1.0
    area_eps = 1e-14 * scale * scale
    guard = 0
    while len(idx) > 3 and guard < 4 * n * n:
        guard += 1
        clipped = False
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[(k - 1) % m], idx[k], idx[(k + 1) % m]
            a, b, c = poly[i0], poly[i1], poly[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= area_eps:
                continue
            # no other polygon vertex may fall inside the candidate ear
            ok = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                d0 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                d1 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
                d2 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
                if d0 >= -area_eps and d1 >= -area_eps and d2 >= -area_eps:
                    ok = False
                    break
            if ok:
                tris.append((i0, i1, i2))
                del idx[k]
                clipped = True
                break
        if not clipped:
            # fall back to fanning the remainder (degenerate input)
            break
    if len(idx) >= 3:
        for k in range(1, len(idx) - 1):
            tris.append((idx[0], idx[k], idx[k + 1]))
    tris = np.asarray(tris, dtype=np.int32)
    if reversed_input:
        tris = tris[:, ::-1]
    return tris


def cubic_bezier(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate a cubic Bezier with control points ctrl (4, d) at parameters t."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    u = 1.0 - t
    return (u ** 3) * ctrl[0] + 3.0 * (u ** 2) * t * ctrl[1] + 3.0 * u * (t ** 2) * ctrl[2] + (t ** 3) * ctrl[3]


def cubic_bezier_basis(t: np.ndarray) -> np.ndarray:
    """Bernstein basis matrix (n, 4) for cubic Beziers."""
    t = np.asarray(t, dtype=np.float64)
    u = 1.0 - t
    return np.stack([u ** 3, 3.0 * u ** 2 * t, 3.0 * u * t ** 2, t ** 3], axis=1)


def reflect_points(points: np.ndarray, plane_point: np.ndarray, plane_normal: np.ndarray) -> np.ndarray:
    """Mirror points across the plane through `plane_point` with `plane_normal`."""
    n = unit(plane_normal)
    d = (np.asarray(points) - plane_point) @ n
    return points - 2.0 * d[:, None] * n[None, :]


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    a = unit(axis)
    c, s = np.cos(angle), np.sin(angle)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return c * np.eye(3) + s * K + (1 - c) * np.outer(a, a)

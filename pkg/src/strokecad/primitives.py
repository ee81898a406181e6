"""Builders for the primitive solids the operators boolean against a model."""

from __future__ import annotations

import numpy as np

from .geometry import cubic_bezier, ear_clip, plane_basis, unit
from .mesh import MeshError, SolidModel, signed_volume

SWEEP_SEGMENTS = 64      # segments around the revolution axis
SWEEP_PROFILE_SAMPLES = 32
BEVEL_PROFILE_SEGMENTS = 16


def unit_box() -> SolidModel:
    """Axis-aligned box centered at the origin with unit bounding-box diagonal."""
    e = 1.0 / np.sqrt(3.0) / 2.0
    v = np.array([[sx, sy, sz] for sx in (-e, e) for sy in (-e, e) for sz in (-e, e)])
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),   # x- x+
        (0, 4, 5, 1), (2, 3, 7, 6),   # y- y+
        (0, 2, 6, 4), (1, 5, 7, 3),   # z- z+
    ]
    tris = []
    for a, b, c, d in quads:
        tris += [[a, b, c], [a, c, d]]
    m = SolidModel(v, np.array(tris, dtype=np.int32))
    if m.volume() < 0:
        raise MeshError("unit box built inside-out")
    return m


def _oriented(verts: np.ndarray, tris: np.ndarray) -> SolidModel:
    if signed_volume(verts, tris) < 0:
        tris = tris[:, ::-1]
    return SolidModel(verts, tris)


def prism(base_polygon: np.ndarray, direction: np.ndarray, length: float) -> SolidModel:
    """Right prism over a simple 3D polygon, extruded `length` along `direction`."""
    base = np.asarray(base_polygon, dtype=np.float64)
    if len(base) < 3:
        raise ValueError("prism base needs at least 3 vertices")
    d = unit(direction) * float(length)
    n = len(base)
    verts = np.concatenate([base, base + d])
    u, v = plane_basis(np.cross(base[1] - base[0], base[2] - base[0]))
    poly2 = np.stack([base @ u, base @ v], axis=1)
    cap = ear_clip(poly2)
    tris = []
    for a, b, c in cap:
        tris.append([b, a, c])            # bottom, reversed
        tris.append([n + a, n + b, n + c])  # top
    for i in range(n):
        j = (i + 1) % n
        tris += [[i, j, n + j], [i, n + j, n + i]]
    return _oriented(verts, np.array(tris, dtype=np.int64))


def prism_from_face(face, direction: np.ndarray, length: float, model: SolidModel) -> SolidModel:
    """Prism whose caps copy a planar face's own triangulation (handles holes)."""
    d = unit(direction) * float(length)
    tri_ids = face.triangle_ids
    tris = model.triangles[tri_ids]
    used = np.unique(tris)
    lookup = np.full(len(model.vertices), -1, dtype=np.int64)
    lookup[used] = np.arange(len(used))
    base_v = model.vertices[used]
    cap = lookup[tris]
    n = len(base_v)
    verts = np.concatenate([base_v, base_v + d])
    out = []
    for a, b, c in cap:
        out.append([b, a, c])
        out.append([n + a, n + b, n + c])
    for loop in face.loops:
        ids = []
        for p in loop:
            # map loop points back to welded vertex ids
            i = int(np.argmin(np.einsum("ij,ij->i", base_v - p, base_v - p)))
            ids.append(i)
        k = len(ids)
        for i in range(k):
            j = (i + 1) % k
            if ids[i] == ids[j]:
                continue
            out.append([ids[i], ids[j], n + ids[j]])
            out.append([ids[i], n + ids[j], n + ids[i]])
    return _oriented(verts, np.array(out, dtype=np.int64))


def bevel_prism(corner: np.ndarray, profile_ctrl: np.ndarray, crease_vec: np.ndarray,
                segments: int = BEVEL_PROFILE_SEGMENTS) -> SolidModel:
    """Prism subtracted by a bevel: base region bounded by the profile curve and
    the two segments joining its endpoints to the corner, swept along the crease."""
    t = np.linspace(0.0, 1.0, segments + 1)
    curve = cubic_bezier(np.asarray(profile_ctrl, dtype=np.float64), t)
    base = np.concatenate([curve, np.asarray(corner, dtype=np.float64)[None, :]])
    return prism(base, crease_vec, float(np.linalg.norm(crease_vec)))


def swept_solid(base_center: np.ndarray, base_radius: float, axis: np.ndarray,
                distance: float, offset_radius: float, profile_ctrl: np.ndarray,
                segments: int = SWEEP_SEGMENTS,
                profile_samples: int = SWEEP_PROFILE_SAMPLES) -> SolidModel:
    """Solid of revolution of a profile curve between two parallel circles.

    The profile control points must lie in a plane containing the axis; each
    sample contributes a ring whose radius is the sample's distance to the axis.
    """
    c0 = np.asarray(base_center, dtype=np.float64)
    a = unit(axis)
    ctrl = np.asarray(profile_ctrl, dtype=np.float64)
    t = np.linspace(0.0, 1.0, profile_samples)
    prof = cubic_bezier(ctrl, t)
    h = (prof - c0) @ a
    radial = prof - c0 - h[:, None] * a[None, :]
    r = np.linalg.norm(radial, axis=1)
    if np.any(r < 1e-6):
        raise ValueError("sweep profile touches the rotation axis")
    # clamp the end rings to the stated circles
    r[0], r[-1] = float(base_radius), float(offset_radius)
    h[0], h[-1] = 0.0, float(distance)
    u, v = plane_basis(a)
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    ring_dirs = np.cos(ang)[:, None] * u[None, :] + np.sin(ang)[:, None] * v[None, :]
    verts = (c0[None, None, :] + h[:, None, None] * a[None, None, :]
             + r[:, None, None] * ring_dirs[None, :, :]).reshape(-1, 3)
    nv = profile_samples * segments
    bottom_c, top_c = nv, nv + 1
    verts = np.concatenate([verts, (c0)[None, :], (c0 + distance * a)[None, :]])

    def vid(i, j):
        return i * segments + (j % segments)

    tris = []
    for i in range(profile_samples - 1):
        for j in range(segments):
            a0, a1 = vid(i, j), vid(i, j + 1)
            b0, b1 = vid(i + 1, j), vid(i + 1, j + 1)
            tris += [[a0, a1, b1], [a0, b1, b0]]
    for j in range(segments):
        tris.append([bottom_c, vid(0, j + 1), vid(0, j)])
        tris.append([top_c, vid(profile_samples - 1, j), vid(profile_samples - 1, j + 1)])
    return _oriented(verts, np.array(tris, dtype=np.int64))

"""Snapping, rectification, and symmetry auto-completion for fitted operators.

All functions are pure: they return new operator records (or protocols) and
never mutate their inputs. With the regularizer disabled, operators pass
through bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import reflect_points, unit
from .mesh import PlanarFace, SolidModel
from .operators import (AddSubParams, Operator, SweepParams, face_plane_mapping)
from .protocol import Protocol, ProtocolError, ProtocolStep, execute


@dataclass(frozen=True)
class RegularizerConfig:
    enabled: bool = True
    snap_fraction: float = 0.10     # of the base-face diameter
    parallel_tol_deg: float = 20.0
    corner_tol_deg: float = 20.0
    length_tol: float = 0.20        # of the mean side length


def _face_key_points(face: PlanarFace) -> np.ndarray:
    """Snap targets: corners, edge midpoints, and the face centroid."""
    loop = face.outer_loop
    mids = (loop + np.roll(loop, -1, axis=0)) / 2.0
    return np.concatenate([loop, mids, face.centroid[None, :]])


def _primitive_points(op: Operator) -> np.ndarray | None:
    if isinstance(op, AddSubParams):
        return np.concatenate([op.base_polygon, op.base_polygon.mean(axis=0)[None, :]])
    if isinstance(op, SweepParams):
        return op.base_center[None, :]
    return None


def _translate(op: Operator, delta: np.ndarray) -> Operator:
    if isinstance(op, AddSubParams):
        return replace(op, base_polygon=op.base_polygon + delta)
    if isinstance(op, SweepParams):
        return replace(op, base_center=op.base_center + delta,
                       profile=op.profile + delta)
    return op


def snap(op: Operator, face: PlanarFace, cfg: RegularizerConfig) -> Operator:
    """Translate the primitive so its closest key-point pair coincides.

    At most one snap per invocation: the nearest (primitive point, face key
    point) pair wins when it is within snap_fraction of the face diameter.
    """
    if not cfg.enabled:
        return op
    prim = _primitive_points(op)
    if prim is None:
        return op
    keys = _face_key_points(face)
    d = np.linalg.norm(prim[:, None, :] - keys[None, :, :], axis=2)
    i, j = np.unravel_index(int(d.argmin()), d.shape)
    if d[i, j] <= cfg.snap_fraction * face.diameter():
        return _translate(op, keys[j] - prim[i])
    return op


def _polygon_2d(op: AddSubParams, face: PlanarFace):
    to2d, to3d = face_plane_mapping(face)
    return to2d(op.base_polygon), to3d


def _ensure_ccw(poly: np.ndarray) -> tuple[np.ndarray, bool]:
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    if area < 0:
        return poly[::-1].copy(), True
    return poly, False


def _interior_angles(poly: np.ndarray) -> np.ndarray:
    prev = np.roll(poly, 1, axis=0) - poly
    nxt = np.roll(poly, -1, axis=0) - poly
    ang = []
    for a, b in zip(prev, nxt):
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        c = float(np.clip(np.dot(a, b) / max(na * nb, 1e-18), -1.0, 1.0))
        ang.append(np.degrees(np.arccos(c)))
    return np.asarray(ang)


def _edges_of(poly: np.ndarray) -> np.ndarray:
    return np.roll(poly, -1, axis=0) - poly


def _rebuild_from_lines(midpoints: np.ndarray, directions: np.ndarray) -> np.ndarray | None:
    """Vertices as intersections of consecutive edge lines."""
    n = len(midpoints)
    out = []
    for k in range(n):
        c1, d1 = midpoints[(k - 1) % n], directions[(k - 1) % n]
        c2, d2 = midpoints[k], directions[k]
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(cross) < 1e-9:
            return None
        t1 = ((c2[0] - c1[0]) * d2[1] - (c2[1] - c1[1]) * d2[0]) / cross
        out.append(c1 + t1 * d1)
    return np.asarray(out)


def _parallel_rectify(poly: np.ndarray, face_dirs: list[np.ndarray], tol_deg: float):
    """Align every edge to its nearest base-face edge direction when all are
    within tolerance."""
    edges = _edges_of(poly)
    targets = []
    for e in edges:
        ne = np.linalg.norm(e)
        if ne < 1e-12 or not face_dirs:
            return None
        u = e / ne
        best, best_ang = None, np.inf
        for d in face_dirs:
            ang = np.degrees(np.arccos(np.clip(abs(float(u @ d)), 0.0, 1.0)))
            if ang < best_ang:
                best, best_ang = d, ang
        if best_ang > tol_deg:
            return None
        targets.append(best if float(best @ u) >= 0 else -best)
    mids = poly + edges / 2.0
    return _rebuild_from_lines(mids, np.asarray(targets))


def _equiangular_rebuild(poly: np.ndarray, equal_lengths: bool):
    """Rebuild a CCW polygon with exact interior angles (N-2)*180/N; lengths
    stay least-squares-close to the originals (or all equal) under closure."""
    n = len(poly)
    edges = _edges_of(poly)
    lengths = np.linalg.norm(edges, axis=1)
    headings = np.arctan2(edges[:, 1], edges[:, 0])
    step = 2.0 * np.pi / n
    rel = headings - step * np.arange(n)
    theta0 = float(np.arctan2(np.sin(rel).sum(), np.cos(rel).sum()))
    hs = theta0 + step * np.arange(n)
    u = np.stack([np.cos(hs), np.sin(hs)], axis=1)
    if equal_lengths:
        L = np.full(n, lengths.mean())
        # closure holds exactly for a regular polygon's directions
    else:
        B = u.T  # (2, n)
        L0 = lengths
        correction = B.T @ np.linalg.solve(B @ B.T, B @ L0)
        L = L0 - correction
        if np.any(L <= 1e-9):
            L = np.full(n, lengths.mean())
    pts = np.concatenate([[np.zeros(2)], np.cumsum(L[:, None] * u, axis=0)[:-1]])
    pts = pts - pts.mean(axis=0) + poly.mean(axis=0)
    return pts


def _equal_length_rebuild(poly: np.ndarray):
    """Equalize side lengths, adjusting headings minimally for closure."""
    n = len(poly)
    edges = _edges_of(poly)
    lengths = np.linalg.norm(edges, axis=1)
    L = float(lengths.mean())
    h = np.arctan2(edges[:, 1], edges[:, 0])
    for _ in range(5):
        u = np.stack([np.cos(h), np.sin(h)], axis=1)
        resid = (L * u).sum(axis=0)
        if np.linalg.norm(resid) < 1e-12:
            break
        J = np.stack([-L * np.sin(h), L * np.cos(h)], axis=0)  # (2, n)
        # least-norm heading correction solving J @ dh = -resid
        dh = J.T @ np.linalg.solve(J @ J.T, -resid)
        h = h + dh
    u = np.stack([np.cos(h), np.sin(h)], axis=1)
    pts = np.concatenate([[np.zeros(2)], np.cumsum(L * u, axis=0)[:-1]])
    return pts - pts.mean(axis=0) + poly.mean(axis=0)


def rectify(op: Operator, face: PlanarFace, cfg: RegularizerConfig) -> Operator:
    """Parallelism, corner-angle, and side-length rectification for polygons.

    Each rule fires only when every edge or corner is inside its tolerance
    band; corners equalize to the regular N-gon angle, lengths to their mean,
    and both together produce the regular N-gon.
    """
    if not cfg.enabled or not isinstance(op, AddSubParams):
        return op
    poly2, to3d = _polygon_2d(op, face)
    poly2, flipped = _ensure_ccw(poly2)
    n = len(poly2)

    to2d, _ = face_plane_mapping(face)
    loop2 = to2d(face.outer_loop)
    face_dirs = []
    for e in _edges_of(loop2):
        ne = np.linalg.norm(e)
        if ne > 1e-9:
            face_dirs.append(e / ne)

    out = poly2
    aligned = _parallel_rectify(out, face_dirs, cfg.parallel_tol_deg)
    if aligned is not None:
        out = aligned

    target = (n - 2) * 180.0 / n
    angles = _interior_angles(out)
    corners_ok = bool(np.all(np.abs(angles - target) <= cfg.corner_tol_deg))
    lengths = np.linalg.norm(_edges_of(out), axis=1)
    lengths_ok = bool(np.all(np.abs(lengths - lengths.mean()) <= cfg.length_tol * lengths.mean()))
    if corners_ok and lengths_ok:
        # regular N-gon with matched centroid and mean circumradius
        centroid = out.mean(axis=0)
        radius = float(np.linalg.norm(out - centroid, axis=1).mean())
        phi = np.arctan2(out[:, 1] - centroid[1], out[:, 0] - centroid[0])
        rel = phi - 2.0 * np.pi * np.arange(n) / n
        theta0 = float(np.arctan2(np.sin(rel).sum(), np.cos(rel).sum()))
        ang = theta0 + 2.0 * np.pi * np.arange(n) / n
        out = centroid + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif corners_ok:
        out = _equiangular_rebuild(out, equal_lengths=False)
    elif lengths_ok:
        out = _equal_length_rebuild(out)

    if out is poly2 and aligned is None:
        return op
    if flipped:
        out = out[::-1]
    return replace(op, base_polygon=to3d(out))


def regularize_operator(op: Operator, face: PlanarFace, cfg: RegularizerConfig) -> Operator:
    """Rectification first, snapping last so contact with key points survives."""
    if not cfg.enabled:
        return op
    return snap(rectify(op, face, cfg), face, cfg)


# --- symmetry auto-completion ---------------------------------------------------

def obb_mid_planes(model: SolidModel):
    """Three (point, normal) mid-planes of the oriented bounding box.

    The OBB comes from vertex PCA with an axis-aligned fallback when the
    spectrum is near-degenerate.
    """
    v = model.vertices
    centered = v - v.mean(axis=0)
    cov = centered.T @ centered / max(len(v), 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals)
    evals, evecs = evals[order], evecs[:, order]
    spread = float(evals.max())
    if spread < 1e-12 or float(np.min(np.abs(np.diff(evals)))) < 1e-9 * spread:
        axes = np.eye(3)
    else:
        axes = evecs.T
    # deterministic sign: the largest-magnitude component of each axis positive
    fixed = []
    for a in axes:
        k = int(np.argmax(np.abs(a)))
        fixed.append(a if a[k] >= 0 else -a)
    axes = np.asarray(fixed)
    coords = v @ axes.T
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    center = ((lo + hi) / 2.0) @ axes
    return [(center, axes[i]) for i in range(3)]


def reflect_operator(op: Operator, plane_point: np.ndarray, plane_normal: np.ndarray,
                     model: SolidModel) -> Operator:
    """Mirror an add/subtract or sweep primitive across a plane, re-anchoring
    it on the face of `model` that contains the reflected base."""
    if isinstance(op, AddSubParams):
        poly = reflect_points(op.base_polygon, plane_point, plane_normal)
        face = _face_containing(model, poly)
        return replace(op, base_polygon=poly, face_id=face.id)
    if isinstance(op, SweepParams):
        center = reflect_points(op.base_center[None, :], plane_point, plane_normal)[0]
        profile = reflect_points(op.profile, plane_point, plane_normal)
        face = _face_containing(model, center[None, :])
        return replace(op, base_center=center, profile=profile, face_id=face.id)
    raise ProtocolError("symmetry completion applies to add/subtract and sweep steps")


def _face_containing(model: SolidModel, points: np.ndarray) -> PlanarFace:
    import shapely

    from .operators import face_screen_region
    best = None
    for face in model.faces:
        d = np.abs(points @ face.normal - face.offset)
        if d.max() > 1e-6:
            continue
        region = face_screen_region(face)
        to2d, _ = face_plane_mapping(face)
        c = to2d(points.mean(axis=0))[0]
        if region.buffer(1e-9).contains(shapely.Point(c)):
            if best is None or face.area > best.area:
                best = face
    if best is None:
        raise ProtocolError("reflected primitive does not land on any planar face")
    return best


def _ops_equal(a: Operator, b: Operator, axis: np.ndarray) -> bool:
    """Whether two primitives build the same solid (so the mirror is a duplicate).

    Polygons compare as vertex sets (reflection permutes and reverses the
    cycle); sweeps compare center, radii, distance, and the profile's
    cylindrical coordinates about the shared axis (the meridian plane itself
    carries no geometry).
    """
    if type(a) is not type(b):
        return False
    if isinstance(a, AddSubParams):
        if a.face_id != b.face_id or a.option != b.option \
                or abs(a.profile_length - b.profile_length) > 1e-9 \
                or len(a.base_polygon) != len(b.base_polygon):
            return False
        pa = np.asarray(sorted(map(tuple, np.round(a.base_polygon, 9))))
        pb = np.asarray(sorted(map(tuple, np.round(b.base_polygon, 9))))
        return bool(np.allclose(pa, pb, atol=1e-8))
    if isinstance(a, SweepParams):
        if a.face_id != b.face_id or a.option != b.option:
            return False
        scalars_a = (a.base_radius, a.offset_distance, a.offset_radius)
        scalars_b = (b.base_radius, b.offset_distance, b.offset_radius)
        if not np.allclose(scalars_a, scalars_b, atol=1e-9):
            return False
        if not np.allclose(a.base_center, b.base_center, atol=1e-9):
            return False
        pa = a.profile - a.base_center
        pb = b.profile - b.base_center
        h1 = pa @ axis
        r1 = np.linalg.norm(pa - np.outer(h1, axis), axis=1)
        h2 = pb @ axis
        r2 = np.linalg.norm(pb - np.outer(h2, axis), axis=1)
        return bool(np.allclose(h1, h2, atol=1e-8) and np.allclose(r1, r2, atol=1e-8))
    return False


def symmetry_complete(p: Protocol, step: int, plane_choice: int) -> Protocol:
    """Append the mirror image of a step's primitive across one OBB mid-plane
    of the shape it was sketched on; suppresses exact duplicates."""
    if not 0 <= step < len(p.steps):
        raise ProtocolError(f"step {step} out of range")
    op = p.steps[step].op
    if not isinstance(op, (AddSubParams, SweepParams)):
        raise ProtocolError("symmetry completion applies to add/subtract and sweep steps")
    if not 0 <= plane_choice < 3:
        raise ProtocolError("plane choice must be 0, 1, or 2")
    base = execute(p, step)
    planes = obb_mid_planes(base)
    point, normal = planes[plane_choice]
    mirrored = reflect_operator(op, point, normal, base)
    face_normal = base.face_by_id(op.face_id).normal
    if _ops_equal(mirrored, op, axis=face_normal):
        return p
    candidate = Protocol(steps=p.steps + (ProtocolStep(mirrored, label="mirrored"),),
                         version=p.version)
    execute(candidate)  # replay-validate; raises on failure
    return candidate

"""The four parameterized CAD operators: records, forward action, canonical sketches.

Each operator record stores its geometry in 3D model coordinates. Applying an
operator builds the implied primitive solid and booleans it with the model;
the canonical sketch is the set of labeled 3D curves a user would draw to
specify the operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely

from .csg import boolean
from .geometry import cubic_bezier, plane_basis, point_segment_distance, unit
from .mesh import PlanarFace, SolidModel
from .primitives import (SWEEP_PROFILE_SAMPLES, SWEEP_SEGMENTS, bevel_prism, prism,
                         prism_from_face, swept_solid)

OP_EXTRUDE = "Extrude"
OP_BEVEL = "Bevel"
OP_ADDSUB = "AddSubtractPolyhedron"
OP_SWEEP = "AddSubtractSweepShape"
OP_TYPES = (OP_EXTRUDE, OP_BEVEL, OP_ADDSUB, OP_SWEEP)

# ground-truth curve classes per operator (see the label-map encodings)
CLS_EXTRUDE_PROFILE = 0
CLS_EXTRUDE_OFFSET = 1
CLS_BEVEL_L2 = 0
CLS_BEVEL_L = 1
CLS_START = 0
CLS_PROFILE = 1
CLS_END = 2


class OperatorError(Exception):
    pass


@dataclass(frozen=True)
class ExtrudeParams:
    face_id: int
    offset: float  # signed; negative pushes the face inward

    @property
    def op_name(self) -> str:
        return OP_EXTRUDE


@dataclass(frozen=True)
class BevelParams:
    face_id: int
    corner: np.ndarray            # c, a vertex of the base face boundary
    opposite_corner: np.ndarray   # c', the far end of the crease at c
    profile: np.ndarray           # cubic Bezier control points (4, 3) on the face plane

    @property
    def op_name(self) -> str:
        return OP_BEVEL


@dataclass(frozen=True)
class AddSubParams:
    face_id: int
    base_polygon: np.ndarray      # (N, 3) points on the face plane, 3 <= N <= 6
    profile_length: float         # > 0
    option: str                   # "+" adds outward, "-" subtracts into the solid

    @property
    def op_name(self) -> str:
        return OP_ADDSUB


@dataclass(frozen=True)
class SweepParams:
    face_id: int
    base_center: np.ndarray       # on the face plane
    base_radius: float
    offset_distance: float        # circle-center distance, > 0
    offset_radius: float
    profile: np.ndarray           # cubic Bezier (4, 3) in a plane containing the axis
    option: str                   # "+" sweeps outward and unions, "-" cuts inward

    @property
    def op_name(self) -> str:
        return OP_SWEEP


Operator = ExtrudeParams | BevelParams | AddSubParams | SweepParams


@dataclass(frozen=True)
class LabeledCurve:
    """A canonical sketch curve with its ground-truth segmentation class."""
    points: np.ndarray   # (k, 3)
    cls: int
    role: str
    closed: bool = False


def _resolve_face(m: SolidModel, face_id: int) -> PlanarFace:
    try:
        return m.face_by_id(int(face_id))
    except KeyError as err:
        raise OperatorError(str(err)) from None


def _require_on_plane(points: np.ndarray, face: PlanarFace, what: str, tol: float = 1e-6):
    d = np.abs(np.atleast_2d(points) @ face.normal - face.offset)
    if d.max() > tol:
        raise OperatorError(f"{what} is off the base-face plane by {d.max():.2e}")


def _polygon_is_simple(polygon: np.ndarray, face: PlanarFace) -> bool:
    u, v = plane_basis(face.normal)
    pts2 = np.stack([polygon @ u, polygon @ v], axis=1)
    return bool(shapely.Polygon(pts2).is_valid)


def validate(op: Operator, m: SolidModel) -> PlanarFace:
    """Check the operator's invariants against the model; returns the base face."""
    face = _resolve_face(m, op.face_id)
    if isinstance(op, ExtrudeParams):
        if not (0 < abs(op.offset) <= 1.5):
            raise OperatorError(f"extrude offset {op.offset} outside (0, 1.5]")
    elif isinstance(op, BevelParams):
        corners = face.outer_loop
        dists = np.linalg.norm(corners - op.corner, axis=1)
        if dists.min() > 1e-6:
            raise OperatorError("bevel corner is not a vertex of the base face")
        crease = op.opposite_corner - op.corner
        if abs(float(crease @ face.normal)) < 1e-9:
            raise OperatorError("bevel crease lies in the base-face plane")
        _require_on_plane(op.profile, face, "bevel profile")
        e1, e2 = _corner_edges(face, op.corner)
        for endpoint, name in ((op.profile[0], "start"), (op.profile[3], "end")):
            d1 = point_segment_distance(endpoint, *e1)
            d2 = point_segment_distance(endpoint, *e2)
            if min(d1, d2) > 1e-6:
                raise OperatorError(f"bevel profile {name} endpoint is off the corner edges")
    elif isinstance(op, AddSubParams):
        n = len(op.base_polygon)
        if not 3 <= n <= 6:
            raise OperatorError(f"base polygon must have 3..6 vertices, got {n}")
        if op.option not in "+-":
            raise OperatorError(f"option must be '+' or '-', got {op.option!r}")
        if not op.profile_length > 0:
            raise OperatorError("profile length must be positive")
        _require_on_plane(op.base_polygon, face, "base polygon")
        if not _polygon_is_simple(op.base_polygon, face):
            raise OperatorError("base polygon is self-intersecting")
    elif isinstance(op, SweepParams):
        if op.option not in "+-":
            raise OperatorError(f"option must be '+' or '-', got {op.option!r}")
        if not (op.base_radius > 0 and op.offset_radius > 0 and op.offset_distance > 0):
            raise OperatorError("sweep radii and offset distance must be positive")
        _require_on_plane(op.base_center, face, "sweep base center")
    else:
        raise OperatorError(f"unknown operator {type(op).__name__}")
    return face


def _corner_edges(face: PlanarFace, corner: np.ndarray):
    """The two boundary edge segments of the face meeting at `corner`."""
    loop = face.outer_loop
    i = int(np.argmin(np.linalg.norm(loop - corner, axis=1)))
    prev_pt = loop[(i - 1) % len(loop)]
    next_pt = loop[(i + 1) % len(loop)]
    c = loop[i]
    return (c, prev_pt), (c, next_pt)


def sweep_axis(op: SweepParams, face: PlanarFace) -> np.ndarray:
    """Unit axis direction of the swept shape (outward for +, inward for -)."""
    return face.normal if op.option == "+" else -face.normal


def face_plane_mapping(face: PlanarFace):
    """(to2d, to3d) maps between 3D points and in-plane coordinates of a face."""
    u, v = plane_basis(face.normal)
    origin = face.normal * face.offset

    def to2d(pts3d):
        p = np.atleast_2d(pts3d) - origin
        return np.stack([p @ u, p @ v], axis=1)

    def to3d(pts2d):
        p = np.atleast_2d(pts2d)
        return origin + p[:, 0, None] * u + p[:, 1, None] * v

    return to2d, to3d


def face_screen_region(face: PlanarFace):
    """Shapely polygon of the face region in its own plane coordinates."""
    to2d, _ = face_plane_mapping(face)
    outer = to2d(face.loops[0])
    holes = [to2d(lp) for lp in face.loops[1:]]
    poly = shapely.Polygon(outer, holes)
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


def find_crease(model: SolidModel, face: PlanarFace, corner: np.ndarray):
    """Far endpoint of the unique boundary edge leaving the face plane at
    `corner`, or None when no single crease exists there."""
    dirs: list[np.ndarray] = []
    ends: list[np.ndarray] = []
    for other in model.faces:
        if other.id == face.id:
            continue
        if (np.any(corner < other.bbox_min - 1e-6) or np.any(corner > other.bbox_max + 1e-6)):
            continue
        for loop in other.loops:
            for i in range(len(loop)):
                a = loop[i]
                b = loop[(i + 1) % len(loop)]
                for p, q in ((a, b), (b, a)):
                    if np.linalg.norm(p - corner) < 1e-6:
                        d = q - p
                        n = np.linalg.norm(d)
                        if n < 1e-12 or abs(float((d / n) @ face.normal)) <= 1e-3:
                            continue
                        d = d / n
                        for k, u in enumerate(dirs):
                            if float(d @ u) >= 1.0 - 1e-6:
                                if np.linalg.norm(q - corner) > np.linalg.norm(ends[k] - corner):
                                    ends[k] = q
                                break
                        else:
                            dirs.append(d)
                            ends.append(q)
    if len(dirs) != 1:
        return None
    return ends[0]


def apply(op: Operator, m: SolidModel) -> SolidModel:
    """Apply one operator, returning the new solid."""
    face = validate(op, m)
    n = face.normal
    if isinstance(op, ExtrudeParams):
        if op.offset > 0:
            tool = prism_from_face(face, n, op.offset, m)
            return boolean(m, tool, "union")
        tool = prism_from_face(face, -n, -op.offset, m)
        return boolean(m, tool, "difference")
    if isinstance(op, BevelParams):
        tool = bevel_prism(op.corner, op.profile, op.opposite_corner - op.corner)
        return boolean(m, tool, "difference")
    if isinstance(op, AddSubParams):
        direction = n if op.option == "+" else -n
        tool = prism(op.base_polygon, direction, op.profile_length)
        return boolean(m, tool, "union" if op.option == "+" else "difference")
    if isinstance(op, SweepParams):
        axis = sweep_axis(op, face)
        tool = swept_solid(op.base_center, op.base_radius, axis, op.offset_distance,
                           op.offset_radius, op.profile)
        return boolean(m, tool, "union" if op.option == "+" else "difference")
    raise OperatorError(f"unknown operator {type(op).__name__}")


def _loop_edges(loop: np.ndarray):
    for i in range(len(loop)):
        yield loop[i], loop[(i + 1) % len(loop)]


def _circle_points(center: np.ndarray, radius: float, axis: np.ndarray,
                   segments: int = SWEEP_SEGMENTS) -> np.ndarray:
    u, v = plane_basis(axis)
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    pts = center[None, :] + radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
    return np.concatenate([pts, pts[:1]])


def _sweep_profile_curves(op: SweepParams, face: PlanarFace, view_dir) -> list[np.ndarray]:
    """The two side profile curves, drawn in the plane through the axis that
    faces the camera (the silhouette plane for the given view direction)."""
    axis = sweep_axis(op, face)
    t = np.linspace(0.0, 1.0, SWEEP_PROFILE_SAMPLES)
    prof = cubic_bezier(op.profile, t)
    h = (prof - op.base_center) @ axis
    radial = prof - op.base_center - h[:, None] * axis[None, :]
    r = np.linalg.norm(radial, axis=1)
    r[0], r[-1] = op.base_radius, op.offset_radius
    h[0], h[-1] = 0.0, op.offset_distance
    if view_dir is None:
        w = unit(radial[np.argmax(r)])
    else:
        side = np.cross(axis, np.asarray(view_dir, dtype=np.float64))
        if np.linalg.norm(side) < 1e-9:
            w = plane_basis(axis)[0]
        else:
            w = unit(side)
    spine = op.base_center[None, :] + h[:, None] * axis[None, :]
    return [spine + r[:, None] * w[None, :], spine - r[:, None] * w[None, :]]


def canonical_sketch(op: Operator, m: SolidModel, view_dir=None) -> list[LabeledCurve]:
    """The labeled curve set a user would draw to specify `op` on `m`.

    `view_dir` orients the sweep profile curves toward the camera; other
    operators ignore it.
    """
    face = validate(op, m)
    n = face.normal
    curves: list[LabeledCurve] = []
    if isinstance(op, ExtrudeParams):
        d = op.offset * n
        for loop in face.loops:
            for a, b in _loop_edges(loop):
                curves.append(LabeledCurve(np.stack([a + d, b + d]), CLS_EXTRUDE_OFFSET, "offset"))
            for a in loop:
                curves.append(LabeledCurve(np.stack([a, a + d]), CLS_EXTRUDE_PROFILE, "side"))
        return curves
    if isinstance(op, BevelParams):
        t = np.linspace(0.0, 1.0, 17)
        l = cubic_bezier(op.profile, t)
        curves.append(LabeledCurve(l, CLS_BEVEL_L, "profile_l"))
        curves.append(LabeledCurve(l + (op.opposite_corner - op.corner), CLS_BEVEL_L2, "profile_l_offset"))
        return curves
    if isinstance(op, AddSubParams):
        direction = n if op.option == "+" else -n
        far = op.base_polygon + op.profile_length * direction
        if op.option == "+":
            start, end = op.base_polygon, far
        else:
            start, end = far, op.base_polygon
        close = lambda p: np.concatenate([p, p[:1]])
        curves.append(LabeledCurve(close(start), CLS_START, "start", closed=True))
        curves.append(LabeledCurve(close(end), CLS_END, "end", closed=True))
        for a, b in zip(start, end):
            curves.append(LabeledCurve(np.stack([a, b]), CLS_PROFILE, "profile"))
        return curves
    if isinstance(op, SweepParams):
        axis = sweep_axis(op, face)
        base_circle = _circle_points(op.base_center, op.base_radius, axis)
        offset_circle = _circle_points(op.base_center + op.offset_distance * axis,
                                       op.offset_radius, axis)
        if op.option == "+":
            start, end = base_circle, offset_circle
        else:
            start, end = offset_circle, base_circle
        curves.append(LabeledCurve(start, CLS_START, "start", closed=True))
        curves.append(LabeledCurve(end, CLS_END, "end", closed=True))
        for prof in _sweep_profile_curves(op, face, view_dir):
            curves.append(LabeledCurve(prof, CLS_PROFILE, "profile"))
        return curves
    raise OperatorError(f"unknown operator {type(op).__name__}")


# --- serialization helpers (shared by the protocol module) ---

def params_to_dict(op: Operator) -> dict:
    if isinstance(op, ExtrudeParams):
        return {"face_id": int(op.face_id), "offset": float(op.offset)}
    if isinstance(op, BevelParams):
        return {"face_id": int(op.face_id),
                "corner": [float(x) for x in op.corner],
                "opposite_corner": [float(x) for x in op.opposite_corner],
                "profile": [[float(x) for x in row] for row in op.profile]}
    if isinstance(op, AddSubParams):
        return {"face_id": int(op.face_id),
                "base_polygon": [[float(x) for x in row] for row in op.base_polygon],
                "profile_length": float(op.profile_length),
                "option": op.option}
    if isinstance(op, SweepParams):
        return {"face_id": int(op.face_id),
                "base_center": [float(x) for x in op.base_center],
                "base_radius": float(op.base_radius),
                "offset_distance": float(op.offset_distance),
                "offset_radius": float(op.offset_radius),
                "profile": [[float(x) for x in row] for row in op.profile],
                "option": op.option}
    raise OperatorError(f"unknown operator {type(op).__name__}")


def params_from_dict(op_name: str, d: dict) -> Operator:
    try:
        if op_name == OP_EXTRUDE:
            return ExtrudeParams(face_id=int(d["face_id"]), offset=float(d["offset"]))
        if op_name == OP_BEVEL:
            return BevelParams(face_id=int(d["face_id"]),
                               corner=np.array(d["corner"], dtype=np.float64),
                               opposite_corner=np.array(d["opposite_corner"], dtype=np.float64),
                               profile=np.array(d["profile"], dtype=np.float64).reshape(4, 3))
        if op_name == OP_ADDSUB:
            return AddSubParams(face_id=int(d["face_id"]),
                                base_polygon=np.array(d["base_polygon"], dtype=np.float64).reshape(-1, 3),
                                profile_length=float(d["profile_length"]),
                                option=str(d["option"]))
        if op_name == OP_SWEEP:
            return SweepParams(face_id=int(d["face_id"]),
                               base_center=np.array(d["base_center"], dtype=np.float64),
                               base_radius=float(d["base_radius"]),
                               offset_distance=float(d["offset_distance"]),
                               offset_radius=float(d["offset_radius"]),
                               profile=np.array(d["profile"], dtype=np.float64).reshape(4, 3),
                               option=str(d["option"]))
    except (KeyError, TypeError, ValueError) as err:
        raise OperatorError(f"bad parameters for {op_name}: {err}") from None
    raise OperatorError(f"unknown operator name {op_name!r}")

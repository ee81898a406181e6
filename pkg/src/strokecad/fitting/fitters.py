"""Inverse mapping from strokes and segmentation maps to operator instances.

The pipeline mirrors the forward model: classify the operator type, segment
the maps, pick the base face by accumulated probability, then regress the
operator parameters with deterministic counting, grid line search, and curve
fitting. Identical inputs always yield identical operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely

from ..camera import Camera
from ..geometry import plane_basis, sample_polyline, unit
from ..mesh import PlanarFace, SolidModel
from ..operators import (AddSubParams, BevelParams, ExtrudeParams, Operator, SweepParams,
                          find_crease)
from ..render import RenderedView, StrokeSet, render_context, render_strokes
from .curves import (CurveFitError, ellipse_max_deviation, ellipse_points, fit_circle,
                     fit_cubic_bezier_clamped, fit_ellipse, icp_fit_polygon)

LINE_SEARCH_STEP = 0.0075
LINE_SEARCH_RANGE = 1.5
STROKE_SAMPLES = 64


class FitError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class InterpretContext:
    """Everything the providers and fitters see for one sketch."""
    model: SolidModel
    strokes: StrokeSet
    view: RenderedView
    S: np.ndarray
    M: np.ndarray

    @property
    def camera(self) -> Camera:
        return self.strokes.camera


def build_context(model: SolidModel, strokes: StrokeSet) -> InterpretContext:
    S, M = render_strokes(strokes)
    view = render_context(model, strokes.camera)
    return InterpretContext(model=model, strokes=strokes, view=view, S=S, M=M)


@dataclass
class InterpretResult:
    operator: Operator
    op_type: str
    probabilities: dict
    face_id: int
    ambiguous: bool = False
    diagnostics: tuple = ()


def select_base_face(F: np.ndarray, idmap: np.ndarray) -> int:
    """The face with the highest accumulated probability over binarized-on pixels."""
    mask = (F > 0.5) & (idmap > 0)
    if not mask.any():
        raise FitError("base-face", "no base face: no probability above 0.5")
    scores = np.bincount(idmap[mask].ravel(), weights=F[mask].ravel())
    best = int(scores.argmax())  # argmax returns the smallest index on ties
    if scores[best] <= 0.0:
        raise FitError("base-face", "no base face: zero accumulated probability")
    return best


def _pixel_centers(mask_or_rc, size: int) -> np.ndarray:
    """(u, v) raster coordinates of ON pixels (u right, v down, centers at ints)."""
    if isinstance(mask_or_rc, np.ndarray) and mask_or_rc.dtype == bool:
        rr, cc = np.nonzero(mask_or_rc)
    else:
        rr, cc = mask_or_rc
    return np.stack([cc.astype(np.float64), rr.astype(np.float64)], axis=1)


def _raster_of_points(cam: Camera, pts3d: np.ndarray) -> np.ndarray:
    q = cam.project(np.atleast_2d(pts3d))
    size = cam.image_size
    return np.stack([q[:, 0] * size - 0.5, (1.0 - q[:, 1]) * size - 0.5], axis=1)


def _raster_of_normalized(points2d: np.ndarray, size: int) -> np.ndarray:
    q = np.atleast_2d(points2d)
    return np.stack([q[:, 0] * size - 0.5, (1.0 - q[:, 1]) * size - 0.5], axis=1)


def _normalized_of_raster(uv: np.ndarray, size: int) -> np.ndarray:
    uv = np.atleast_2d(uv)
    return np.stack([(uv[:, 0] + 0.5) / size, 1.0 - (uv[:, 1] + 0.5) / size], axis=1)


def line_search_offset(source_points: np.ndarray, target_uv: np.ndarray,
                       normal: np.ndarray, cam: Camera) -> float:
    """Grid line search for the offset d that best matches the projected,
    normal-translated source points to the target pixels.

    The grid runs over [-1.5, 1.5] with step 0.0075 (401 candidates); the
    matching distance sums each sample's distance to its nearest target pixel.
    Exact ties prefer the smaller |d|.
    """
    if len(target_uv) == 0:
        raise FitError("line-search", "no target pixels")
    src_uv = _raster_of_points(cam, source_points)                  # (n, 2)
    # orthographic projection is affine: translating by d*normal shifts the
    # raster points by d * dir
    probe = _raster_of_points(cam, np.atleast_2d(source_points)[0] + normal) - src_uv[0]
    dir_uv = probe[0]
    half = int(round(LINE_SEARCH_RANGE / LINE_SEARCH_STEP))
    steps = (np.arange(2 * half + 1) - half) * LINE_SEARCH_STEP  # symmetric, exact 0
    cand = src_uv[None, :, :] + steps[:, None, None] * dir_uv[None, None, :]  # (k, n, 2)
    flat = cand.reshape(-1, 2)
    t2 = np.einsum("ij,ij->i", target_uv, target_uv)
    d2 = (np.einsum("ij,ij->i", flat, flat)[:, None]
          - 2.0 * flat @ target_uv.T + t2[None, :])
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2.min(axis=1)).reshape(len(steps), -1).sum(axis=1)
    best = min(range(len(steps)), key=lambda k: (dist[k], abs(steps[k])))
    return float(steps[best])


def _face_boundary_samples(face: PlanarFace, n: int = STROKE_SAMPLES) -> np.ndarray:
    """Arc-length samples over all boundary loops, allocated by loop length."""
    loops = [np.concatenate([lp, lp[:1]]) for lp in face.loops]
    lengths = [float(np.linalg.norm(np.diff(lp, axis=0), axis=1).sum()) for lp in loops]
    total = sum(lengths)
    out = []
    for lp, L in zip(loops, lengths):
        k = max(4, int(round(n * L / total))) if total > 0 else n
        out.append(sample_polyline(lp, k))
    return np.concatenate(out)


def _band_masks(C: np.ndarray, M: np.ndarray):
    on = M >= 0.5
    return ((C <= 0.5) & on, (C > 0.5) & (C <= 1.5) & on, (C > 1.5) & on)


def _stroke_band_likelihoods(stroke: np.ndarray, bands, size: int) -> np.ndarray:
    """Counts of band membership over 64 uniform arc-length samples."""
    pts = sample_polyline(stroke, STROKE_SAMPLES)
    uv = _raster_of_normalized(pts, size)
    cols = np.clip(np.rint(uv[:, 0]), 0, size - 1).astype(np.int64)
    rows = np.clip(np.rint(uv[:, 1]), 0, size - 1).astype(np.int64)
    return np.array([band[rows, cols].sum() for band in bands], dtype=np.float64)


def fit_extrude(ctx: InterpretContext, C: np.ndarray, face: PlanarFace) -> tuple[ExtrudeParams, list]:
    offset_mask = (C > 0.5) & (ctx.M >= 0.5)
    if not offset_mask.any():
        raise FitError("fit-extrude", "empty offset-curve map")
    targets = _pixel_centers(offset_mask, ctx.camera.image_size)
    source = _face_boundary_samples(face)
    d = line_search_offset(source, targets, face.normal, ctx.camera)
    if d == 0.0:
        raise FitError("fit-extrude", "line search found zero offset")
    return ExtrudeParams(face_id=face.id, offset=d), []


def _face_plane_coords(face: PlanarFace):
    from ..operators import face_plane_mapping
    return face_plane_mapping(face)


def _boundary_edges(face: PlanarFace):
    for loop in face.loops:
        for i in range(len(loop)):
            yield loop[i], loop[(i + 1) % len(loop)]


def _nearest_edge(face: PlanarFace, point3d: np.ndarray):
    best, best_d, best_pt = None, np.inf, None
    for a, b in _boundary_edges(face):
        ab = b - a
        t = np.clip(float((point3d - a) @ ab) / max(float(ab @ ab), 1e-18), 0.0, 1.0)
        q = a + t * ab
        d = float(np.linalg.norm(point3d - q))
        if d < best_d:
            best, best_d, best_pt = (a, b), d, q
    return best, best_pt, best_d


def _crease_at_corner(model: SolidModel, face: PlanarFace, corner: np.ndarray):
    """The unique boundary edge at `corner` leaving the base-face plane."""
    end = find_crease(model, face, corner)
    if end is None:
        raise FitError("fit-bevel", "no unique crease at the base corner")
    return end


def fit_bevel(ctx: InterpretContext, C: np.ndarray, face: PlanarFace) -> tuple[BevelParams, list]:
    strokes = ctx.strokes.strokes
    if len(strokes) < 2:
        raise FitError("fit-bevel", "bevel needs at least two strokes")
    size = ctx.camera.image_size
    cl_mask = (C > 0.5) & (ctx.M >= 0.5)
    bands = (cl_mask,)
    scores = [_stroke_band_likelihoods(s, bands, size)[0] for s in strokes]
    s_star = strokes[int(np.argmax(scores))]
    pts = sample_polyline(s_star, STROKE_SAMPLES)
    lifted = ctx.camera.back_project(pts, face.normal, face.offset)
    edge_a, clamp_a, dist_a = _nearest_edge(face, lifted[0])
    edge_b, clamp_b, dist_b = _nearest_edge(face, lifted[-1])
    scale = face.diameter()
    if dist_a > 0.05 * scale or dist_b > 0.05 * scale:
        raise FitError("fit-bevel", "profile endpoints do not reach the face boundary")
    shared = None
    for p in edge_a:
        for q in edge_b:
            if np.linalg.norm(p - q) < 1e-9:
                shared = p
    if shared is None or (np.allclose(edge_a[0], edge_b[0]) and np.allclose(edge_a[1], edge_b[1])):
        raise FitError("fit-bevel", "profile does not span two adjacent boundary edges")
    corner = shared
    opposite = _crease_at_corner(ctx.model, face, corner)
    profile = fit_cubic_bezier_clamped(lifted, clamp_a, clamp_b)
    return BevelParams(face_id=face.id, corner=corner, opposite_corner=opposite,
                       profile=profile), []


def _assign_strokes(ctx: InterpretContext, C: np.ndarray):
    """Each stroke's class by largest band likelihood: 0 start, 1 profile, 2 end."""
    bands = _band_masks(C, ctx.M)
    size = ctx.camera.image_size
    assign = []
    for s in ctx.strokes.strokes:
        L = _stroke_band_likelihoods(s, bands, size)
        assign.append(int(np.argmax(L)) if L.max() > 0 else 1)
    return assign, bands


def _endpoint_sets(profile_strokes, start_stroke, end_stroke):
    start_pts = sample_polyline(start_stroke, STROKE_SAMPLES)
    end_pts = sample_polyline(end_stroke, STROKE_SAMPLES)
    begin_set, finish_set = [], []
    for s in profile_strokes:
        a, b = s[0], s[-1]
        da = np.linalg.norm(start_pts - a, axis=1).min()
        db = np.linalg.norm(start_pts - b, axis=1).min()
        if da <= db:
            begin_set.append(a)
            finish_set.append(b)
        else:
            begin_set.append(b)
            finish_set.append(a)
    return np.asarray(begin_set), np.asarray(finish_set)


def _order_by_angle(points: np.ndarray) -> np.ndarray:
    c = points.mean(axis=0)
    ang = np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0])
    return points[np.argsort(ang)]


def _face_screen_polygon(ctx: InterpretContext, face: PlanarFace):
    outer = ctx.camera.project(face.loops[0])
    holes = [ctx.camera.project(lp) for lp in face.loops[1:]]
    poly = shapely.Polygon(outer, holes)
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


ON_FACE_FRACTION = 0.95


def _choose_option(ctx: InterpretContext, face: PlanarFace, start_poly2d, end_poly2d):
    """Start polygon on the face means addition, end polygon means subtraction.

    A polygon counts as "on" the face when its projection lies (almost) fully
    inside the face's projected region: the floating end of an unambiguous
    sketch sticks out past the face boundary or off the face entirely. When
    both polygons sit inside the region the sketch is inherently ambiguous and
    defaults to addition, which the user may switch.
    """
    fpoly = _face_screen_polygon(ctx, face)
    sp = shapely.Polygon(start_poly2d)
    ep = shapely.Polygon(end_poly2d)
    if not sp.is_valid:
        sp = sp.buffer(0)
    if not ep.is_valid:
        ep = ep.buffer(0)
    s_frac = sp.intersection(fpoly).area / max(sp.area, 1e-12)
    e_frac = ep.intersection(fpoly).area / max(ep.area, 1e-12)
    s_on = s_frac >= ON_FACE_FRACTION
    e_on = e_frac >= ON_FACE_FRACTION
    if s_on and e_on:
        return "+", True
    if s_on:
        return "+", False
    if e_on:
        return "-", False
    # neither polygon clearly rides the face: pick the larger overlap but
    # flag the interpretation as ambiguous for the user to confirm
    if max(s_frac, e_frac) <= 1e-6:
        raise FitError("fit-option", "erroneous sketch: neither polygon touches the base face")
    return ("+", True) if s_frac >= e_frac else ("-", True)


def fit_addsub(ctx: InterpretContext, C: np.ndarray, face: PlanarFace,
               force_option: str | None = None) -> tuple[AddSubParams, list]:
    strokes = ctx.strokes.strokes
    if len(strokes) < 3:
        raise FitError("fit-addsub", "needs start, end, and profile strokes")
    assign, bands = _assign_strokes(ctx, C)
    starts = [s for s, a in zip(strokes, assign) if a == 0]
    profiles = [s for s, a in zip(strokes, assign) if a == 1]
    ends = [s for s, a in zip(strokes, assign) if a == 2]
    if not starts or not ends:
        raise FitError("fit-addsub", "erroneous sketch: missing start or end polygon stroke")
    start_stroke, end_stroke = starts[0], ends[0]
    n = len(profiles)
    if not 3 <= n <= 6:
        raise FitError("fit-addsub", f"profile stroke count {n} outside 3..6")

    begin_set, finish_set = _endpoint_sets(profiles, start_stroke, end_stroke)
    start_samples = sample_polyline(start_stroke, STROKE_SAMPLES)
    end_samples = sample_polyline(end_stroke, STROKE_SAMPLES)
    p_start = icp_fit_polygon(start_samples, _order_by_angle(begin_set))
    p_end = icp_fit_polygon(end_samples, _order_by_angle(finish_set))

    if force_option is None:
        option, ambiguous = _choose_option(ctx, face, p_start, p_end)
    else:
        option, ambiguous = force_option, False
    base2d = p_start if option == "+" else p_end
    base3d = ctx.camera.back_project(base2d, face.normal, face.offset)

    far_mask = bands[2] if option == "+" else bands[0]
    if not far_mask.any():
        raise FitError("fit-addsub", "no far-end pixels for the length search")
    targets = _pixel_centers(far_mask, ctx.camera.image_size)
    closed = np.concatenate([base3d, base3d[:1]])
    d = line_search_offset(sample_polyline(closed, STROKE_SAMPLES), targets,
                           face.normal, ctx.camera)
    length = abs(d)
    if length == 0.0:
        raise FitError("fit-addsub", "line search found zero prism length")
    diags = ["ambiguous-option-defaulted-to-add"] if ambiguous else []
    expected_sign = 1.0 if option == "+" else -1.0
    if d * expected_sign < 0:
        diags.append("length-search-sign-disagrees-with-option")
    return AddSubParams(face_id=face.id, base_polygon=base3d, profile_length=length,
                        option=option), diags


def _ellipse_from_mask(mask: np.ndarray, size: int, stage: str):
    if mask.sum() < 8:
        raise FitError(stage, "too few curve pixels for an ellipse fit")
    uv = _pixel_centers(mask, size)
    pts = _normalized_of_raster(uv, size)
    try:
        center, axes, angle = fit_ellipse(pts)
    except CurveFitError as err:
        raise FitError(stage, str(err)) from None
    bbox = pts.max(axis=0) - pts.min(axis=0)
    diag = float(np.hypot(*bbox))
    if ellipse_max_deviation(pts, center, axes, angle) > 0.05 * max(diag, 1e-9):
        raise FitError(stage, "curve not elliptical")
    return center, axes, angle


def fit_sweep(ctx: InterpretContext, C: np.ndarray, face: PlanarFace,
              force_option: str | None = None) -> tuple[SweepParams, list]:
    strokes = ctx.strokes.strokes
    if len(strokes) < 3:
        raise FitError("fit-sweep", "needs two circles and a profile stroke")
    assign, bands = _assign_strokes(ctx, C)
    profiles = [s for s, a in zip(strokes, assign) if a == 1]
    if not profiles:
        raise FitError("fit-sweep", "no profile stroke")
    size = ctx.camera.image_size

    s_center, s_axes, s_angle = _ellipse_from_mask(bands[0], size, "fit-sweep")
    e_center, e_axes, e_angle = _ellipse_from_mask(bands[2], size, "fit-sweep")

    start_poly = ellipse_points(s_center, s_axes, s_angle, 64)
    end_poly = ellipse_points(e_center, e_axes, e_angle, 64)
    if force_option is None:
        option, ambiguous = _choose_option(ctx, face, start_poly, end_poly)
    else:
        option, ambiguous = force_option, False
    base_center2d, base_poly2d = (s_center, start_poly) if option == "+" else (e_center, end_poly)
    far_center2d, far_poly2d = (e_center, end_poly) if option == "+" else (s_center, start_poly)

    lifted_base = ctx.camera.back_project(base_poly2d, face.normal, face.offset)
    to2d, to3d = _face_plane_coords(face)
    c2d, r0 = fit_circle(to2d(lifted_base))
    center0 = to3d(c2d)[0]

    far_uv = _raster_of_normalized(far_center2d, size)
    d = line_search_offset(center0[None, :], far_uv, face.normal, ctx.camera)
    if d == 0.0:
        raise FitError("fit-sweep", "line search found zero circle distance")
    distance = abs(d)
    axis = face.normal if d > 0 else -face.normal
    expected = "+" if d > 0 else "-"
    diags = ["ambiguous-option-defaulted-to-add"] if ambiguous else []
    if expected != option:
        diags.append("length-search-sign-disagrees-with-option")

    far_offset = face.offset + d  # the base center lies on the face plane
    lifted_far = ctx.camera.back_project(far_poly2d, face.normal, far_offset)
    hvec = (lifted_far - center0) @ face.normal
    radial_far = lifted_far - center0 - hvec[:, None] * face.normal[None, :]
    r1 = float(np.linalg.norm(radial_far, axis=1).mean())

    # profile plane from the circle centers and a lifted profile endpoint
    prof_stroke = profiles[0]
    pa, pb = prof_stroke[0], prof_stroke[-1]
    base_end = pa if np.linalg.norm(pa - base_center2d) <= np.linalg.norm(pb - base_center2d) else pb
    lifted_pt = ctx.camera.back_project(base_end, face.normal, face.offset)
    radial = lifted_pt - center0
    radial = radial - float(radial @ axis) * axis
    if np.linalg.norm(radial) < 1e-9:
        raise FitError("fit-sweep", "profile endpoint coincides with the axis")
    w = unit(radial)
    plane_n = unit(np.cross(axis, w))
    plane_w = float(center0 @ plane_n)
    prof_pts = sample_polyline(prof_stroke, STROKE_SAMPLES)
    try:
        lifted_prof = ctx.camera.back_project(prof_pts, plane_n, plane_w)
    except Exception as err:
        raise FitError("fit-sweep", f"profile plane is view-grazing: {err}") from None
    p0 = center0 + r0 * w
    p3 = center0 + distance * axis + r1 * w
    profile = fit_cubic_bezier_clamped(lifted_prof, p0, p3)

    # rectify to a cylinder when the profile is nearly straight and radii agree
    chord = p3 - p0
    chord_len = float(np.linalg.norm(chord))
    tline = ((lifted_prof - p0) @ chord) / max(chord_len ** 2, 1e-18)
    devs = np.linalg.norm(lifted_prof - (p0 + tline[:, None] * chord), axis=1)
    rectified = (float(devs.max()) < 0.02 * chord_len
                 and abs(r0 - r1) < 0.05 * max(r0, r1))
    if rectified:
        r = (r0 + r1) / 2.0
        r0 = r1 = r
        p0 = center0 + r * w
        p3 = center0 + distance * axis + r * w
        profile = np.stack([p0, p0 + (p3 - p0) / 3.0, p0 + 2.0 * (p3 - p0) / 3.0, p3])
        diags.append("cylinder-rectified")

    return SweepParams(face_id=face.id, base_center=center0, base_radius=float(r0),
                       offset_distance=distance, offset_radius=float(r1),
                       profile=profile, option=option), diags


_FITTERS = {
    "Extrude": fit_extrude,
    "Bevel": fit_bevel,
    "AddSubtractPolyhedron": fit_addsub,
    "AddSubtractSweepShape": fit_sweep,
}


def interpret(model: SolidModel, strokes: StrokeSet, provider) -> InterpretResult:
    """Full inverse pipeline: classify, segment, pick the base face, fit."""
    if len(strokes.strokes) == 0:
        raise FitError("interpret", "no strokes")
    ctx = build_context(model, strokes)
    probs = provider.classify(ctx)
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-6:
        raise FitError("classify", f"probabilities sum to {total}, not 1")
    op_type = max(sorted(probs), key=lambda k: probs[k])
    F, C = provider.segment(ctx, op_type)
    fid = select_base_face(F, ctx.view.Id)
    face = model.face_by_id(fid)
    params, diags = _FITTERS[op_type](ctx, C, face)
    ambiguous = any(d.startswith("ambiguous") for d in diags)
    return InterpretResult(operator=params, op_type=op_type, probabilities=dict(probs),
                           face_id=fid, ambiguous=ambiguous, diagnostics=tuple(diags))

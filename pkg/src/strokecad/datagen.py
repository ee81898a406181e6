"""Synthetic training-data pipeline: protocol generation, view sampling,
stroke perturbation, and map emission.

Protocols always start from the base box; each sample records the context
shape (the protocol minus its last step), the target operator, a sampled
camera, the perturbed strokes, and the rendered context plus ground-truth
maps. Everything is driven by per-sample seeded RNG streams, so a dataset is
byte-identical for a given seed regardless of how generation is scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import shapely

from .camera import Camera, make_camera
from .geometry import plane_basis, rotation_about_axis, sample_polyline, unit
from .mesh import PlanarFace, SolidModel
from .operators import (OP_ADDSUB, OP_BEVEL, OP_EXTRUDE, OP_SWEEP, OP_TYPES, AddSubParams,
                        BevelParams, ExtrudeParams, Operator, OperatorError, SweepParams,
                        apply, canonical_sketch, face_plane_mapping, face_screen_region,
                        find_crease, params_from_dict, params_to_dict, validate)
from .primitives import unit_box
from .protocol import Protocol, ProtocolStep, serialize_protocol
from .render import (ContextMaps, StrokeSet, read_s2cd, render_context, render_labels,
                     render_strokes, write_s2cd)

TYPE_RATIOS = {OP_EXTRUDE: 1, OP_BEVEL: 1, OP_ADDSUB: 4, OP_SWEEP: 2}
NOISE_LEVELS = {0: 0.0, 1: 0.014, 2: 0.028, 3: 0.041}   # of the image diagonal


class GenerationError(Exception):
    pass


@dataclass(frozen=True)
class GenConfig:
    protocols_per_length: int = 200       # paper-scale default is 10000
    lengths: tuple = (1, 2, 3, 4)
    view_angle_range: tuple = (20.0, 80.0)
    zoom_range: tuple = (1.6, 2.4)
    occlusion_reject: float = 0.20
    noise_level: int = 1
    seed: int = 0
    offset_range: tuple = (0.05, 0.6)     # extrude offsets and prism/sweep lengths
    max_retries: int = 40
    forced_last_op: str | None = None     # fix the last operator type (evaluation runs)


@dataclass
class DatasetRecord:
    sample_id: int
    protocol: Protocol        # prefix steps plus the target operator last
    op_type: str
    camera: Camera
    strokes: StrokeSet        # perturbed strokes, one per canonical curve
    stroke_classes: list
    maps: ContextMaps
    view_angle_deg: float
    zoom: float
    occlusion: float
    noise_level: int

    @property
    def prefix_len(self) -> int:
        return len(self.protocol) - 1

    @property
    def target(self) -> Operator:
        return self.protocol.steps[-1].op


# --- random operator instances -------------------------------------------------

def _usable_faces(m: SolidModel, min_area: float = 0.01):
    return [f for f in m.faces if f.area >= min_area]


def _point_in_face(face: PlanarFace, rng, margin: float):
    """A point of the face region at least `margin` from its boundary."""
    region = face_screen_region(face)
    shrunk = region.buffer(-margin)
    if shrunk.is_empty:
        return None
    to2d, to3d = face_plane_mapping(face)
    lo = np.array(shrunk.bounds[:2])
    hi = np.array(shrunk.bounds[2:])
    for _ in range(40):
        p = lo + rng.random(2) * (hi - lo)
        if shrunk.contains(shapely.Point(p)):
            return to3d(p)[0], float(region.exterior.distance(shapely.Point(p)))
    return None


def _random_extrude(m: SolidModel, rng, cfg: GenConfig):
    faces = _usable_faces(m)
    if not faces:
        raise OperatorError("no usable faces")
    face = faces[rng.integers(len(faces))]
    d = float(rng.uniform(*cfg.offset_range))
    if rng.random() < 0.5:
        d = -d
    return ExtrudeParams(face_id=face.id, offset=d)


def _random_polygon(rng, n: int, radius: float) -> np.ndarray:
    """A star-shaped (hence simple) N-gon around the origin."""
    ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    # keep corners separated so edges stay non-degenerate
    for _ in range(20):
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        if gaps.min() > 0.35:
            break
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    r = radius * rng.uniform(0.55, 1.0, n)
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)


def _random_addsub(m: SolidModel, rng, cfg: GenConfig):
    faces = _usable_faces(m)
    if not faces:
        raise OperatorError("no usable faces")
    face = faces[rng.integers(len(faces))]
    spot = _point_in_face(face, rng, margin=0.04)
    if spot is None:
        raise OperatorError("face too small for a polygon")
    center, clearance = spot
    n = int(rng.integers(3, 7))
    radius = min(clearance * 0.85, rng.uniform(0.06, 0.22))
    if radius < 0.02:
        raise OperatorError("no room for the base polygon")
    poly2 = _random_polygon(rng, n, radius)
    _, to3d = face_plane_mapping(face)
    to2d, _ = face_plane_mapping(face)
    c2 = to2d(center)[0]
    poly3 = to3d(poly2 + c2)
    option = "+" if rng.random() < 0.5 else "-"
    length = float(rng.uniform(*cfg.offset_range))
    return AddSubParams(face_id=face.id, base_polygon=poly3, profile_length=length, option=option)


def _random_bevel(m: SolidModel, rng, cfg: GenConfig):
    faces = _usable_faces(m)
    rng.shuffle(faces)
    for face in faces:
        loop = face.outer_loop
        order = rng.permutation(len(loop))
        for i in order:
            corner = loop[int(i)]
            prev_pt = loop[(int(i) - 1) % len(loop)]
            next_pt = loop[(int(i) + 1) % len(loop)]
            opposite = find_crease(m, face, corner)
            if opposite is None:
                continue
            e1 = next_pt - corner
            e2 = prev_pt - corner
            l1 = min(float(np.linalg.norm(e1)) * 0.7, 0.35)
            l2 = min(float(np.linalg.norm(e2)) * 0.7, 0.35)
            if min(l1, l2) < 0.04:
                continue
            t1 = rng.uniform(0.3, 1.0) * l1
            t2 = rng.uniform(0.3, 1.0) * l2
            p0 = corner + t1 * unit(e1)
            p3 = corner + t2 * unit(e2)
            u1, u2 = rng.uniform(0.25, 0.65, 2)
            profile = np.stack([p0, p0 + u1 * (corner - p0), p3 + u2 * (corner - p3), p3])
            return BevelParams(face_id=face.id, corner=corner, opposite_corner=opposite,
                               profile=profile)
    raise OperatorError("no beveled corner available")


def _random_sweep(m: SolidModel, rng, cfg: GenConfig):
    faces = _usable_faces(m)
    if not faces:
        raise OperatorError("no usable faces")
    face = faces[rng.integers(len(faces))]
    spot = _point_in_face(face, rng, margin=0.05)
    if spot is None:
        raise OperatorError("face too small for a circle")
    center, clearance = spot
    r0 = min(clearance * 0.8, float(rng.uniform(0.05, 0.18)))
    if r0 < 0.025:
        raise OperatorError("no room for the base circle")
    r1 = float(r0 * rng.uniform(0.65, 1.35))
    d = float(rng.uniform(*cfg.offset_range))
    option = "+" if rng.random() < 0.5 else "-"
    axis = face.normal if option == "+" else -face.normal
    u, _ = plane_basis(axis)
    u = rotation_about_axis(axis, float(rng.uniform(0, 2 * np.pi))) @ u
    bulge = rng.uniform(-0.2, 0.3, 2)
    radii = np.array([r0,
                      (r0 + (r1 - r0) / 3.0) * (1.0 + bulge[0]),
                      (r0 + 2.0 * (r1 - r0) / 3.0) * (1.0 + bulge[1]),
                      r1])
    radii = np.maximum(radii, 0.02)
    heights = np.array([0.0, d / 3.0, 2.0 * d / 3.0, d])
    profile = center[None, :] + heights[:, None] * axis[None, :] + radii[:, None] * u[None, :]
    return SweepParams(face_id=face.id, base_center=center, base_radius=r0,
                       offset_distance=d, offset_radius=float(r1), profile=profile,
                       option=option)


_SAMPLERS = {
    OP_EXTRUDE: _random_extrude,
    OP_BEVEL: _random_bevel,
    OP_ADDSUB: _random_addsub,
    OP_SWEEP: _random_sweep,
}


def _draw_type(rng) -> str:
    weights = np.array([TYPE_RATIOS[t] for t in OP_TYPES], dtype=np.float64)
    weights /= weights.sum()
    return OP_TYPES[int(rng.choice(len(OP_TYPES), p=weights))]


def _random_step(m: SolidModel, rng, cfg: GenConfig, op_type: str):
    """One feasible (operator, next_model) pair of the requested type."""
    last_err = None
    for _ in range(cfg.max_retries):
        try:
            op = _SAMPLERS[op_type](m, rng, cfg)
            nxt = apply(op, m)
            if nxt.is_empty() or not _usable_faces(nxt):
                raise OperatorError("operation degenerated the solid")
            return op, nxt
        except Exception as err:
            last_err = err
    raise GenerationError(f"could not sample a feasible {op_type}: {last_err}")


def generate_protocols(cfg: GenConfig):
    """Replay-valid random protocols, `protocols_per_length` per length.

    The last operator follows the 1:1:4:2 extrude:bevel:addsub:sweep ratios;
    prior context operators follow the same distribution.
    """
    out = []
    sample_id = 0
    for length in sorted(cfg.lengths):
        for _ in range(cfg.protocols_per_length):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, sample_id]))
            out.append(_generate_one_protocol(cfg, rng, length)[0])
            sample_id += 1
    return out


def _generate_one_protocol(cfg: GenConfig, rng, length: int):
    """(protocol, context_model, post_model) with the target as the last step."""
    last_err = None
    for _ in range(cfg.max_retries):
        try:
            model = unit_box()
            steps = []
            for _ in range(length - 1):
                op, model = _random_step(model, rng, cfg, _draw_type(rng))
                steps.append(ProtocolStep(op))
            target_type = cfg.forced_last_op or _draw_type(rng)
            context = model
            op, post = _random_step(model, rng, cfg, target_type)
            steps.append(ProtocolStep(op))
            return Protocol(steps=tuple(steps)), context, post
        except GenerationError as err:
            last_err = err
    raise GenerationError(f"protocol generation exhausted retries: {last_err}")


# --- view sampling ---------------------------------------------------------------

def _base_curves_for_occlusion(op: Operator, curves):
    if isinstance(op, ExtrudeParams):
        return [c for c in curves if c.cls == 1]      # the offset curves
    if isinstance(op, BevelParams):
        return [c for c in curves if c.cls == 1]      # l, on the base face
    on_face_cls = 0 if op.option == "+" else 2        # the polygon/circle on f
    return [c for c in curves if c.cls == on_face_cls]


def _occluded_fraction(points3d: np.ndarray, cam: Camera, view, face_bias: float,
                       on_surface: bool) -> float:
    """Fraction of curve samples hidden behind the rendered model.

    For curves riding a surface the test scans a 3x3 pixel neighbourhood: a
    sample is visible when some nearby pixel is empty-in-front or matches the
    sample's depth (rim points straddle walls whose pixel depth jumps)."""
    uv = cam.project(points3d)
    size = cam.image_size
    cols = np.clip(np.rint(uv[:, 0] * size - 0.5), 1, size - 2).astype(int)
    rows = np.clip(np.rint((1.0 - uv[:, 1]) * size - 0.5), 1, size - 2).astype(int)
    z = cam.depth(points3d)
    visible = np.zeros(len(points3d), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            zb = view.zbuf[rows + dr, cols + dc]
            ok = zb <= z + 1e-6
            if on_surface:
                ok |= np.abs(zb - z) <= face_bias
            visible |= ok
            if not on_surface and (dr, dc) == (0, 0):
                break
        if not on_surface:
            break
    return float(1.0 - visible.mean())


def sample_view(op: Operator, context: SolidModel, post: SolidModel, rng, cfg: GenConfig):
    """A camera over the sketch with the paper's angle band, zoom range, and
    occlusion filter; raises GenerationError after 100 consecutive rejections.

    Occlusion is tested against the context shape (the one being drawn over),
    except for push-in extrusions whose offset curve only exists on the result.
    Returns the accepted context render when it was computed, so emission can
    reuse it.
    """
    face = validate(op, context)
    n = face.normal
    u, v = plane_basis(n)
    lo, hi = np.deg2rad(cfg.view_angle_range[0]), np.deg2rad(cfg.view_angle_range[1])
    push_in = isinstance(op, ExtrudeParams) and op.offset < 0
    occluder = post if push_in else context
    floating = isinstance(op, ExtrudeParams) and op.offset > 0
    for _ in range(100):
        cos_t = rng.uniform(np.cos(hi), np.cos(lo))
        theta = float(np.arccos(cos_t))
        phi = float(rng.uniform(0.0, 2.0 * np.pi))
        toward = cos_t * n + np.sin(theta) * (np.cos(phi) * u + np.sin(phi) * v)
        view_dir = -unit(toward)
        base_up = plane_basis(view_dir)[0]
        roll = float(rng.uniform(0.0, 2.0 * np.pi))
        up = rotation_about_axis(view_dir, roll) @ base_up
        zoom = float(rng.uniform(*cfg.zoom_range))
        curves = canonical_sketch(op, context, view_dir=view_dir)
        pts = np.concatenate([c.points for c in curves])
        try:
            cam = make_camera(pts, view_dir, up, frustum_scale=zoom)
        except Exception:
            continue
        rendered = render_context(occluder, cam)
        slope = float(np.linalg.norm(np.cross(n, view_dir)) / max(abs(float(n @ view_dir)), 1e-6))
        face_bias = 3.0 * max(slope, 1.0) * (2.0 * cam.half_extent / cam.image_size) + 1e-6
        checked = _base_curves_for_occlusion(op, curves)
        samples = np.concatenate([sample_polyline(c.points, 64) for c in checked])
        occ = _occluded_fraction(samples, cam, rendered, face_bias, on_surface=not floating)
        if occ <= cfg.occlusion_reject:
            context_render = rendered if occluder is context else None
            return cam, curves, np.degrees(theta), zoom, occ, context_render
    raise GenerationError("view sampling: 100 consecutive occlusion rejections")


# --- stroke perturbation -----------------------------------------------------------

def perturb_strokes(strokes2d: list, level: int, rng) -> list:
    """Endpoint Gaussian displacement with interpolated interior offsets, small
    per-point jitter, and a 3-tap interior smoothing pass."""
    if level not in NOISE_LEVELS:
        raise ValueError(f"noise level {level} not in {sorted(NOISE_LEVELS)}")
    sigma = NOISE_LEVELS[level] * np.sqrt(2.0)   # image diagonal in [0,1]^2 units
    if sigma == 0.0:
        return [np.asarray(s, dtype=np.float64).copy() for s in strokes2d]
    out = []
    for s in strokes2d:
        s = np.asarray(s, dtype=np.float64)
        d0 = rng.normal(0.0, sigma, 2)
        d1 = rng.normal(0.0, sigma, 2)
        seg = np.linalg.norm(np.diff(s, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        t = arc / arc[-1] if arc[-1] > 0 else np.linspace(0, 1, len(s))
        disp = np.outer(1.0 - t, d0) + np.outer(t, d1)
        jitter = rng.normal(0.0, sigma / 4.0, s.shape)
        jitter[0] = 0.0
        jitter[-1] = 0.0
        p = s + disp + jitter
        if len(p) > 3:
            smooth = p.copy()
            smooth[1:-1] = (p[:-2] + p[1:-1] + p[2:]) / 3.0
            p = smooth
        out.append(p)
    return out


# --- sample emission ----------------------------------------------------------------

def _emit_from_models(protocol: Protocol, context: SolidModel, post: SolidModel,
                      cfg: GenConfig, rng, sample_id: int) -> DatasetRecord:
    op = protocol.steps[-1].op
    cam, curves, angle, zoom, occ, ctx_render = sample_view(op, context, post, rng, cfg)
    clean = [cam.project(c.points) for c in curves]
    noisy = perturb_strokes(clean, cfg.noise_level, rng)
    strokes = StrokeSet(noisy, cam)
    S, M = render_strokes(strokes)
    view = ctx_render if ctx_render is not None else render_context(context, cam)
    if not bool((view.Id == op.face_id).any()):
        # the base face never reached the screen; such a view cannot carry a
        # usable base-face map, so the sample is rejected and resampled
        raise GenerationError("base face invisible in the sampled view")
    face_id = op.face_id
    F_gt, C_gt = render_labels(list(zip(noisy, [c.cls for c in curves])), view.Id,
                               face_id, cam.image_size)
    maps = ContextMaps(S=S, D=view.D, N=view.N, Id=view.Id, M=M, F_gt=F_gt, C_gt=C_gt)
    return DatasetRecord(sample_id=sample_id, protocol=protocol,
                         op_type=op.op_name, camera=cam, strokes=strokes,
                         stroke_classes=[c.cls for c in curves], maps=maps,
                         view_angle_deg=angle, zoom=zoom, occlusion=occ,
                         noise_level=cfg.noise_level)


def emit_sample(protocol: Protocol, cfg: GenConfig, rng, sample_id: int = 0) -> DatasetRecord:
    """Build one dataset record for an existing protocol (replays it)."""
    from .protocol import execute
    context = execute(protocol, len(protocol) - 1)
    post = apply(protocol.steps[-1].op, context)
    return _emit_from_models(protocol, context, post, cfg, rng, sample_id)


def generate_dataset(cfg: GenConfig):
    """Yield DatasetRecords: protocols_per_length per sequence length.

    Per-record RNG streams are seeded from (cfg.seed, sample_id), making the
    dataset reproducible under any scheduling.
    """
    sample_id = 0
    for length in sorted(cfg.lengths):
        for _ in range(cfg.protocols_per_length):
            yield generate_record(cfg, sample_id, length)
            sample_id += 1


def generate_record(cfg: GenConfig, sample_id: int, length: int) -> DatasetRecord:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, sample_id]))
    last_err = None
    for _ in range(cfg.max_retries):
        try:
            protocol, context, post = _generate_one_protocol(cfg, rng, length)
            return _emit_from_models(protocol, context, post, cfg, rng, sample_id)
        except GenerationError as err:
            last_err = err
    raise GenerationError(f"sample {sample_id}: {last_err}")


# --- dataset files -------------------------------------------------------------------

_TENSORS = {
    "sketch": lambda r: r.maps.S,
    "depth": lambda r: r.maps.D,
    "normal": lambda r: r.maps.N,
    "faceid": lambda r: r.maps.Id.astype(np.float32),
    "mask": lambda r: r.maps.M,
    "face_gt": lambda r: r.maps.F_gt,
    "curve_gt": lambda r: r.maps.C_gt,
}


def write_record(record: DatasetRecord, out_dir: Path) -> Path:
    out = Path(out_dir) / f"sample_{record.sample_id:05d}"
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "sample_id": record.sample_id,
        "op_type": record.op_type,
        "prefix_len": record.prefix_len,
        "camera": record.camera.to_dict(),
        "view_angle_deg": record.view_angle_deg,
        "zoom": record.zoom,
        "occlusion": record.occlusion,
        "noise_level": record.noise_level,
        "protocol": json.loads(serialize_protocol(record.protocol)),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    strokes = {
        "strokes": [s.tolist() for s in record.strokes.strokes],
        "classes": [int(c) for c in record.stroke_classes],
    }
    (out / "strokes.json").write_text(json.dumps(strokes) + "\n", encoding="utf-8")
    for name, get in _TENSORS.items():
        write_s2cd(out / f"{name}.s2cd", np.asarray(get(record), dtype=np.float32))
    return out


def load_record(sample_dir: Path) -> DatasetRecord:
    sample_dir = Path(sample_dir)
    meta = json.loads((sample_dir / "meta.json").read_text(encoding="utf-8"))
    sdoc = json.loads((sample_dir / "strokes.json").read_text(encoding="utf-8"))
    from .protocol import parse_protocol
    protocol = parse_protocol(json.dumps(meta["protocol"]), validate_replay=False)
    cam = Camera.from_dict(meta["camera"])
    tensors = {name: read_s2cd(sample_dir / f"{name}.s2cd") for name in _TENSORS}
    maps = ContextMaps(S=tensors["sketch"], D=tensors["depth"], N=tensors["normal"],
                       Id=tensors["faceid"].astype(np.int32), M=tensors["mask"],
                       F_gt=tensors["face_gt"], C_gt=tensors["curve_gt"])
    strokes = StrokeSet([np.array(s, dtype=np.float64) for s in sdoc["strokes"]], cam)
    return DatasetRecord(sample_id=int(meta["sample_id"]), protocol=protocol,
                         op_type=meta["op_type"], camera=cam, strokes=strokes,
                         stroke_classes=[int(c) for c in sdoc["classes"]], maps=maps,
                         view_angle_deg=float(meta["view_angle_deg"]), zoom=float(meta["zoom"]),
                         occlusion=float(meta["occlusion"]), noise_level=int(meta["noise_level"]))


def write_dataset(cfg: GenConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for record in generate_dataset(cfg):
        paths.append(write_record(record, out_dir))
    return paths

"""Segmentation providers: the pluggable stand-ins for learned inference.

The oracle provider replays the ground-truth maps attached to a synthetic
sample. The heuristic provider classifies the sketch with a rule cascade over
stroke topology (closed loops, ellipse quality, translation similarity,
edge parallelism) and builds segmentation maps from the strokes themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import sample_polyline
from ..operators import OP_ADDSUB, OP_BEVEL, OP_EXTRUDE, OP_SWEEP, OP_TYPES
from ..render import render_labels
from .curves import CurveFitError, ellipse_max_deviation, fit_ellipse
from .fitters import (FitError, InterpretContext, _raster_of_normalized,
                      _stroke_band_likelihoods)

CHAIN_TOL = 0.015          # endpoint gap for chaining open strokes into loops
ELLIPSE_RESIDUAL = 0.02    # of the stroke bbox diagonal
BEVEL_SHAPE_TOL = 0.10     # mean deviation under translation, fraction of length
BEVEL_CREASE_TOL = 0.02    # endpoint distance to crease pixels, image units
PARALLEL_TOL_DEG = 10.0


class SegmentationProvider:
    """Interface: operator-type probabilities and (F, C) segmentation maps."""

    name = "abstract"

    def classify(self, ctx: InterpretContext) -> dict:
        raise NotImplementedError

    def segment(self, ctx: InterpretContext, op_type: str):
        raise NotImplementedError


@dataclass
class OracleProvider(SegmentationProvider):
    """Returns the ground-truth type and maps attached to a synthetic sample."""
    true_type: str
    F_gt: np.ndarray
    C_gt: np.ndarray
    name: str = "oracle"

    def classify(self, ctx: InterpretContext) -> dict:
        return {t: (1.0 if t == self.true_type else 0.0) for t in OP_TYPES}

    def segment(self, ctx: InterpretContext, op_type: str):
        return self.F_gt, self.C_gt


def _is_closed(stroke: np.ndarray) -> bool:
    bbox = stroke.max(axis=0) - stroke.min(axis=0)
    diag = float(np.hypot(*bbox))
    return float(np.linalg.norm(stroke[0] - stroke[-1])) <= max(0.1 * diag, 1e-4)


def _chain_loops(strokes: list[np.ndarray]):
    """Closed strokes plus greedy endpoint-chained loops of open strokes.

    Returns (loops, segment_indices): each loop is (points, member_indices);
    segment_indices are the open strokes that chained into no loop.
    """
    loops = []
    open_idx = []
    for i, s in enumerate(strokes):
        if _is_closed(s):
            loops.append((s, {i}))
        else:
            open_idx.append(i)
    in_loop: set[int] = set()
    tried: set[int] = set()
    for i in open_idx:
        if i in tried:
            continue
        chain = [strokes[i]]
        members = [i]
        tried.add(i)
        closed = False
        extended = True
        while extended and not closed:
            extended = False
            tail = chain[-1][-1]
            head = chain[0][0]
            if len(chain) >= 2 and np.linalg.norm(head - tail) < CHAIN_TOL:
                closed = True
                break
            for j in open_idx:
                if j in tried:
                    continue
                s = strokes[j]
                if np.linalg.norm(s[0] - tail) < CHAIN_TOL:
                    chain.append(s)
                elif np.linalg.norm(s[-1] - tail) < CHAIN_TOL:
                    chain.append(s[::-1])
                else:
                    continue
                tried.add(j)
                members.append(j)
                extended = True
                break
        pts = np.concatenate(chain)
        if closed or (len(chain) >= 2 and np.linalg.norm(pts[0] - pts[-1]) < CHAIN_TOL):
            loops.append((pts, set(members)))
            in_loop.update(members)
        else:
            # failed chain: release the extra members for other chains
            for j in members[1:]:
                tried.discard(j)
    segments = [i for i in open_idx if i not in in_loop]
    return loops, segments


def _loop_corner_count(loop: np.ndarray) -> int:
    """Corners of a closed polyline by turn-angle thresholding."""
    pts = loop[:-1] if np.linalg.norm(loop[0] - loop[-1]) < 1e-9 else loop
    pts = sample_polyline(np.concatenate([pts, pts[:1]]), 128)[:-1]
    prev = pts - np.roll(pts, 4, axis=0)
    nxt = np.roll(pts, -4, axis=0) - pts
    na = np.linalg.norm(prev, axis=1)
    nb = np.linalg.norm(nxt, axis=1)
    ok = (na > 1e-12) & (nb > 1e-12)
    cosang = np.clip(np.einsum("ij,ij->i", prev, nxt) / np.where(ok, na * nb, 1.0), -1, 1)
    turn = np.degrees(np.arccos(cosang))
    corner = (turn > 25.0) & ok
    # count corner clusters (consecutive runs collapse to one corner)
    count = 0
    run = False
    for flag in np.concatenate([corner, corner[:1]]):
        if flag and not run:
            count += 1
        run = bool(flag)
    if corner[0] and corner[-1] and count > 1:
        count -= 1
    return count


def _ellipse_quality(loop: np.ndarray) -> float:
    """Max deviation of the loop from its best ellipse, relative to bbox diagonal."""
    pts = sample_polyline(loop, 96)
    bbox = pts.max(axis=0) - pts.min(axis=0)
    diag = float(np.hypot(*bbox))
    if diag < 1e-9:
        return np.inf
    try:
        center, axes, angle = fit_ellipse(pts)
    except CurveFitError:
        return np.inf
    return ellipse_max_deviation(pts, center, axes, angle) / diag


def _translation_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Mean deviation of two curves after aligning centroids, over mean length."""
    pa = sample_polyline(a, 48)
    pb = sample_polyline(b, 48)
    pb_r = pb[::-1]
    da = pa - pa.mean(axis=0)
    la = float(np.linalg.norm(np.diff(pa, axis=0), axis=1).sum())
    lb = float(np.linalg.norm(np.diff(pb, axis=0), axis=1).sum())
    length = max((la + lb) / 2.0, 1e-9)
    dev_f = np.linalg.norm(da - (pb - pb.mean(axis=0)), axis=1).mean()
    dev_r = np.linalg.norm(da - (pb_r - pb_r.mean(axis=0)), axis=1).mean()
    return float(min(dev_f, dev_r)) / length


def _visible_boundary_dirs(ctx: InterpretContext, max_faces: int = 200):
    """Screen-space directions and segments of model feature edges.

    Uses the boundary loops of the largest planar faces (visible or not:
    sketchers trace hidden creases too).
    """
    faces = sorted(ctx.model.faces, key=lambda f: -f.area)[:max_faces]
    dirs = []
    segs = []
    for f in faces:
        for loop in f.loops:
            q = ctx.camera.project(loop)
            for i in range(len(q)):
                a, b = q[i], q[(i + 1) % len(q)]
                d = b - a
                n = np.linalg.norm(d)
                if n > 1e-6:
                    dirs.append(d / n)
                    segs.append((a, b))
    return dirs, segs


def _near_crease(ctx: InterpretContext, point: np.ndarray, segs) -> bool:
    for a, b in segs:
        ab = b - a
        t = np.clip(float((point - a) @ ab) / max(float(ab @ ab), 1e-18), 0.0, 1.0)
        if np.linalg.norm(point - (a + t * ab)) < BEVEL_CREASE_TOL:
            return True
    return False


class HeuristicProvider(SegmentationProvider):
    """Rule-cascade classifier plus stroke-derived segmentation maps."""

    name = "heuristic"

    def classify(self, ctx: InterpretContext) -> dict:
        strokes = ctx.strokes.strokes
        loops, segments = _chain_loops(strokes)
        chosen = None

        ellipse_loops = [lp for lp, _ in loops if _ellipse_quality(lp) < ELLIPSE_RESIDUAL]
        if len(ellipse_loops) >= 2:
            chosen = OP_SWEEP

        if chosen is None and len(strokes) == 2 and not loops:
            a, b = strokes
            if _translation_similarity(a, b) < BEVEL_SHAPE_TOL:
                _, segs = _visible_boundary_dirs(ctx)
                ends = [a[0], a[-1], b[0], b[-1]]
                if all(_near_crease(ctx, p, segs) for p in ends):
                    chosen = OP_BEVEL

        if chosen is None:
            if not loops and len(segments) <= 1:
                raise FitError("heuristic-classify", "unrecognized sketch")
            if len(loops) == 1 and segments:
                loop_pts, members = loops[0]
                n = len(members) if len(members) >= 3 else _loop_corner_count(loop_pts)
                if 3 <= n <= 6:
                    dirs, _ = _visible_boundary_dirs(ctx)
                    edges = np.diff(sample_polyline(loop_pts, n + 1), axis=0)
                    par = 0
                    for e in edges:
                        ne = np.linalg.norm(e)
                        if ne < 1e-9:
                            continue
                        u = e / ne
                        if any(abs(float(u @ d)) > np.cos(np.deg2rad(PARALLEL_TOL_DEG)) for d in dirs):
                            par += 1
                    if par * 2 >= len(edges):
                        chosen = OP_EXTRUDE
            if chosen is None:
                chosen = OP_ADDSUB

        return {t: (1.0 if t == chosen else 0.0) for t in OP_TYPES}

    def segment(self, ctx: InterpretContext, op_type: str):
        strokes = ctx.strokes.strokes
        size = ctx.camera.image_size
        labeled = self._label_strokes(ctx, op_type)
        fid = self._guess_face(ctx, labeled, op_type)
        F, C = render_labels(labeled, ctx.view.Id, fid, size)
        return F, C

    def _label_strokes(self, ctx: InterpretContext, op_type: str):
        strokes = ctx.strokes.strokes
        loops, segment_ids = _chain_loops(strokes)
        seg_set = set(segment_ids)
        labeled = []
        if op_type == OP_EXTRUDE:
            for i, s in enumerate(strokes):
                labeled.append((s, 0 if i in seg_set else 1))
            return labeled
        if op_type == OP_BEVEL:
            # l lies on the base face, so it overlaps foreground pixels more
            scores = []
            size = ctx.camera.image_size
            for s in strokes:
                uv = _raster_of_normalized(sample_polyline(s, 48), size)
                cols = np.clip(np.rint(uv[:, 0]), 0, size - 1).astype(int)
                rows = np.clip(np.rint(uv[:, 1]), 0, size - 1).astype(int)
                scores.append(float((ctx.view.Id[rows, cols] > 0).mean()))
            l_idx = int(np.argmax(scores))
            for i, s in enumerate(strokes):
                labeled.append((s, 1 if i == l_idx else 0))
            return labeled
        # add/subtract and sweep share start/profile/end labels
        closed_ids = [i for i, s in enumerate(strokes) if _is_closed(s)]
        if len(closed_ids) >= 2:
            areas = [float(np.prod(strokes[i].max(axis=0) - strokes[i].min(axis=0)))
                     for i in closed_ids]
            order = np.argsort(areas)[::-1][:2]
            ia, ib = closed_ids[int(order[0])], closed_ids[int(order[1])]
            nf = self._normal_screen_dir(ctx)
            ca, cb = strokes[ia].mean(axis=0), strokes[ib].mean(axis=0)
            start_i, end_i = (ia, ib) if float((cb - ca) @ nf) >= 0 else (ib, ia)
            for i, s in enumerate(strokes):
                labeled.append((s, 0 if i == start_i else (2 if i == end_i else 1)))
        else:
            for s in strokes:
                labeled.append((s, 1))
        return labeled

    def _normal_screen_dir(self, ctx: InterpretContext) -> np.ndarray:
        """Projected direction of the most likely base-face normal; falls back
        to image-up when the view is face-on."""
        ids, counts = np.unique(ctx.view.Id[ctx.view.Id > 0], return_counts=True)
        if len(ids) == 0:
            return np.array([0.0, 1.0])
        face = ctx.model.face_by_id(int(ids[np.argmax(counts)]))
        p0 = ctx.camera.project(face.centroid)
        p1 = ctx.camera.project(face.centroid + 0.1 * face.normal)
        d = p1 - p0
        n = np.linalg.norm(d)
        return d / n if n > 1e-9 else np.array([0.0, 1.0])

    def _guess_face(self, ctx: InterpretContext, labeled, op_type: str) -> int:
        """Face whose visible region best contains the base curve."""
        candidates = [pts for pts, cls in labeled if cls == 0] or [pts for pts, cls in labeled]
        pts = sample_polyline(candidates[0], 64)
        uv = _raster_of_normalized(pts, ctx.camera.image_size)
        size = ctx.camera.image_size
        cols = np.clip(np.rint(uv[:, 0]), 0, size - 1).astype(int)
        rows = np.clip(np.rint(uv[:, 1]), 0, size - 1).astype(int)
        # vote over the face ids under and around the base curve
        votes = {}
        for dr in (-2, 0, 2):
            for dc in (-2, 0, 2):
                rr = np.clip(rows + dr, 0, size - 1)
                cc = np.clip(cols + dc, 0, size - 1)
                for fid in ctx.view.Id[rr, cc]:
                    if fid > 0:
                        votes[int(fid)] = votes.get(int(fid), 0) + 1
        if not votes:
            raise FitError("heuristic-segment", "base curve is over background")
        return max(sorted(votes), key=lambda k: votes[k])


def make_provider(name: str, record=None) -> SegmentationProvider:
    """Provider registry: "oracle" (needs a dataset record) or "heuristic"."""
    if name == "heuristic":
        return HeuristicProvider()
    if name == "oracle":
        if record is None:
            raise ValueError("oracle provider needs a dataset record with ground-truth maps")
        return OracleProvider(true_type=record.op_type, F_gt=record.maps.F_gt,
                              C_gt=record.maps.C_gt)
    raise ValueError(f"unknown provider {name!r}")

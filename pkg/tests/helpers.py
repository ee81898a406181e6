"""Shared fixtures for fitting and service tests: canonical sketch samples."""

import numpy as np

from strokecad.camera import make_camera
from strokecad.fitting import OracleProvider
from strokecad.geometry import unit
from strokecad.operators import canonical_sketch
from strokecad.render import StrokeSet, render_context, render_labels, render_strokes

E = 1.0 / np.sqrt(3.0)
TOP = E / 2.0


def top_face(m):
    return max(m.faces, key=lambda f: float(f.normal[2]))


def make_clean_sample(model, op, view_dir, up=(0.0, 0.0, 1.0), zoom=2.0):
    """Project the canonical sketch of `op` and build aligned oracle maps."""
    view_dir = unit(np.asarray(view_dir, dtype=np.float64))
    curves = canonical_sketch(op, model, view_dir=view_dir)
    pts = np.concatenate([c.points for c in curves])
    cam = make_camera(pts, view_dir, np.asarray(up, dtype=np.float64), frustum_scale=zoom)
    strokes2d = [cam.project(c.points) for c in curves]
    stroke_set = StrokeSet(strokes2d, cam)
    view = render_context(model, cam)
    F, C = render_labels([(s, c.cls) for s, c in zip(strokes2d, curves)],
                         view.Id, op.face_id, cam.image_size)
    provider = OracleProvider(op.op_name, F, C)
    return stroke_set, cam, view, provider, curves

"""
Sketch interpretation round trip
================================

Takes a known operator, draws its canonical sketch through a camera, builds
the aligned ground-truth maps, and runs the inverse pipeline to recover the
operator. Shows both the oracle provider (perfect segmentation) and the
heuristic provider (rule-based classification from stroke topology).
"""

import numpy as np

from strokecad.camera import make_camera
from strokecad.fitting import HeuristicProvider, OracleProvider, interpret
from strokecad.geometry import unit
from strokecad.operators import SweepParams, canonical_sketch
from strokecad.primitives import unit_box
from strokecad.render import StrokeSet, render_context, render_labels

E = 1.0 / np.sqrt(3.0)

# %% the operator to recover: a tapered swept boss on the top face
box = unit_box()
face = max(box.faces, key=lambda f: float(f.normal[2]))
c0 = np.array([0.02, -0.04, E / 2.0])
r0, r1, d = 0.12, 0.09, 0.2
profile = np.array([c0 + [r0, 0, 0], c0 + [0.124, 0, d / 3],
                    c0 + [0.1, 0, 2 * d / 3], c0 + [r1, 0, d]])
truth = SweepParams(face_id=face.id, base_center=c0, base_radius=r0,
                    offset_distance=d, offset_radius=r1, profile=profile, option="+")

# %% draw it: canonical curves projected through a three-quarter camera
view_dir = unit([-0.55, -0.7, -0.9])
curves = canonical_sketch(truth, box, view_dir=view_dir)
cam = make_camera(np.concatenate([c.points for c in curves]), view_dir, [0, 0, 1])
strokes = StrokeSet([cam.project(c.points) for c in curves], cam)
print(f"drawn {len(strokes.strokes)} strokes "
      f"({sum(len(s) for s in strokes.strokes)} points)")

# %% context + ground-truth maps for the oracle provider
view = render_context(box, cam)
F, C = render_labels([(cam.project(c.points), c.cls) for c in curves], view.Id, face.id)
oracle = OracleProvider(truth.op_name, F, C)

res = interpret(box, strokes, oracle)
fit = res.operator
print("oracle provider:")
print(f"  type       {res.op_type}")
print(f"  base face  {res.face_id} (truth {face.id})")
print(f"  radius     {fit.base_radius:.4f} / {fit.offset_radius:.4f} "
      f"(truth {r0:.4f} / {r1:.4f})")
print(f"  distance   {fit.offset_distance:.4f} (truth {d:.4f})")

# %% the heuristic provider classifies from stroke topology alone
res2 = interpret(box, strokes, HeuristicProvider())
print("heuristic provider:")
print(f"  type       {res2.op_type}")
print(f"  distance   {res2.operator.offset_distance:.4f}")

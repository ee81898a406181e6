"""
Scripted modeling session
=========================

Builds a small part step by step through the protocol layer: pull the top face
up, cut a pocket, add a swept boss, round a corner. Each step replays from the
base box, so the whole session is a replayable text file at the end.
"""

import numpy as np

from strokecad.operators import AddSubParams, BevelParams, ExtrudeParams, SweepParams
from strokecad.primitives import unit_box
from strokecad.protocol import Protocol, execute, serialize_protocol

E = 1.0 / np.sqrt(3.0)


def top_face(model):
    return max(model.faces, key=lambda f: float(f.normal[2]))


# %% start from the unit-diagonal base box
proto = Protocol()
model = execute(proto)
print(f"base box: volume={model.volume():.6f}, faces={len(model.faces)}")

# %% pull the top face up by 0.25
f = top_face(model)
proto = proto.appended(ExtrudeParams(face_id=f.id, offset=0.25), "raise the blank")
model = execute(proto)
print(f"after extrude: volume={model.volume():.6f}")

# %% cut a rectangular pocket into the new top
f = top_face(model)
z = float(f.offset)
pocket = np.array([[-0.16, -0.10, z], [0.10, -0.10, z], [0.10, 0.10, z], [-0.16, 0.10, z]])
proto = proto.appended(AddSubParams(face_id=f.id, base_polygon=pocket,
                                    profile_length=0.12, option="-"), "pocket")
model = execute(proto)
print(f"after pocket: volume={model.volume():.6f}")

# %% add a swept boss next to the pocket
f = top_face(model)
c0 = np.array([0.18, 0.18, z])
r0, r1, d = 0.06, 0.045, 0.16
profile = np.array([c0 + [r0, 0, 0], c0 + [0.062, 0, d / 3],
                    c0 + [0.05, 0, 2 * d / 3], c0 + [r1, 0, d]])
proto = proto.appended(SweepParams(face_id=f.id, base_center=c0, base_radius=r0,
                                   offset_distance=d, offset_radius=r1,
                                   profile=profile, option="+"), "boss")
model = execute(proto)
print(f"after sweep: volume={model.volume():.6f}, faces={len(model.faces)}")

# %% round one top corner with a bevel
f = top_face(model)
loop = f.outer_loop
corner = loop[0]
p0 = corner + 0.35 * (loop[1] - corner)
p3 = corner + 0.35 * (loop[-1] - corner)
bezier = np.array([p0, p0 + 0.4 * (corner - p0), p3 + 0.4 * (corner - p3), p3])
opposite = corner.copy()
opposite[2] = -E / 2.0
proto = proto.appended(BevelParams(face_id=f.id, corner=corner,
                                   opposite_corner=opposite, profile=bezier), "round corner")
model = execute(proto)
print(f"after bevel: volume={model.volume():.6f}, faces={len(model.faces)}")

# %% save the protocol and the mesh
with open("session.s2c.json", "w") as fh:
    fh.write(serialize_protocol(proto))
with open("session.obj", "w") as fh:
    fh.write(model.to_obj())
print("wrote session.s2c.json and session.obj")
print("replay with: strokecad replay session.s2c.json --export replayed.obj")

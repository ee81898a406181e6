"""Orthographic camera: projection to [0,1]^2 image coordinates and back-projection.

The camera looks along `eye_dir`. Image x runs along `right = eye_dir x up`,
image y along `up_ortho = right x eye_dir`; a point at `center` projects to
(0.5, 0.5) and `center + half_extent * right` to (1.0, 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import unit

IMAGE_SIZE = 256


class CameraError(Exception):
    pass


@dataclass(frozen=True)
class Camera:
    eye_dir: np.ndarray       # unit vector, camera -> scene
    up: np.ndarray            # roll hint, not necessarily orthogonal to eye_dir
    center: np.ndarray
    half_extent: float
    image_size: int = IMAGE_SIZE

    def __post_init__(self):
        d = unit(self.eye_dir)
        u = np.asarray(self.up, dtype=np.float64)
        if abs(float(d @ unit(u))) > 1.0 - 1e-9:
            raise CameraError("up vector parallel to view direction")
        if not self.half_extent > 0:
            raise CameraError("half_extent must be positive")
        object.__setattr__(self, "eye_dir", d)
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    @property
    def right(self) -> np.ndarray:
        return unit(np.cross(self.eye_dir, self.up))

    @property
    def up_ortho(self) -> np.ndarray:
        return np.cross(self.right, self.eye_dir)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project 3D points to [0,1]^2 image coordinates (x right, y up)."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.center
        x = p @ self.right / (2.0 * self.half_extent) + 0.5
        y = p @ self.up_ortho / (2.0 * self.half_extent) + 0.5
        out = np.stack([x, y], axis=1)
        return out[0] if np.asarray(points).ndim == 1 else out

    def depth(self, points: np.ndarray) -> np.ndarray:
        """Camera-space depth; larger values are closer to the camera."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.center
        z = -(p @ self.eye_dir)
        return z[0] if np.asarray(points).ndim == 1 else z

    def camera_frame(self) -> np.ndarray:
        """Rows are the camera basis (right, up_ortho, -eye_dir)."""
        return np.stack([self.right, self.up_ortho, -self.eye_dir])

    def back_project(self, q, normal, offset: float) -> np.ndarray:
        """Lift an image point onto the plane {p . normal = offset}."""
        q = np.asarray(q, dtype=np.float64)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        n = np.asarray(normal, dtype=np.float64)
        denom = float(n @ self.eye_dir)
        if abs(denom) < 1e-6:
            raise CameraError("plane parallel to view")
        origin = (self.center[None, :]
                  + (q[:, 0, None] - 0.5) * 2.0 * self.half_extent * self.right[None, :]
                  + (q[:, 1, None] - 0.5) * 2.0 * self.half_extent * self.up_ortho[None, :])
        t = (offset - origin @ n) / denom
        pts = origin + t[:, None] * self.eye_dir[None, :]
        return pts[0] if single else pts

    def to_dict(self) -> dict:
        return {
            "eye_dir": [float(x) for x in self.eye_dir],
            "up": [float(x) for x in self.up],
            "center": [float(x) for x in self.center],
            "half_extent": float(self.half_extent),
            "image_size": int(self.image_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(eye_dir=np.array(d["eye_dir"], dtype=np.float64),
                   up=np.array(d["up"], dtype=np.float64),
                   center=np.array(d["center"], dtype=np.float64),
                   half_extent=float(d["half_extent"]),
                   image_size=int(d.get("image_size", IMAGE_SIZE)))


def make_camera(curve_points: np.ndarray, view_dir, up, frustum_scale: float = 2.0,
                image_size: int = IMAGE_SIZE) -> Camera:
    """Camera framing a set of 3D points.

    The square frustum is centered on the points' projected bounding box; its
    side equals `frustum_scale` times the box's larger dimension (the default 2
    puts the sketch in the central half of the image).
    """
    pts = np.asarray(curve_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise CameraError("no points to frame")
    d = unit(np.asarray(view_dir, dtype=np.float64))
    u = np.asarray(up, dtype=np.float64)
    if abs(float(d @ unit(u))) > 1.0 - 1e-9:
        raise CameraError("up vector parallel to view direction")
    right = unit(np.cross(d, u))
    up_o = np.cross(right, d)
    x = pts @ right
    y = pts @ up_o
    z = pts @ d
    w, h = x.max() - x.min(), y.max() - y.min()
    dim = max(w, h)
    if dim < 1e-12:
        raise CameraError("zero-area sketch bounding box")
    cx, cy = (x.max() + x.min()) / 2.0, (y.max() + y.min()) / 2.0
    cz = (z.max() + z.min()) / 2.0
    center = cx * right + cy * up_o + cz * d
    return Camera(eye_dir=d, up=u, center=center,
                  half_extent=frustum_scale * dim / 2.0, image_size=image_size)

"""Software rasterizer for the network-facing context maps.

Produces the 256x256 maps: sketch S, depth D, normal N, face-id Id, stroke
mask M, and the ground-truth base-face / curve-label maps. Rasterization uses
pixel-center sampling with a top-left fill convention and breaks z-ties toward
the lower triangle index, so renders are bit-reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .mesh import SolidModel, triangle_normals

IMAGE_SIZE = 256
S2CD_MAGIC = b"S2CD"


@dataclass
class StrokeSet:
    """Ordered 2D polyline strokes in normalized image coordinates plus the
    camera the user sketched through."""
    strokes: list
    camera: Camera

    def __post_init__(self):
        cleaned = []
        for s in self.strokes:
            arr = np.asarray(s, dtype=np.float64).reshape(-1, 2)
            if len(arr) < 2:
                raise ValueError("each stroke needs at least 2 points")
            if not np.all(np.isfinite(arr)):
                raise ValueError("stroke points must be finite")
            cleaned.append(arr)
        self.strokes = cleaned


@dataclass
class ContextMaps:
    S: np.ndarray                    # sketch, binary float32
    D: np.ndarray                    # depth in [0, 1], 0 = background/farthest
    N: np.ndarray                    # camera-space normal + (1, 1, 1)
    Id: np.ndarray                   # planar-face id, 0 = background
    M: np.ndarray                    # stroke mask
    F_gt: np.ndarray | None = None   # ground-truth base-face map
    C_gt: np.ndarray | None = None   # ground-truth curve-class map


@dataclass
class RenderedView:
    D: np.ndarray
    N: np.ndarray
    Id: np.ndarray
    zbuf: np.ndarray                 # raw camera-space depth, -inf = background
    camera: Camera


def _raster_coords(cam: Camera, points: np.ndarray) -> np.ndarray:
    """Continuous raster coordinates: u right, v down, pixel centers at integers."""
    q = cam.project(points)
    size = cam.image_size
    u = q[:, 0] * size - 0.5
    v = (1.0 - q[:, 1]) * size - 0.5
    return np.stack([u, v], axis=1)


def render_context(m: SolidModel, cam: Camera) -> RenderedView:
    """Z-buffer rasterization of the model: depth, shifted camera normals, face ids.

    A model outside the frustum yields all-background maps.
    """
    size = cam.image_size
    zbuf = np.full((size, size), -np.inf)
    idmap = np.zeros((size, size), dtype=np.int32)
    nmap = np.zeros((size, size, 3), dtype=np.float64)

    if not m.is_empty():
        ruv = _raster_coords(cam, m.vertices)
        zs = cam.depth(m.vertices)
        normals, area2 = triangle_normals(m.vertices, m.triangles)
        frame = cam.camera_frame()
        cam_normals = normals @ frame.T
        face_of = m.face_of_triangle
        eye = cam.eye_dir
        tp = ruv[m.triangles]                       # (T, 3, 2)
        lo = tp.min(axis=1)
        hi = tp.max(axis=1)
        keep = ((normals @ eye < 0.0) & (area2 > 1e-14)
                & (hi[:, 0] >= 0) & (lo[:, 0] <= size - 1)
                & (hi[:, 1] >= 0) & (lo[:, 1] <= size - 1))
        lo_ui = np.maximum(np.ceil(lo[:, 0]).astype(np.int64), 0)
        hi_ui = np.minimum(np.floor(hi[:, 0]).astype(np.int64), size - 1)
        lo_vi = np.maximum(np.ceil(lo[:, 1]).astype(np.int64), 0)
        hi_vi = np.minimum(np.floor(hi[:, 1]).astype(np.int64), size - 1)
        keep &= (lo_ui <= hi_ui) & (lo_vi <= hi_vi)

        for ti in np.nonzero(keep)[0]:
            tri = m.triangles[ti]
            p0, p1, p2 = tp[ti, 0], tp[ti, 1], tp[ti, 2]
            area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
            if area == 0.0:
                continue
            if area < 0.0:
                p1, p2 = p2, p1
                z0, z1, z2 = zs[tri[0]], zs[tri[2]], zs[tri[1]]
                area = -area
            else:
                z0, z1, z2 = zs[tri[0]], zs[tri[1]], zs[tri[2]]
            lo_u, hi_u = int(lo_ui[ti]), int(hi_ui[ti])
            lo_v, hi_v = int(lo_vi[ti]), int(hi_vi[ti])
            uu = np.arange(lo_u, hi_u + 1, dtype=np.float64)
            vv = np.arange(lo_v, hi_v + 1, dtype=np.float64)
            U, V = np.meshgrid(uu, vv)
            cover = np.ones(U.shape, dtype=bool)
            edges = []
            for a, b in ((p0, p1), (p1, p2), (p2, p0)):
                E = (b[0] - a[0]) * (V - a[1]) - (b[1] - a[1]) * (U - a[0])
                dx, dy = b[0] - a[0], b[1] - a[1]
                top_left = (dy < 0.0) or (dy == 0.0 and dx < 0.0)
                cover &= (E > 0.0) | ((E == 0.0) & top_left)
                edges.append(E)
            if not cover.any():
                continue
            lam1 = edges[2] / area   # weight of p1
            lam2 = edges[0] / area   # weight of p2
            z = z0 + lam1 * (z1 - z0) + lam2 * (z2 - z0)
            rows = np.arange(lo_v, hi_v + 1)[:, None]
            cols = np.arange(lo_u, hi_u + 1)[None, :]
            win = cover & (z > zbuf[lo_v:hi_v + 1, lo_u:hi_u + 1])
            if not win.any():
                continue
            sub = zbuf[lo_v:hi_v + 1, lo_u:hi_u + 1]
            sub[win] = z[win]
            idmap[lo_v:hi_v + 1, lo_u:hi_u + 1][win] = face_of[ti]
            nmap[lo_v:hi_v + 1, lo_u:hi_u + 1][win] = cam_normals[ti] + 1.0

    fg = idmap != 0
    D = np.zeros((size, size), dtype=np.float64)
    if fg.any():
        zvals = zbuf[fg]
        zmin, zmax = float(zvals.min()), float(zvals.max())
        if zmax - zmin > 1e-9:
            D[fg] = (zbuf[fg] - zmin) / (zmax - zmin)
        else:
            D[fg] = 1.0  # degenerate range: everything is the closest depth
    return RenderedView(D=D, N=nmap, Id=idmap, zbuf=zbuf, camera=cam)


def _stroke_pixels(points: np.ndarray, size: int) -> list[tuple[int, int]]:
    """Bresenham pixels of a polyline given in normalized [0,1]^2 coordinates."""
    u = np.rint(points[:, 0] * size - 0.5).astype(np.int64)
    v = np.rint((1.0 - points[:, 1]) * size - 0.5).astype(np.int64)
    out = []
    for k in range(len(points) - 1):
        x0, y0, x1, y1 = int(u[k]), int(v[k]), int(u[k + 1]), int(v[k + 1])
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        x, y = x0, y0
        while True:
            if 0 <= x < size and 0 <= y < size:
                out.append((y, x))
            if x == x1 and y == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x += sx
            if e2 <= dx:
                err += dx
                y += sy
    return out


def render_strokes(strokes: StrokeSet) -> tuple[np.ndarray, np.ndarray]:
    """1-pixel-wide rasterization: the sketch map S and the stroke mask M."""
    size = strokes.camera.image_size
    S = np.zeros((size, size), dtype=np.float64)
    for s in strokes.strokes:
        for r, c in _stroke_pixels(s, size):
            S[r, c] = 1.0
    return S, S.copy()


def render_labels(labeled_strokes_2d: list[tuple[np.ndarray, int]], idmap: np.ndarray,
                  face_id: int, image_size: int = IMAGE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth maps: base-face mask from the id map and the per-pixel
    curve-class map drawn from the labeled strokes (in stroke order)."""
    F = (idmap == face_id).astype(np.float64)
    C = np.zeros((image_size, image_size), dtype=np.float64)
    for points, cls in labeled_strokes_2d:
        for r, c in _stroke_pixels(np.asarray(points, dtype=np.float64), image_size):
            C[r, c] = float(cls)
    return F, C


# --- tensor file format: magic "S2CD", u32le dims (H, W, C), float32 row-major ---

def write_s2cd(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("S2CD tensors are HxW or HxWxC")
    with open(path, "wb") as fh:
        fh.write(S2CD_MAGIC)
        fh.write(struct.pack("<III", arr.shape[0], arr.shape[1], arr.shape[2]))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_s2cd(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != S2CD_MAGIC:
            raise ValueError(f"not an S2CD tensor file: magic {magic!r}")
        h, w, c = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(h * w * c * 4), dtype="<f4").reshape(h, w, c)
    return data[:, :, 0] if c == 1 else data


def map_to_png(path, array: np.ndarray) -> None:
    """8-bit PNG visualization; depth and normal channels quantize linearly."""
    from PIL import Image

    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 2:
        lo, hi = float(arr.min()), float(arr.max())
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        img = ((arr - lo) * scale).astype(np.uint8)
        Image.fromarray(img, mode="L").save(path)
    else:
        img = np.clip(arr / 2.0 * 255.0, 0, 255).astype(np.uint8)
        Image.fromarray(img, mode="RGB").save(path)


def shaded_png_bytes(view: RenderedView) -> bytes:
    """Simple deterministic shaded render with transparent background."""
    import io

    from PIL import Image

    fg = view.Id != 0
    n = view.N - 1.0
    light = np.array([0.408248290463863, 0.408248290463863, 0.816496580927726])
    lam = np.clip(n @ light, 0.0, 1.0)
    shade = (0.25 + 0.6 * lam + 0.15 * view.D) * fg
    rgba = np.zeros((*shade.shape, 4), dtype=np.uint8)
    gray = np.clip(shade * 255.0, 0, 255).astype(np.uint8)
    rgba[..., 0] = gray
    rgba[..., 1] = gray
    rgba[..., 2] = (np.clip(shade * 255.0 * 1.05, 0, 255)).astype(np.uint8)
    rgba[..., 3] = np.where(fg, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()

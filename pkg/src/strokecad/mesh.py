"""Solid models as closed triangle meshes with derived planar polygonal faces.

A SolidModel is immutable after construction. Construction always validates
that the mesh is closed, 2-manifold and consistently outward-oriented, and
partitions the triangles into planar faces by flooding across edges with a
dihedral-angle threshold below one degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import simplify_collinear, unit

WELD_TOL = 1e-7
DIHEDRAL_TOL_DEG = 1.0


class MeshError(Exception):
    """Raised when geometry violates the closed-manifold solid invariants."""


def weld_vertices(vertices: np.ndarray, triangles: np.ndarray, tol: float = WELD_TOL):
    """Merge vertices closer than `tol` and drop index-degenerate triangles.

    Uses grid hashing with neighbour-cell union so coincident points split by
    a cell boundary still merge.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    if len(vertices) == 0:
        return vertices.reshape(0, 3), triangles.reshape(-1, 3).astype(np.int32)
    keys = np.floor(vertices / tol + 0.5).astype(np.int64)

    parent = np.arange(len(vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    cells: dict[tuple, int] = {}
    for i, k in enumerate(map(tuple, keys)):
        if k in cells:
            union(i, cells[k])
        else:
            cells[k] = i
    # merge across adjacent cells when the actual points are within tol
    offsets = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
               if (dx, dy, dz) != (0, 0, 0)]
    tol2 = tol * tol
    for k, i in cells.items():
        for off in offsets:
            j = cells.get((k[0] + off[0], k[1] + off[1], k[2] + off[2]))
            if j is not None and find(i) != find(j):
                d = vertices[i] - vertices[j]
                if float(d @ d) <= tol2:
                    union(i, j)

    root = np.array([find(i) for i in range(len(vertices))])
    uniq, remap = np.unique(root, return_inverse=True)
    new_vertices = vertices[uniq]
    if len(triangles):
        new_tris = remap[triangles]
        a, b, c = new_tris[:, 0], new_tris[:, 1], new_tris[:, 2]
        keep = (a != b) & (b != c) & (c != a)
        new_tris = new_tris[keep]
    else:
        new_tris = triangles.reshape(-1, 3)
    return new_vertices, np.ascontiguousarray(new_tris, dtype=np.int32)


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray):
    """Per-triangle (unit normal, doubled area). Degenerate triangles get zero normal."""
    p = vertices[triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area2 = np.linalg.norm(n, axis=1)
    safe = np.where(area2 > 1e-300, area2, 1.0)
    return n / safe[:, None], area2


def signed_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    """Signed volume by summed tetrahedra against the origin."""
    if len(triangles) == 0:
        return 0.0
    p = vertices[triangles]
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def _directed_edges(triangles: np.ndarray) -> np.ndarray:
    return np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])


def validate_closed_manifold(vertices: np.ndarray, triangles: np.ndarray) -> None:
    """Raise MeshError unless every undirected edge is shared by exactly two
    triangles with opposite directions and every component has positive volume."""
    if len(triangles) == 0:
        return
    edges = _directed_edges(triangles)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    se = edges[order]
    dup = np.all(se[1:] == se[:-1], axis=1)
    if dup.any():
        bad = se[1:][dup][0]
        raise MeshError(f"repeated directed edge {tuple(int(x) for x in bad)}")
    key_f = edges[:, 0].astype(np.int64) * len(vertices) + edges[:, 1]
    key_r = edges[:, 1].astype(np.int64) * len(vertices) + edges[:, 0]
    if not np.array_equal(np.sort(key_f), np.sort(key_r)):
        missing = np.setdiff1d(key_f, key_r)
        v0, v1 = divmod(int(missing[0]), len(vertices)) if len(missing) else (-1, -1)
        raise MeshError(f"open or non-manifold edge near vertex pair ({v0}, {v1})")
    comp = connected_components(triangles)
    for cid in range(comp.max() + 1):
        vol = signed_volume(vertices, triangles[comp == cid])
        if vol <= 1e-12:
            raise MeshError(f"component {cid} has non-positive volume {vol:.3e}")


def connected_components(triangles: np.ndarray) -> np.ndarray:
    """Label triangles by edge-connected component."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc

    n = len(triangles)
    if n == 0:
        return np.zeros(0, dtype=np.int32)
    edges = _directed_edges(triangles)
    und = np.sort(edges, axis=1)
    tri_ids = np.tile(np.arange(n), 3)
    order = np.lexsort((und[:, 1], und[:, 0]))
    und, tri_ids = und[order], tri_ids[order]
    same = np.all(und[1:] == und[:-1], axis=1)
    rows = tri_ids[:-1][same]
    cols = tri_ids[1:][same]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = cc(graph, directed=False)
    return labels.astype(np.int32)


class PlanarFace:
    """A maximal group of near-coplanar adjacent triangles with its boundary loops.

    Loops are extracted lazily (models with curved tool solids carry thousands
    of small faces whose boundaries are never needed), simplified to drop
    collinear boundary vertices; the outer loop winds counter-clockwise about
    the face normal, holes clockwise.
    """

    __slots__ = ("id", "triangle_ids", "normal", "offset", "area", "centroid",
                 "bbox_min", "bbox_max", "_vertices", "_triangles", "_loops")

    def __init__(self, id, triangle_ids, normal, offset, area, centroid,
                 bbox_min, bbox_max, vertices, triangles):
        self.id = id
        self.triangle_ids = triangle_ids
        self.normal = normal
        self.offset = offset
        self.area = area
        self.centroid = centroid
        self.bbox_min = bbox_min
        self.bbox_max = bbox_max
        self._vertices = vertices
        self._triangles = triangles
        self._loops = None

    @property
    def loops(self) -> tuple:
        if self._loops is None:
            raw = _face_boundary_loops(self._vertices, self._triangles, self.triangle_ids)
            simplified = [simplify_collinear(lp, tol=1e-9) for lp in raw]
            areas = []
            for lp in simplified:
                c = np.cross(lp - lp.mean(axis=0), np.roll(lp, -1, axis=0) - lp.mean(axis=0)).sum(axis=0)
                areas.append(0.5 * float(c @ self.normal))
            order = np.argsort([-abs(a) for a in areas])
            self._loops = tuple(simplified[i] for i in order)
        return self._loops

    @property
    def outer_loop(self) -> np.ndarray:
        return self.loops[0]

    def diameter(self) -> float:
        """Max pairwise distance between boundary vertices."""
        pts = np.concatenate(self.loops)
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        return float(d.max())

    def corners(self) -> np.ndarray:
        """Vertices of the simplified outer loop."""
        return self.loops[0]


def _face_boundary_loops(vertices, triangles, tri_ids):
    """Ordered boundary loops (vertex index walks) of one planar face."""
    edge_owner = set()
    for t in tri_ids:
        a, b, c = (int(x) for x in triangles[t])
        edge_owner.update(((a, b), (b, c), (c, a)))
    boundary = [(u, v) for (u, v) in edge_owner if (v, u) not in edge_owner]
    nxt: dict[int, list[int]] = {}
    for u, v in sorted(boundary):
        nxt.setdefault(u, []).append(v)
    loops = []
    for s in sorted(nxt.keys()):
        while nxt.get(s):
            loop = [s]
            cur = s
            while True:
                outs = nxt.get(cur)
                if not outs:
                    break
                v = outs.pop(0)
                if v == loop[0]:
                    break
                loop.append(v)
                cur = v
            if len(loop) >= 3:
                loops.append(np.array([vertices[i] for i in loop]))
    return loops


def build_planar_faces(vertices: np.ndarray, triangles: np.ndarray) -> list[PlanarFace]:
    """Partition mesh triangles into planar faces by region growing.

    Adjacent triangles merge when their normals differ by less than one degree;
    zero-area triangles attach to whichever neighbouring face claims them first.
    """
    m = len(triangles)
    if m == 0:
        return []
    normals, area2 = triangle_normals(vertices, triangles)
    degenerate = area2 <= 1e-14

    edges = _directed_edges(triangles)
    und = np.sort(edges, axis=1)
    tri_ids = np.tile(np.arange(m), 3)
    order = np.lexsort((und[:, 1], und[:, 0]))
    und, tri_ids = und[order], tri_ids[order]
    adj: list[list[int]] = [[] for _ in range(m)]
    k = 0
    while k + 1 < len(und):
        if (und[k] == und[k + 1]).all():
            a, b = int(tri_ids[k]), int(tri_ids[k + 1])
            adj[a].append(b)
            adj[b].append(a)
            k += 2
        else:
            k += 1

    cos_tol = np.cos(np.deg2rad(DIHEDRAL_TOL_DEG))
    face_of = np.full(m, -1, dtype=np.int64)
    fid = 0
    for seed in range(m):
        if face_of[seed] >= 0 or degenerate[seed]:
            continue
        stack = [seed]
        face_of[seed] = fid
        while stack:
            t = stack.pop()
            ref = normals[t] if not degenerate[t] else None
            for nb in adj[t]:
                if face_of[nb] >= 0:
                    continue
                if degenerate[nb]:
                    face_of[nb] = fid
                    stack.append(nb)
                elif ref is not None and float(ref @ normals[nb]) >= cos_tol:
                    face_of[nb] = fid
                    stack.append(nb)
        fid += 1
    for t in range(m):
        if face_of[t] < 0:
            face_of[t] = fid
            fid += 1

    # vectorized per-face aggregates via reduceat on face-sorted triangles
    order2 = np.argsort(face_of, kind="stable")
    sorted_face = face_of[order2]
    starts = np.concatenate([[0], np.nonzero(np.diff(sorted_face))[0] + 1])
    tri_pts_all = vertices[triangles[order2]]                   # (m, 3, 3)
    w_all = area2[order2]
    wn = normals[order2] * w_all[:, None]
    wc = tri_pts_all.mean(axis=1) * w_all[:, None]
    sum_w = np.add.reduceat(w_all, starts)
    sum_n = np.add.reduceat(wn, starts, axis=0)
    sum_c = np.add.reduceat(wc, starts, axis=0)
    tlo = tri_pts_all.min(axis=1)
    thi = tri_pts_all.max(axis=1)
    lo_f = np.minimum.reduceat(tlo, starts, axis=0)
    hi_f = np.maximum.reduceat(thi, starts, axis=0)

    faces = []
    for k in range(len(starts)):
        f = int(sorted_face[starts[k]])
        s = starts[k]
        e = starts[k + 1] if k + 1 < len(starts) else len(sorted_face)
        ids = order2[s:e]
        if sum_w[k] > 1e-300:
            n = unit(sum_n[k])
            cent = sum_c[k] / sum_w[k]
        else:
            n = normals[ids[0]]
            cent = tri_pts_all[s].mean(axis=0)
        offset = float(cent @ n)
        faces.append(PlanarFace(id=f + 1, triangle_ids=np.sort(ids).astype(np.int32),
                                normal=n, offset=offset, area=float(0.5 * sum_w[k]),
                                centroid=cent, bbox_min=lo_f[k], bbox_max=hi_f[k],
                                vertices=vertices, triangles=triangles))
    return faces


class SolidModel:
    """Closed, consistently oriented triangle mesh plus derived planar faces."""

    __slots__ = ("vertices", "triangles", "faces", "_face_of_tri", "_volume")

    def __init__(self, vertices, triangles, validate: bool = True):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(triangles, dtype=np.int32).reshape(-1, 3))
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t
        if validate:
            validate_closed_manifold(v, t)
        self.faces = tuple(build_planar_faces(v, t))
        face_of = np.zeros(len(t), dtype=np.int32)
        for f in self.faces:
            face_of[f.triangle_ids] = f.id
        face_of.setflags(write=False)
        self._face_of_tri = face_of
        self._volume = signed_volume(v, t)

    @property
    def face_of_triangle(self) -> np.ndarray:
        """Planar-face id per triangle (ids start at 1; 0 is reserved for background)."""
        return self._face_of_tri

    def volume(self) -> float:
        return self._volume

    def face_by_id(self, fid: int) -> PlanarFace:
        for f in self.faces:
            if f.id == fid:
                return f
        raise KeyError(f"no planar face with id {fid}")

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            z = np.zeros(3)
            return z, z
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def translated(self, delta) -> "SolidModel":
        return SolidModel(self.vertices + np.asarray(delta, dtype=np.float64), self.triangles, validate=False)

    # --- OBJ import/export (vertices and triangles only) ---

    def to_obj(self) -> str:
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in self.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_obj(cls, text: str, validate: bool = True) -> "SolidModel":
        verts, tris = [], []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                ids = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(ids) - 1):
                    tris.append([ids[0], ids[k], ids[k + 1]])
        return cls(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(tris, dtype=np.int32).reshape(-1, 3), validate=validate)

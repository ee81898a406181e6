"""Boolean union and difference of closed triangle-mesh solids.

The two meshes are co-refined locally: every triangle that can touch the other
solid is split by the planes of the other solid's nearby triangles into convex
pieces, each piece is classified against the other solid (inside, outside, or
lying on its boundary with equal or opposite orientation), and the pieces the
requested operation keeps are stitched back together. Classification probes
generalized winding numbers a hair off each piece along its normal, which
resolves exactly coplanar face-on-face contacts without perturbing geometry.
A vertex weld and a T-junction repair pass make the result a conforming closed
2-manifold; if validation still fails, the boolean is reported as an error
rather than returning an open mesh.
"""

from __future__ import annotations

import numpy as np

from .mesh import MeshError, SolidModel, triangle_normals

EPS_SIDE = 1e-9     # plane-side epsilon for splitting, model units
PROBE_DELTA = 5e-7  # probe offset along the piece normal; must exceed the weld
                    # tolerance (welding can shift coincident surfaces ~1e-7)
                    # while staying far below real feature separations
WELD = 1e-7
ONSEG_TOL = 3e-7    # vertex-on-edge tolerance for T-junction repair
ONPLANE_TOL = 5e-7
CUT_EDGE_TOL = 1e-6
BBOX_PAD = 1e-6
DEGENERATE_AREA = 1e-13

IN, OUT, ON_SAME, ON_OPP = 0, 1, 2, 3


class BooleanError(Exception):
    """A boolean could not produce a valid closed solid."""


def generalized_winding(points: np.ndarray, vertices: np.ndarray, triangles: np.ndarray,
                        pair_budget: int = 2_000_000) -> np.ndarray:
    """Generalized winding number of each query point w.r.t. a closed mesh.

    Solid angles via the Van Oosterom-Strackee formula, summed over triangles.
    Near 1 inside, near 0 outside.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(triangles) == 0 or len(points) == 0:
        return np.zeros(len(points))
    tp = vertices[triangles]  # (T, 3, 3)
    T = len(triangles)
    out = np.empty(len(points))
    step = max(1, pair_budget // T)
    for s in range(0, len(points), step):
        q = points[s:s + step]
        r = tp[None, :, :, :] - q[:, None, None, :]      # (p, T, 3, 3)
        r0, r1, r2 = r[:, :, 0, :], r[:, :, 1, :], r[:, :, 2, :]
        l0 = np.sqrt(np.einsum("ptk,ptk->pt", r0, r0))
        l1 = np.sqrt(np.einsum("ptk,ptk->pt", r1, r1))
        l2 = np.sqrt(np.einsum("ptk,ptk->pt", r2, r2))
        cx = r1[:, :, 1] * r2[:, :, 2] - r1[:, :, 2] * r2[:, :, 1]
        cy = r1[:, :, 2] * r2[:, :, 0] - r1[:, :, 0] * r2[:, :, 2]
        cz = r1[:, :, 0] * r2[:, :, 1] - r1[:, :, 1] * r2[:, :, 0]
        det = r0[:, :, 0] * cx + r0[:, :, 1] * cy + r0[:, :, 2] * cz
        den = (l0 * l1 * l2 + np.einsum("ptk,ptk->pt", r0, r1) * l2
               + np.einsum("ptk,ptk->pt", r1, r2) * l0
               + np.einsum("ptk,ptk->pt", r2, r0) * l1)
        omega = 2.0 * np.arctan2(det, den)
        out[s:s + step] = omega.sum(axis=1) / (4.0 * np.pi)
    return out


def point_in_solid(points: np.ndarray, model: SolidModel) -> np.ndarray:
    """Boolean inside test for points strictly off the boundary."""
    return generalized_winding(points, model.vertices, model.triangles) > 0.5


def _split_convex(pts: np.ndarray, n: np.ndarray, w: float):
    """Split a convex polygon by plane {x . n = w}.

    Returns (front_pieces, back_pieces, touched) where touched means the plane
    either cut the polygon or contains one of its edges.
    """
    vals = (pts @ n - w).tolist()
    if min(vals) >= -EPS_SIDE:
        return [pts], [], _has_on_edge(vals)
    if max(vals) <= EPS_SIDE:
        return [], [pts], _has_on_edge(vals)
    side = [0 if abs(x) <= EPS_SIDE else (1 if x > 0 else -1) for x in vals]
    k = len(pts)
    front, back = [], []
    for i in range(k):
        j = (i + 1) % k
        if side[i] >= 0:
            front.append(pts[i])
        if side[i] <= 0:
            back.append(pts[i])
        if side[i] * side[j] < 0:
            t = vals[i] / (vals[i] - vals[j])
            x = pts[i] + t * (pts[j] - pts[i])
            front.append(x)
            back.append(x)
    f = [np.asarray(front)] if len(front) >= 3 else []
    b = [np.asarray(back)] if len(back) >= 3 else []
    return f, b, True


def _has_on_edge(vals: list) -> bool:
    k = len(vals)
    return any(abs(vals[i]) <= EPS_SIDE and abs(vals[(i + 1) % k]) <= EPS_SIDE for i in range(k))


def _tri_bboxes(v: np.ndarray, t: np.ndarray):
    p = v[t]
    return p.min(axis=1), p.max(axis=1)


def _candidate_pairs(va, ta, vb, tb, pad=BBOX_PAD):
    """AABB-overlapping triangle pairs between the meshes.

    Returns (cand_a, cand_b): per-triangle candidate index arrays for each
    side. B triangles hash into single grid cells (the cell size covers the
    largest B bbox), A triangles query their padded cell range.
    """
    cand_a: dict[int, np.ndarray] = {}
    cand_b: dict[int, np.ndarray] = {}
    if len(ta) == 0 or len(tb) == 0:
        return cand_a, cand_b
    loA, hiA = _tri_bboxes(va, ta)
    loB, hiB = _tri_bboxes(vb, tb)
    glo = np.maximum(loA.min(axis=0), loB.min(axis=0)) - pad
    ghi = np.minimum(hiA.max(axis=0), hiB.max(axis=0)) + pad
    if np.any(glo > ghi):
        return cand_a, cand_b
    inA = np.all(hiA >= glo, axis=1) & np.all(loA <= ghi, axis=1)
    inB = np.all(hiB >= glo, axis=1) & np.all(loB <= ghi, axis=1)
    maskA = np.nonzero(inA)[0]
    maskB = np.nonzero(inB)[0]
    if len(maskA) == 0 or len(maskB) == 0:
        return cand_a, cand_b
    extentB = float((hiB[maskB] - loB[maskB]).max())
    cell = max(float((ghi - glo).max()) / 32.0, extentB, 1e-4)

    centB = (loB[maskB] + hiB[maskB]) / 2.0
    keyB = np.floor((centB - glo) / cell).astype(np.int64)
    grid: dict[tuple, list[int]] = {}
    for row, k in enumerate(map(tuple, keyB)):
        grid.setdefault(k, []).append(int(maskB[row]))

    c0A = np.floor((loA[maskA] - pad - glo) / cell).astype(np.int64) - 1
    c1A = np.floor((hiA[maskA] + pad - glo) / cell).astype(np.int64) + 1
    pairs_a: list[tuple[int, np.ndarray]] = []
    rev: dict[int, list[int]] = {}
    for row in range(len(maskA)):
        ai = int(maskA[row])
        found: list[int] = []
        for x in range(c0A[row, 0], c1A[row, 0] + 1):
            for y in range(c0A[row, 1], c1A[row, 1] + 1):
                for z in range(c0A[row, 2], c1A[row, 2] + 1):
                    lst = grid.get((x, y, z))
                    if lst:
                        found.extend(lst)
        if not found:
            continue
        ids = np.array(sorted(set(found)), dtype=np.int64)
        ov = (np.all(loA[ai] <= hiB[ids] + pad, axis=1)
              & np.all(hiA[ai] >= loB[ids] - pad, axis=1))
        hits = ids[ov]
        if len(hits):
            cand_a[ai] = hits
            for bi in hits:
                rev.setdefault(int(bi), []).append(ai)
    for bi, lst in rev.items():
        cand_b[bi] = np.array(lst, dtype=np.int64)
    return cand_a, cand_b


def _area3(pts: np.ndarray) -> float:
    a = pts[1:-1] - pts[0]
    b = pts[2:] - pts[0]
    sx = float((a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]).sum())
    sy = float((a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]).sum())
    sz = float((a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]).sum())
    return 0.5 * (sx * sx + sy * sy + sz * sz) ** 0.5


class _Piece:
    __slots__ = ("pts", "normal", "area", "src", "was_split", "cls")

    def __init__(self, pts, normal, src, was_split, area=None):
        self.pts = pts
        self.normal = normal
        self.src = src
        self.was_split = was_split
        self.area = _area3(pts) if area is None else area
        self.cls = -1


def _split_side(v_self, t_self, cand, v_other, t_other):
    """Split this side's triangles by candidate planes of the other mesh.

    Returns (pieces, used_planes); used_planes are (normal, offset) of every
    other-mesh plane that cut or edge-touched some piece.
    """
    normals, area2_self = triangle_normals(v_self, t_self)
    o_normals, o_area2 = triangle_normals(v_other, t_other)
    loB, hiB = (None, None)
    if len(t_other):
        loB, hiB = _tri_bboxes(v_other, t_other)
    pieces: list[_Piece] = []
    used_planes: dict[tuple, list] = {}
    for ti in range(len(t_self)):
        tri_pts = v_self[t_self[ti]]
        n_self = normals[ti]
        cands = cand.get(ti)
        if cands is None or len(cands) == 0:
            pieces.append(_Piece(tri_pts, n_self, ti, False, area=0.5 * float(area2_self[ti])))
            continue
        # work items carry cached python-float bboxes to keep the hot loop cheap
        work = [(tri_pts, tri_pts.min(axis=0).tolist(), tri_pts.max(axis=0).tolist())]
        split_any = False
        for bj in cands:
            if o_area2[bj] <= 1e-14:
                continue
            nb = o_normals[bj]
            wb = float(nb @ v_other[t_other[bj][0]])
            bl = (loB[bj] - BBOX_PAD).tolist()
            bh = (hiB[bj] + BBOX_PAD).tolist()
            nxt = []
            touched_extent = None
            for item in work:
                P, plo, phi = item
                if (phi[0] < bl[0] or plo[0] > bh[0]
                        or phi[1] < bl[1] or plo[1] > bh[1]
                        or phi[2] < bl[2] or plo[2] > bh[2]):
                    nxt.append(item)
                    continue
                f, b, touched = _split_convex(P, nb, wb)
                if touched:
                    if touched_extent is None:
                        touched_extent = [list(plo), list(phi)]
                    else:
                        te = touched_extent
                        te[0] = [min(te[0][i], plo[i]) for i in range(3)]
                        te[1] = [max(te[1][i], phi[i]) for i in range(3)]
                    if f and b:
                        split_any = True
                        for Q in f + b:
                            nxt.append((Q, Q.min(axis=0).tolist(), Q.max(axis=0).tolist()))
                        continue
                for Q in f + b:
                    nxt.append((Q, plo, phi))
            work = nxt
            if touched_extent is not None:
                key = _plane_key(nb, wb)
                entry = used_planes.get(key)
                if entry is None:
                    used_planes[key] = [nb, wb, np.array(bl), np.array(bh),
                                        np.array(touched_extent[0]), np.array(touched_extent[1])]
                else:
                    np.minimum(entry[2], bl, out=entry[2])
                    np.maximum(entry[3], bh, out=entry[3])
                    np.minimum(entry[4], touched_extent[0], out=entry[4])
                    np.maximum(entry[5], touched_extent[1], out=entry[5])
        for P, _, _ in work:
            pieces.append(_Piece(P, n_self, ti, split_any))
    return pieces, [tuple(v) for v in used_planes.values()]


def _plane_key(n, w):
    v = np.array([n[0], n[1], n[2], w])
    for c in v[:3]:
        if abs(c) > 1e-12:
            if c < 0:
                v = -v
            break
    return tuple(np.round(v / 1e-8).astype(np.int64))


def _quantize(points: np.ndarray, tol: float = WELD) -> np.ndarray:
    return np.floor(points / tol + 0.5).astype(np.int64)


def _bit_rows(mask: np.ndarray) -> list[int]:
    """Pack each boolean row into a python int bitmask (vectorized in 62-bit words)."""
    n = mask.shape[1]
    words = []
    for s in range(0, n, 62):
        chunk = mask[:, s:s + 62].astype(np.int64)
        pows = (np.int64(1) << np.arange(chunk.shape[1], dtype=np.int64))
        words.append(chunk @ pows)
    if not words:
        return [0] * len(mask)
    out = words[0].tolist()
    for w, arr in enumerate(words[1:], start=1):
        shift = 62 * w
        vals = arr.tolist()
        out = [o | (v << shift) for o, v in zip(out, vals)]
    return out


def _classify_pieces(pieces: list[_Piece], cut_planes, v_other, t_other, exact: bool):
    """Assign IN/OUT/ON_SAME/ON_OPP to solid pieces via component-shared probes.

    Degenerate (near-zero-area) pieces get cls=-2 and are dropped later; the
    T-junction repair restores conformity where they would have been.
    """
    if not pieces:
        return
    # degenerate (zero-area) pieces stay in the mesh for edge pairing; they
    # join components like any piece and inherit the component class, but are
    # never probed themselves (their normals carry no information)
    solid_idx = list(range(len(pieces)))
    if not solid_idx:
        return
    all_pts = np.concatenate([pieces[i].pts for i in solid_idx])
    counts = np.array([len(pieces[i].pts) for i in solid_idx])
    starts = np.concatenate([[0], np.cumsum(counts)])
    keys = _quantize(all_pts)
    _, vid = np.unique(keys, axis=0, return_inverse=True)
    vid = vid.reshape(-1)
    nsolid = len(solid_idx)

    # Which cut planes each welded vertex lies on, and which planes run
    # transversal to each piece. A shared edge on a transversal plane is a cut
    # (no adjacency across it); a plane coplanar with both pieces merely
    # witnesses a face-on-face contact and does not separate them.
    vert_mask: list[int] | None = None
    if cut_planes:
        N = np.array([p[0] for p in cut_planes])
        W = np.array([p[1] for p in cut_planes])
        PLO = np.array([p[2] for p in cut_planes]) - 1e-5
        PHI = np.array([p[3] for p in cut_planes]) + 1e-5
        nuniq = int(vid.max()) + 1
        first_row = np.zeros(nuniq, dtype=np.int64)
        seen = np.zeros(nuniq, dtype=bool)
        for row, g in enumerate(vid.tolist()):
            if not seen[g]:
                seen[g] = True
                first_row[g] = row
        upts = all_pts[first_row]
        vert_on = np.abs(upts @ N.T - W[None, :]) < CUT_EDGE_TOL
        # a cut only exists where the cutting triangles actually were
        in_box = np.all(upts[:, None, :] >= PLO[None, :, :], axis=2) \
            & np.all(upts[:, None, :] <= PHI[None, :, :], axis=2)
        vert_mask = _bit_rows(vert_on & in_box)
        piece_normals = np.array([pieces[i].normal for i in solid_idx])
        trans_mask = _bit_rows(np.abs(piece_normals @ N.T) < 0.999)

    parent = list(range(nsolid))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    edge_map: dict[tuple, int] = {}
    vid_list = vid.tolist()
    for si in range(nsolid):
        s, e = int(starts[si]), int(starts[si + 1])
        ids = vid_list[s:e]
        k = len(ids)
        for a in range(k):
            ia = ids[a]
            ib = ids[(a + 1) % k]
            if ia == ib:
                continue
            key = (ia, ib) if ia < ib else (ib, ia)
            other = edge_map.get(key)
            if other is None:
                edge_map[key] = si
            elif other != si:
                if vert_mask is not None:
                    common = vert_mask[ia] & vert_mask[ib]
                    if common and (common & (trans_mask[si] | trans_mask[other])):
                        continue
                ri, rj = find(si), find(other)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    comps: dict[int, list[int]] = {}
    for si in range(nsolid):
        comps.setdefault(find(si), []).append(si)

    probe_pts, probe_owner = [], []
    for cid in sorted(comps):
        members = sorted(comps[cid], key=lambda si: -pieces[solid_idx[si]].area)
        probeable = [si for si in members if pieces[solid_idx[si]].area > DEGENERATE_AREA]
        if not probeable:
            for si in members:
                pieces[solid_idx[si]].cls = -2  # all-degenerate component: drop
            continue
        reps = probeable if exact else probeable[:2]
        for si in reps:
            p = pieces[solid_idx[si]]
            c = p.pts.mean(axis=0)
            probe_pts.append(c + PROBE_DELTA * p.normal)
            probe_pts.append(c - PROBE_DELTA * p.normal)
            probe_owner.append(si)
    win = generalized_winding(np.asarray(probe_pts), v_other, t_other)

    def to_cls(ip, im):
        if ip and im:
            return IN
        if not ip and not im:
            return OUT
        return ON_SAME if im else ON_OPP

    probe_cls = {si: to_cls(win[2 * k] > 0.5, win[2 * k + 1] > 0.5)
                 for k, si in enumerate(probe_owner)}

    for cid in sorted(comps):
        members = comps[cid]
        results = [probe_cls[si] for si in members if si in probe_cls]
        if not results:
            continue  # all-degenerate component, already dropped
        if len(set(results)) == 1:
            for si in members:
                pieces[solid_idx[si]].cls = results[0]
        else:
            # mixed component: probe every solid member individually;
            # degenerate members take the majority class
            probeable = [si for si in members if pieces[solid_idx[si]].area > DEGENERATE_AREA]
            pts = []
            for si in probeable:
                p = pieces[solid_idx[si]]
                c = p.pts.mean(axis=0)
                pts.append(c + PROBE_DELTA * p.normal)
                pts.append(c - PROBE_DELTA * p.normal)
            w2 = generalized_winding(np.asarray(pts), v_other, t_other)
            for k, si in enumerate(probeable):
                pieces[solid_idx[si]].cls = to_cls(w2[2 * k] > 0.5, w2[2 * k + 1] > 0.5)
            vals = [pieces[solid_idx[si]].cls for si in probeable]
            maj = max(sorted(set(vals)), key=vals.count)
            for si in members:
                if pieces[solid_idx[si]].area <= DEGENERATE_AREA:
                    pieces[solid_idx[si]].cls = maj


def _weld_points(points: np.ndarray, tol: float = WELD):
    """(unique points, index remap) by dual-grid quantization.

    Points are grouped on two interleaved lattices (cell size `tol`, offset by
    half a cell); merging the two partitions guarantees that points within
    tol/2 always weld even when they straddle a cell boundary, which covers
    intersection points computed twice along shared cut lines.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc

    n = len(points)
    if n == 0:
        return points.reshape(0, 3), np.zeros(0, dtype=np.int64)
    k1 = np.floor(points / tol + 0.5).astype(np.int64)
    k2 = np.floor(points / tol).astype(np.int64)
    _, g1 = np.unique(k1, axis=0, return_inverse=True)
    _, g2 = np.unique(k2, axis=0, return_inverse=True)
    g1 = g1.reshape(-1)
    g2 = g2.reshape(-1)
    n1 = int(g1.max()) + 1
    n2 = int(g2.max()) + 1
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([n + g1, n + n1 + g2])
    graph = coo_matrix((np.ones(2 * n), (rows, cols)), shape=(n + n1 + n2, n + n1 + n2))
    _, labels = cc(graph, directed=False)
    labels = labels[:n]
    # representative = first point of each component, in input order
    uniq_labels, remap = np.unique(labels, return_inverse=True)
    first = np.full(len(uniq_labels), n, dtype=np.int64)
    np.minimum.at(first, remap, np.arange(n))
    verts = points[first]
    return verts, remap


def _split_repeated(poly: list[int]) -> list[list[int]]:
    """Split a polygon at repeated vertices into simple loops."""
    out = []
    stack = [poly]
    guard = 0
    while stack and guard < 10000:
        guard += 1
        p = stack.pop()
        seen: dict[int, int] = {}
        dup = None
        for pos, v in enumerate(p):
            if v in seen:
                dup = (seen[v], pos)
                break
            seen[v] = pos
        if dup is None:
            if len(p) >= 3:
                out.append(p)
            continue
        i, j = dup
        inner = p[i:j]
        outer = p[:i] + p[j:]
        if len(inner) >= 3:
            stack.append(inner)
        if len(outer) >= 3:
            stack.append(outer)
    return out


def _repair_tjunctions(verts: np.ndarray, polys: list[list[int]], planes, extra_boxes):
    """Insert vertices sitting inside other polygons' edges.

    T-junctions only arise along cut lines (vertices created by splitting lie
    on recorded cut planes) or where degenerate slivers were dropped; the first
    pass matches on-plane vertices to edges crossing or riding each plane, the
    second pass handles the dropped-sliver boxes densely.
    """
    if len(verts) == 0 or not polys:
        return polys
    e0, e1, owner = [], [], []
    for pi, poly in enumerate(polys):
        k = len(poly)
        for a in range(k):
            e0.append(poly[a])
            e1.append(poly[(a + 1) % k])
            owner.append((pi, a))
    e0 = np.asarray(e0)
    e1 = np.asarray(e1)
    p0 = verts[e0]
    p1 = verts[e1]
    insertions: dict[tuple, list[tuple]] = {}

    def try_insert(vi_arr, ei_arr):
        """Exact vertex-on-edge test for candidate (vertex, edge) pairs."""
        if len(vi_arr) == 0:
            return
        # cheap bbox rejection before the exact segment test
        v = verts[vi_arr]
        a0 = np.minimum(p0[ei_arr], p1[ei_arr]) - 1e-5
        a1 = np.maximum(p0[ei_arr], p1[ei_arr]) + 1e-5
        near = np.all(v >= a0, axis=1) & np.all(v <= a1, axis=1)
        if not near.any():
            return
        vi_arr, ei_arr, v = vi_arr[near], ei_arr[near], v[near]
        a = p0[ei_arr]
        d = p1[ei_arr] - a
        L2 = np.einsum("md,md->m", d, d)
        L2 = np.where(L2 < 1e-20, 1.0, L2)
        t = np.einsum("md,md->m", v - a, d) / L2
        closest = a + t[:, None] * d
        dist2 = np.einsum("md,md->m", v - closest, v - closest)
        ok = (dist2 < ONSEG_TOL * ONSEG_TOL) & (t > 1e-9) & (t < 1.0 - 1e-9) \
            & (vi_arr != e0[ei_arr]) & (vi_arr != e1[ei_arr])
        for m in np.nonzero(ok)[0]:
            insertions.setdefault(owner[int(ei_arr[m])], []).append((float(t[m]), int(vi_arr[m])))

    if planes:
        # candidate T-vertices sit on some cut plane inside its split extent;
        # candidate edges overlap some split extent. Pair them with a 1D sweep
        # along the widest axis, then test each pair exactly.
        N = np.array([p[0] for p in planes])
        W = np.array([p[1] for p in planes])
        PLO = np.array([p[4] for p in planes]) - 1e-5   # split-extent boxes
        PHI = np.array([p[5] for p in planes]) + 1e-5
        DV = verts @ N.T - W[None, :]               # (verts, planes)
        on_any = np.zeros(len(verts), dtype=bool)
        e_any = np.zeros(len(e0), dtype=bool)
        elo = np.minimum(p0, p1)
        ehi = np.maximum(p0, p1)
        for j in range(len(planes)):
            on_any |= (np.abs(DV[:, j]) < ONPLANE_TOL) \
                & np.all(verts >= PLO[j], axis=1) & np.all(verts <= PHI[j], axis=1)
            e_any |= np.all(ehi >= PLO[j], axis=1) & np.all(elo <= PHI[j], axis=1)
        v_cand = np.nonzero(on_any)[0]
        e_cand = np.nonzero(e_any)[0]
        if len(v_cand) and len(e_cand):
            axis = int(np.argmax(verts[v_cand].max(axis=0) - verts[v_cand].min(axis=0)))
            vx = verts[v_cand, axis]
            order = np.argsort(vx, kind="stable")
            vx_sorted = vx[order]
            v_sorted = v_cand[order]
            lo_idx = np.searchsorted(vx_sorted, elo[e_cand, axis] - 1e-5, side="left")
            hi_idx = np.searchsorted(vx_sorted, ehi[e_cand, axis] + 1e-5, side="right")
            counts = hi_idx - lo_idx
            total = int(counts.sum())
            if total:
                cs = np.concatenate([[0], np.cumsum(counts)])
                within = np.arange(total) - np.repeat(cs[:-1], counts)
                vi = v_sorted[np.repeat(lo_idx, counts) + within]
                ei = e_cand[np.repeat(np.arange(len(e_cand)), counts)]
                for s in range(0, len(vi), 4_000_000):
                    try_insert(vi[s:s + 4_000_000], ei[s:s + 4_000_000])

    if extra_boxes:
        pad = 1e-5
        blo = np.array([b[0] for b in extra_boxes]) - pad
        bhi = np.array([b[1] for b in extra_boxes]) + pad
        ulo, uhi = blo.min(axis=0), bhi.max(axis=0)
        elo = np.minimum(p0, p1)
        ehi = np.maximum(p0, p1)
        vpre = np.nonzero(np.all(verts >= ulo, axis=1) & np.all(verts <= uhi, axis=1))[0]
        epre = np.nonzero(np.all(ehi >= ulo, axis=1) & np.all(elo <= uhi, axis=1))[0]
        if len(vpre) and len(epre):
            # box membership per candidate (small candidate sets after the union prefilter)
            v_hits = np.any(np.all(verts[vpre][:, None, :] >= blo[None], axis=2)
                            & np.all(verts[vpre][:, None, :] <= bhi[None], axis=2), axis=1)
            e_hits = np.any(np.all(ehi[epre][:, None, :] >= blo[None], axis=2)
                            & np.all(elo[epre][:, None, :] <= bhi[None], axis=2), axis=1)
            vids = vpre[v_hits]
            eids = epre[e_hits]
            if len(vids) and len(eids):
                # chunk the dense pairing; exactness over speed here
                step = max(1, 4_000_000 // len(eids))
                for s in range(0, len(vids), step):
                    chunk = vids[s:s + step]
                    vi = np.repeat(chunk, len(eids))
                    ei = np.tile(eids, len(chunk))
                    try_insert(vi, ei)

    if not insertions:
        return polys
    out = []
    for pi, poly in enumerate(polys):
        k = len(poly)
        new_poly: list[int] = []
        for a in range(k):
            new_poly.append(poly[a])
            ins = insertions.get((pi, a))
            if ins:
                seen_t = set()
                for tv, vidx in sorted(set(ins)):
                    if vidx != new_poly[-1] and vidx not in seen_t:
                        new_poly.append(vidx)
                        seen_t.add(vidx)
        dedup = [new_poly[i] for i in range(len(new_poly)) if new_poly[i] != new_poly[(i - 1) % len(new_poly)]]
        if len(dedup) >= 3:
            out.extend(_split_repeated(dedup))
    return out


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    n = np.array([
        float(((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])).sum()),
        float(((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])).sum()),
        float(((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])).sum()),
    ])
    return n


def _fan_triangulate(verts: np.ndarray, polys: list[list[int]]) -> np.ndarray:
    """Triangulate planar polygons, fanning convex ones and ear-clipping the
    rest (repair can leave vertices a few 1e-7 off an edge, making the loop
    slightly reflex; a blind fan would emit inverted slivers there)."""
    from .geometry import ear_clip, plane_basis

    tris = []
    for poly in polys:
        if len(poly) == 3:
            tris.append(poly)
            continue
        pts = verts[poly]
        n = _newell_normal(pts)
        norm = float(np.linalg.norm(n))
        if norm < 1e-300:
            continue
        n /= norm
        e = np.roll(pts, -1, axis=0) - pts
        cr = np.cross(e, np.roll(e, -1, axis=0)) @ n
        if cr.min() >= -1e-13:
            apex_local = int(np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))[0])
            k = len(poly)
            ordered = [poly[(apex_local + i) % k] for i in range(k)]
            for i in range(1, k - 1):
                tris.append([ordered[0], ordered[i], ordered[i + 1]])
        else:
            u, v = plane_basis(n)
            p2 = np.stack([pts @ u, pts @ v], axis=1)
            for a, b, c in ear_clip(p2):
                tris.append([poly[a], poly[b], poly[c]])
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _assemble(kept: list[tuple[np.ndarray, bool]], planes, boxes) -> SolidModel:
    if not kept:
        return SolidModel(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
    pts = np.concatenate([p for p, _ in kept])
    verts, remap = _weld_points(pts)
    remap = remap.tolist()
    vlist = verts.tolist()
    polys = []
    extra_boxes = list(boxes)
    pos = 0
    for p, flip in kept:
        ids = remap[pos:pos + len(p)]
        pos += len(p)
        if flip:
            ids = ids[::-1]
        dedup = [ids[i] for i in range(len(ids)) if ids[i] != ids[(i - 1) % len(ids)]]
        if len(dedup) >= 3 and len(set(dedup)) >= 3:
            # scalar triangle-fan area; cheaper than array math at this call rate
            x0, y0, z0 = vlist[dedup[0]]
            sx = sy = sz = 0.0
            for i in range(1, len(dedup) - 1):
                x1, y1, z1 = vlist[dedup[i]]
                x2, y2, z2 = vlist[dedup[i + 1]]
                ax, ay, az = x1 - x0, y1 - y0, z1 - z0
                bx, by, bz = x2 - x0, y2 - y0, z2 - z0
                sx += ay * bz - az * by
                sy += az * bx - ax * bz
                sz += ax * by - ay * bx
            if 0.5 * (sx * sx + sy * sy + sz * sz) ** 0.5 >= DEGENERATE_AREA:
                polys.append(dedup)
                continue
        if len(dedup) >= 1:
            q = verts[dedup]
            extra_boxes.append((q.min(axis=0), q.max(axis=0)))
    polys = _repair_tjunctions(verts, polys, planes, extra_boxes)
    tris = _fan_triangulate(verts, polys)
    if len(tris):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        tris = tris[(a != b) & (b != c) & (c != a)]
    used = np.unique(tris) if len(tris) else np.zeros(0, dtype=np.int64)
    lookup = np.full(len(verts), -1, dtype=np.int64)
    if len(used):
        lookup[used] = np.arange(len(used))
    return SolidModel(verts[used], lookup[tris] if len(tris) else np.zeros((0, 3), dtype=np.int32))


def _select(pieces: list[_Piece], side: str, op: str):
    kept = []
    for p in pieces:
        if p.cls in (-1, -2):
            continue
        if side == "a":
            keep = p.cls in (OUT, ON_SAME) if op == "union" else p.cls in (OUT, ON_OPP)
            if keep:
                kept.append((p.pts, False))
        else:
            if op == "union" and p.cls == OUT:
                kept.append((p.pts, False))
            elif op == "difference" and p.cls == IN:
                kept.append((p.pts, True))
    return kept


def _degenerate_boxes(pieces_a, pieces_b):
    boxes = []
    for plist in (pieces_a, pieces_b):
        for p in plist:
            if p.cls == -2:
                boxes.append((p.pts.min(axis=0), p.pts.max(axis=0)))
    return boxes


def boolean(a: SolidModel, b: SolidModel, op: str) -> SolidModel:
    """Union or difference of two closed solids.

    op is "union" or "difference". Raises BooleanError with a diagnostic if a
    valid closed result cannot be produced.
    """
    if op not in ("union", "difference"):
        raise ValueError(f"unsupported boolean op {op!r}")
    if a.is_empty():
        return b if op == "union" else a
    if b.is_empty():
        return a

    cand_a, cand_b = _candidate_pairs(a.vertices, a.triangles, b.vertices, b.triangles)

    last_err = None
    for exact in (False, True):
        pieces_a, planes_a = _split_side(a.vertices, a.triangles, cand_a, b.vertices, b.triangles)
        pieces_b, planes_b = _split_side(b.vertices, b.triangles, cand_b, a.vertices, a.triangles)
        _classify_pieces(pieces_a, planes_a, b.vertices, b.triangles, exact)
        _classify_pieces(pieces_b, planes_b, a.vertices, a.triangles, exact)
        kept = _select(pieces_a, "a", op) + _select(pieces_b, "b", op)
        planes = planes_a + planes_b
        boxes = _degenerate_boxes(pieces_a, pieces_b)
        try:
            return _assemble(kept, planes, boxes)
        except MeshError as err:
            last_err = err
            continue
    raise BooleanError(f"{op} failed to produce a closed 2-manifold solid: {last_err}")

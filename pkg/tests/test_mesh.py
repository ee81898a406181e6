import numpy as np
import pytest

from strokecad.mesh import (MeshError, SolidModel, build_planar_faces, signed_volume,
                            validate_closed_manifold, weld_vertices)
from strokecad.primitives import unit_box


def divergence_volume(model: SolidModel) -> float:
    """Independent volume oracle: surface integral of z over the z-component
    of the outward normal (divergence theorem applied to F = (0, 0, z))."""
    p = model.vertices[model.triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])  # area-weighted normal * 2
    zc = p[:, :, 2].mean(axis=1)
    return float((0.5 * n[:, 2] * zc).sum())


def normal_cluster_count(model: SolidModel, tol_deg: float = 1.0) -> int:
    """Brute-force face count: greedy clustering of triangles by (normal, offset)."""
    p = model.vertices[model.triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    lens = np.linalg.norm(n, axis=1)
    keep = lens > 1e-14
    n = n[keep] / lens[keep][:, None]
    w = np.einsum("ij,ij->i", n, p[keep][:, 0])
    clusters: list[tuple[np.ndarray, float]] = []
    cos_tol = np.cos(np.deg2rad(tol_deg))
    for i in range(len(n)):
        for cn, cw in clusters:
            if float(cn @ n[i]) >= cos_tol and abs(cw - w[i]) < 1e-6:
                break
        else:
            clusters.append((n[i], float(w[i])))
    return len(clusters)


def test_unit_box_has_six_two_triangle_faces():
    box = unit_box()
    assert len(box.triangles) == 12
    assert len(box.faces) == 6
    assert all(len(f.triangle_ids) == 2 for f in box.faces)


def test_unit_box_edge_and_volume():
    box = unit_box()
    lo, hi = box.bbox()
    edges = hi - lo
    assert np.allclose(edges, 1.0 / np.sqrt(3.0))
    assert np.isclose(np.linalg.norm(hi - lo), 1.0)
    assert np.isclose(box.volume(), (1.0 / np.sqrt(3.0)) ** 3)


def test_face_partition_covers_all_triangles():
    box = unit_box()
    counted = sum(len(f.triangle_ids) for f in box.faces)
    assert counted == len(box.triangles)


def test_face_loops_ccw_and_planar():
    box = unit_box()
    for f in box.faces:
        loop = f.outer_loop
        # planarity
        assert np.abs(loop @ f.normal - f.offset).max() < 1e-6
        # counter-clockwise about the outward normal
        c = loop.mean(axis=0)
        s = np.cross(loop - c, np.roll(loop, -1, axis=0) - c).sum(axis=0)
        assert float(s @ f.normal) > 0


def test_volume_matches_divergence_oracle():
    box = unit_box()
    assert abs(box.volume() - divergence_volume(box)) < 1e-12


def test_normal_cluster_oracle_agrees_on_box():
    assert normal_cluster_count(unit_box()) == 6


def test_open_mesh_rejected():
    box = unit_box()
    with pytest.raises(MeshError):
        SolidModel(box.vertices, box.triangles[:-1])


def test_inverted_mesh_rejected():
    box = unit_box()
    with pytest.raises(MeshError):
        SolidModel(box.vertices, box.triangles[:, ::-1])


def test_weld_merges_duplicates():
    box = unit_box()
    # duplicate every vertex with sub-tolerance jitter
    rng = np.random.default_rng(0)
    v2 = np.concatenate([box.vertices, box.vertices + rng.uniform(-4e-8, 4e-8, box.vertices.shape)])
    t2 = np.concatenate([box.triangles, box.triangles + len(box.vertices)])
    verts, tris = weld_vertices(v2, t2)
    assert len(verts) == len(box.vertices)
    validate_closed_manifold(verts, np.concatenate([tris[:12]]))


def test_obj_roundtrip():
    box = unit_box()
    again = SolidModel.from_obj(box.to_obj())
    assert np.allclose(again.vertices, box.vertices)
    assert np.array_equal(again.triangles, box.triangles)
    assert np.isclose(again.volume(), box.volume())


def test_empty_model_is_valid():
    m = SolidModel(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
    assert m.is_empty()
    assert m.volume() == 0.0
    assert len(m.faces) == 0

import numpy as np
import pytest

from strokecad.operators import AddSubParams, ExtrudeParams, SweepParams, face_plane_mapping
from strokecad.primitives import unit_box
from strokecad.protocol import Protocol, ProtocolError, execute
from strokecad.regularize import (RegularizerConfig, obb_mid_planes, rectify,
                                  reflect_operator, regularize_operator, snap,
                                  symmetry_complete)

E = 1.0 / np.sqrt(3.0)
TOP = E / 2.0
CFG = RegularizerConfig()


def top_face(m):
    return max(m.faces, key=lambda f: float(f.normal[2]))


def square_on_top(center, half, z=TOP):
    cx, cy = center
    return np.array([[cx - half, cy - half, z], [cx + half, cy - half, z],
                     [cx + half, cy + half, z], [cx - half, cy + half, z]])


def test_snap_fires_at_nine_percent_of_diameter():
    box = unit_box()
    f = top_face(box)
    corner = f.outer_loop[0]
    diam = f.diameter()
    inward = f.centroid - corner
    inward = inward / np.linalg.norm(inward)
    # nearest polygon corner sits 9% of the diameter inward of the face corner
    near_corner = corner + 0.09 * diam * inward
    half = 0.08
    shift = near_corner - np.array([near_corner[0] - half, near_corner[1] - half, TOP])
    poly = square_on_top((near_corner[0] + half * np.sign(inward[0]),
                          near_corner[1] + half * np.sign(inward[1])), half)
    # force one vertex exactly at near_corner
    i = int(np.argmin(np.linalg.norm(poly - near_corner, axis=1)))
    poly = poly + (near_corner - poly[i])
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.1, option="+")
    snapped = snap(op, f, CFG)
    moved = np.linalg.norm(snapped.base_polygon - op.base_polygon, axis=1).max()
    assert moved > 1e-9
    dist = np.linalg.norm(snapped.base_polygon - corner, axis=2 - 1).min()
    assert dist < 1e-9


def test_snap_does_not_fire_at_eleven_percent():
    box = unit_box()
    f = top_face(box)
    diam = f.diameter()
    # nearest key-point pair: a polygon corner 11% of the diameter from the
    # face centroid; every other pair is constructed to be farther
    c0 = f.centroid + np.array([0.11 * diam, 0.0, 0.0])
    s = 0.08
    poly = np.array([c0, c0 + [s, 0, 0], c0 + [s, s, 0], c0 + [0, s, 0]])
    poly[:, 2] = TOP
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.1, option="+")
    keys = np.concatenate([f.outer_loop, (f.outer_loop + np.roll(f.outer_loop, -1, axis=0)) / 2,
                           f.centroid[None]])
    prim = np.concatenate([poly, poly.mean(axis=0)[None]])
    dmin = np.linalg.norm(prim[:, None, :] - keys[None, :, :], axis=2).min()
    assert dmin > 0.10 * diam  # construction invariant
    snapped = snap(op, f, CFG)
    assert np.array_equal(snapped.base_polygon, poly)


def test_snap_idempotent():
    box = unit_box()
    f = top_face(box)
    poly = square_on_top((0.05, 0.03), 0.1)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.1, option="+")
    once = snap(op, f, CFG)
    twice = snap(once, f, CFG)
    assert np.allclose(once.base_polygon, twice.base_polygon, atol=1e-12)


def _quad_with_angles(angles_deg, mean_len=0.2):
    """A quad whose interior angles are as given (must sum to 360)."""
    turns = [180.0 - a for a in angles_deg]
    heading = 0.0
    pts = [np.zeros(2)]
    for k in range(3):
        heading_rad = np.deg2rad(heading)
        pts.append(pts[-1] + mean_len * np.array([np.cos(heading_rad), np.sin(heading_rad)]))
        heading += turns[(k + 1) % 4]
    return np.asarray(pts)


def test_rectify_angles_within_band_make_rectangle():
    box = unit_box()
    f = top_face(box)
    to2d, to3d = face_plane_mapping(f)
    # quad with angles 85/95/88/92: inside the 20-degree corner band
    a, b = 0.20, 0.16
    base = np.array([[0.0, 0.0], [a, 0.0], [a + b * np.cos(np.deg2rad(95)), b * np.sin(np.deg2rad(95))]])
    d_pt = base[0] + b * np.array([np.cos(np.deg2rad(85)), np.sin(np.deg2rad(85))])
    quad = np.array([base[0], base[1], base[2], d_pt]) - [0.1, 0.1]
    angles0 = _interior(quad)
    assert np.all(np.abs(angles0 - 90.0) <= 20.0)
    op = AddSubParams(face_id=f.id, base_polygon=to3d(quad), profile_length=0.1, option="+")
    out = rectify(op, f, CFG)
    angles = _interior(_project(out, f))
    assert np.allclose(angles, 90.0, atol=1e-6)


def _project(op, f):
    to2d, _ = face_plane_mapping(f)
    return to2d(op.base_polygon)


def _interior(poly):
    prev = np.roll(poly, 1, axis=0) - poly
    nxt = np.roll(poly, -1, axis=0) - poly
    out = []
    for a, b in zip(prev, nxt):
        c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
        out.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
    return np.asarray(out)


def test_rectify_hexagon_side_spread_regularizes():
    box = unit_box()
    f = top_face(box)
    _, to3d = face_plane_mapping(f)
    n = 6
    ang = 2 * np.pi * np.arange(n) / n
    radii = 0.15 * np.array([1.0, 1.05, 0.95, 1.02, 0.97, 1.03])  # sides ~15% spread
    hexa = np.stack([radii * np.cos(ang), radii * np.sin(ang)], axis=1)
    op = AddSubParams(face_id=f.id, base_polygon=to3d(hexa), profile_length=0.1, option="+")
    out = rectify(op, f, CFG)
    poly = _project(out, f)
    lens = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
    assert np.allclose(lens, lens.mean(), atol=1e-9)
    assert np.allclose(_interior(poly), 120.0, atol=1e-6)


def test_rectify_out_of_band_corner_left_alone():
    box = unit_box()
    f = top_face(box)
    _, to3d = face_plane_mapping(f)
    # one 118-degree corner: 28 degrees beyond the quad target, outside the band
    quad = np.array([[0.0, 0.0], [0.2, 0.0],
                     [0.2 + 0.15 * np.cos(np.deg2rad(118)), 0.15 * np.sin(np.deg2rad(118))],
                     [-0.03, 0.14]]) - [0.08, 0.05]
    op = AddSubParams(face_id=f.id, base_polygon=to3d(quad), profile_length=0.1, option="+")
    before = _interior(quad)
    out = rectify(op, f, RegularizerConfig(parallel_tol_deg=0.0))  # isolate the corner rule
    after = _interior(_project(out, f))
    assert np.allclose(np.sort(before), np.sort(after), atol=1e-9)


def test_rectify_boundary_bands():
    box = unit_box()
    f = top_face(box)
    _, to3d = face_plane_mapping(f)
    cfg = RegularizerConfig(parallel_tol_deg=0.0)
    for eps, fires in ((19.0, True), (21.0, False)):
        quad = _quad_with_angles([90 - eps, 90 + eps, 90 - eps, 90 + eps])
        op = AddSubParams(face_id=f.id, base_polygon=to3d(quad - quad.mean(axis=0)),
                          profile_length=0.1, option="+")
        out = rectify(op, f, cfg)
        after = _interior(_project(out, f))
        if fires:
            assert np.allclose(after, 90.0, atol=1e-6)
        else:
            assert not np.allclose(after, 90.0, atol=1e-3)
    # side-length band at 19% vs 21% of the mean
    for spread, fires in ((0.19, True), (0.21, False)):
        lens = np.array([1.0 + spread, 1.0 - spread, 1.0 + spread, 1.0 - spread]) * 0.15
        pts = [np.zeros(2)]
        for k, (L, h) in enumerate(zip(lens[:-1], [0.0, 90.0, 180.0])):
            pts.append(pts[-1] + L * np.array([np.cos(np.deg2rad(h)), np.sin(np.deg2rad(h))]))
        quad = np.asarray(pts)
        op = AddSubParams(face_id=f.id, base_polygon=to3d(quad - quad.mean(axis=0)),
                          profile_length=0.1, option="+")
        out = rectify(op, f, cfg)
        poly = _project(out, f)
        lens_after = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
        if fires:
            assert np.allclose(lens_after, lens_after.mean(), atol=1e-9)
        else:
            assert lens_after.std() > 1e-4


def test_disabled_config_passes_through_bit_identical():
    box = unit_box()
    f = top_face(box)
    poly = square_on_top((0.031, 0.017), 0.11)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.13, option="-")
    cfg = RegularizerConfig(enabled=False)
    out = regularize_operator(op, f, cfg)
    assert out is op


def test_rectify_idempotent():
    box = unit_box()
    f = top_face(box)
    _, to3d = face_plane_mapping(f)
    quad = _quad_with_angles([85, 95, 88, 92])
    op = AddSubParams(face_id=f.id, base_polygon=to3d(quad - quad.mean(axis=0)),
                      profile_length=0.1, option="+")
    once = rectify(op, f, CFG)
    twice = rectify(once, f, CFG)
    assert np.allclose(once.base_polygon, twice.base_polygon, atol=1e-9)


def _pocket_protocol(center):
    box = unit_box()
    f = top_face(box)
    poly = square_on_top(center, 0.06)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.1, option="-")
    return Protocol().appended(op)


def test_symmetry_appends_mirrored_pocket():
    p = _pocket_protocol((0.12, 0.05))
    before = execute(p).volume()
    box_vol = execute(p, 0).volume()
    p2 = symmetry_complete(p, 0, plane_choice=0)
    assert len(p2) == 2
    after = execute(p2).volume()
    pocket = box_vol - before
    assert abs((box_vol - after) - 2.0 * pocket) < 1e-6


def test_symmetry_centered_primitive_suppressed():
    p = _pocket_protocol((0.0, 0.1))
    # mirror across the plane the pocket is centered on
    for plane in range(3):
        p2 = symmetry_complete(p, 0, plane_choice=plane)
        if len(p2) == 1:
            break
    else:
        pytest.fail("no mid-plane produced a duplicate-suppressed mirror")


def test_reflection_is_involutive():
    box = unit_box()
    f = top_face(box)
    poly = square_on_top((0.1, 0.07), 0.05)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.1, option="-")
    planes = obb_mid_planes(box)
    point, normal = planes[0]
    twice = reflect_operator(reflect_operator(op, point, normal, box), point, normal, box)
    assert np.allclose(twice.base_polygon, op.base_polygon, atol=1e-9)


def test_symmetry_rejects_extrude_steps():
    box = unit_box()
    p = Protocol().appended(ExtrudeParams(face_id=top_face(box).id, offset=0.2))
    with pytest.raises(ProtocolError):
        symmetry_complete(p, 0, 0)

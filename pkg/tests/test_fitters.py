import numpy as np
import pytest

from strokecad.fitting import FitError, interpret, line_search_offset, select_base_face
from strokecad.fitting.fitters import LINE_SEARCH_STEP, build_context
from strokecad.geometry import cubic_bezier, unit
from strokecad.operators import (AddSubParams, BevelParams, ExtrudeParams, SweepParams)
from strokecad.primitives import unit_box

from helpers import TOP, make_clean_sample, top_face

SIGMA = LINE_SEARCH_STEP


def test_line_search_grid_has_401_candidates():
    half = int(round(1.5 / SIGMA))
    steps = (np.arange(2 * half + 1) - half) * SIGMA
    assert len(steps) == 401
    assert abs(steps[0] + 1.5) < 1e-12
    assert abs(steps[-1] - 1.5) < 1e-12
    assert steps[200] == 0.0


def test_select_base_face_exact_mask():
    Id = np.zeros((256, 256), dtype=np.int32)
    Id[10:60, 10:60] = 3
    Id[100:140, 100:140] = 5
    F = (Id == 3).astype(float)
    assert select_base_face(F, Id) == 3


def test_select_base_face_pixel_count_argmax():
    Id = np.zeros((256, 256), dtype=np.int32)
    Id[0:30, 0:30] = 1      # 900 px
    Id[50:70, 50:70] = 2    # 400 px
    F = np.zeros((256, 256))
    F[Id > 0] = 0.6
    assert select_base_face(F, Id) == 1


def test_select_base_face_below_threshold_errors():
    Id = np.ones((256, 256), dtype=np.int32)
    F = np.full((256, 256), 0.4)
    with pytest.raises(FitError):
        select_base_face(F, Id)


def test_select_base_face_monotone_rescale_invariant():
    rng = np.random.default_rng(3)
    Id = rng.integers(0, 4, (256, 256)).astype(np.int32)
    F = rng.random((256, 256))
    base = select_base_face(F, Id)
    # affine rescale that keeps binarization: map [0,1] -> [0.25, 1.0]
    # only above-threshold ordering matters, so compress the top range instead
    F2 = np.where(F > 0.5, 0.5 + (F - 0.5) * 0.5 + 0.25, F * 0.4)
    assert select_base_face(F2, Id) == base


def test_line_search_zero_offset_on_projected_source():
    box = unit_box()
    f = top_face(box)
    op = ExtrudeParams(face_id=f.id, offset=0.3)
    ss, cam, view, provider, curves = make_clean_sample(box, op, [-0.5, -0.6, -1.0])
    src = f.outer_loop
    q = cam.project(src)
    uv = np.stack([q[:, 0] * cam.image_size - 0.5,
                   (1.0 - q[:, 1]) * cam.image_size - 0.5], axis=1)
    d = line_search_offset(src, uv, f.normal, cam)
    assert d == 0.0


def _roundtrip(model, op, view_dir, zoom=2.0):
    ss, cam, view, provider, curves = make_clean_sample(model, op, view_dir, zoom=zoom)
    return interpret(model, ss, provider), cam


def test_extrude_roundtrip_within_sigma():
    box = unit_box()
    f = top_face(box)
    for d_true, vd in ((0.31, [-0.5, -0.7, -1.0]), (-0.22, [0.6, -0.4, -1.0])):
        res, cam = _roundtrip(box, ExtrudeParams(face_id=f.id, offset=d_true), vd)
        assert res.op_type == "Extrude"
        assert res.face_id == f.id
        assert abs(res.operator.offset - d_true) <= SIGMA


def test_addsub_roundtrip_polygon_and_length():
    box = unit_box()
    f = top_face(box)
    ang = np.linspace(0, 2 * np.pi, 5, endpoint=False) + 0.3
    poly = np.stack([0.13 * np.cos(ang), 0.13 * np.sin(ang), np.full(5, TOP)], axis=1)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.21, option="+")
    res, cam = _roundtrip(box, op, [-0.5, -0.7, -1.0])
    fit = res.operator
    assert fit.option == "+"
    assert abs(fit.profile_length - 0.21) <= SIGMA
    px = 256.0 / (2.0 * cam.half_extent)
    d = np.linalg.norm(fit.base_polygon[:, None, :] - poly[None, :, :], axis=2).min(axis=1)
    assert np.sqrt((d ** 2).mean()) * px <= 2.0


def test_addsub_subtract_with_protruding_end_unambiguous():
    box = unit_box()
    f = top_face(box)
    # a pocket near the face corner: the deep polygon's projection pokes
    # beyond the face under a slanted view, so the option is unambiguous
    c = np.array([0.17, 0.17])
    sq = np.array([[c[0] - 0.08, c[1] - 0.08], [c[0] + 0.08, c[1] - 0.08],
                   [c[0] + 0.08, c[1] + 0.08], [c[0] - 0.08, c[1] + 0.08]])
    poly = np.concatenate([sq, np.full((4, 1), TOP)], axis=1)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.4, option="-")
    res, cam = _roundtrip(box, op, [-0.9, -0.9, -0.55])
    assert res.operator.option == "-"
    assert not res.ambiguous
    assert abs(res.operator.profile_length - 0.4) <= SIGMA


def test_sweep_roundtrip_radii_and_distance():
    box = unit_box()
    f = top_face(box)
    r0, r1, d = 0.13, 0.10, 0.2
    c0 = np.array([0.02, -0.03, TOP])
    ctrl = np.array([c0 + [r0, 0, 0], c0 + [0.135, 0, d / 3],
                     c0 + [0.12, 0, 2 * d / 3], c0 + [r1, 0, d]])
    op = SweepParams(face_id=f.id, base_center=c0, base_radius=r0, offset_distance=d,
                     offset_radius=r1, profile=ctrl, option="+")
    res, cam = _roundtrip(box, op, [-0.5, -0.7, -1.0])
    fit = res.operator
    assert abs(fit.base_radius - r0) / r0 <= 0.02
    assert abs(fit.offset_radius - r1) / r1 <= 0.02
    assert abs(fit.offset_distance - d) <= SIGMA
    assert np.linalg.norm(fit.base_center - c0) <= 0.01


def test_sweep_cylinder_rectified_flag():
    box = unit_box()
    f = top_face(box)
    r, d = 0.11, 0.2
    c0 = np.array([0.0, 0.0, TOP])
    ctrl = np.array([c0 + [r, 0, 0], c0 + [r, 0, d / 3], c0 + [r, 0, 2 * d / 3], c0 + [r, 0, d]])
    op = SweepParams(face_id=f.id, base_center=c0, base_radius=r, offset_distance=d,
                     offset_radius=r, profile=ctrl, option="+")
    res, _ = _roundtrip(box, op, [-0.5, -0.7, -1.0])
    assert "cylinder-rectified" in res.diagnostics
    assert abs(res.operator.base_radius - res.operator.offset_radius) < 1e-12


def test_bevel_roundtrip_profile_within_two_pixels():
    box = unit_box()
    f = top_face(box)
    loop = f.outer_loop
    c, prev_pt, next_pt = loop[0], loop[-1], loop[1]
    p0 = c + 0.4 * (next_pt - c)
    p3 = c + 0.4 * (prev_pt - c)
    profile = np.array([p0, p0 + 0.3 * (c - p0), p3 + 0.3 * (c - p3), p3])
    cp = c.copy()
    cp[2] = -TOP
    op = BevelParams(face_id=f.id, corner=c, opposite_corner=cp, profile=profile)
    res, cam = _roundtrip(box, op, [-0.5, -0.7, -1.0])
    fit = res.operator
    assert np.linalg.norm(fit.corner - c) < 1e-9
    assert np.linalg.norm(fit.opposite_corner - cp) < 1e-9
    t = np.linspace(0, 1, 128)
    a = cam.project(cubic_bezier(profile, t)) * 256
    b = cam.project(cubic_bezier(fit.profile, t)) * 256
    dev = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2).min(axis=1).max()
    assert dev <= 2.0


def test_interpret_empty_strokes_errors():
    from strokecad.fitting import HeuristicProvider
    from strokecad.render import StrokeSet
    from strokecad.camera import Camera
    box = unit_box()
    cam = Camera(eye_dir=unit([-1, -1, -1.0]), up=np.array([0, 0, 1.0]),
                 center=np.zeros(3), half_extent=0.8)
    with pytest.raises(FitError):
        interpret(box, StrokeSet([], cam), HeuristicProvider())


def test_fit_deterministic():
    box = unit_box()
    f = top_face(box)
    op = ExtrudeParams(face_id=f.id, offset=0.27)
    r1, _ = _roundtrip(box, op, [-0.5, -0.7, -1.0])
    r2, _ = _roundtrip(box, op, [-0.5, -0.7, -1.0])
    assert r1.operator.offset == r2.operator.offset

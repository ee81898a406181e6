import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from strokecad.operators import canonical_sketch
from strokecad.primitives import unit_box
from strokecad.protocol import execute, parse_protocol
from strokecad.service import app

from helpers import TOP, top_face

client = TestClient(app)

E = 1.0 / np.sqrt(3.0)


def new_session():
    r = client.post("/sessions")
    assert r.status_code == 200
    return r.json()["id"]


def extrude_strokes(model, offset=0.3, view=(-0.5, -0.7, -1.0)):
    from strokecad.camera import make_camera
    from strokecad.geometry import unit
    from strokecad.operators import ExtrudeParams
    f = top_face(model)
    op = ExtrudeParams(face_id=f.id, offset=offset)
    curves = canonical_sketch(op, model, view_dir=unit(np.array(view, dtype=float)))
    pts = np.concatenate([c.points for c in curves])
    cam = make_camera(pts, unit(np.array(view, dtype=float)), np.array([0.0, 0.0, 1.0]))
    return {
        "strokes": [cam.project(c.points).tolist() for c in curves],
        "camera": cam.to_dict(),
    }, f.area * offset


def test_new_session_starts_from_base_box():
    sid = new_session()
    state = client.get(f"/sessions/{sid}").json()
    assert abs(state["volume"] - (1 / np.sqrt(3)) ** 3) < 1e-12
    assert state["steps"] == []
    assert state["pending"] is None


def test_sessions_are_isolated_and_ids_unique():
    a, b = new_session(), new_session()
    assert a != b
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{a}/strokes", json=payload)
    client.post(f"/sessions/{a}/confirm")
    sa = client.get(f"/sessions/{a}").json()
    sb = client.get(f"/sessions/{b}").json()
    assert len(sa["steps"]) == 1
    assert len(sb["steps"]) == 0


def test_render_returns_png_with_transparent_background():
    sid = new_session()
    r = client.get(f"/sessions/{sid}/render")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
    from PIL import Image
    import io
    img = Image.open(io.BytesIO(r.content))
    assert img.size == (256, 256)
    assert img.mode == "RGBA"
    corners = [img.getpixel((0, 0)), img.getpixel((255, 255))]
    assert all(c[3] == 0 for c in corners)


def test_render_faceid_map():
    sid = new_session()
    r = client.get(f"/sessions/{sid}/render", params={"map": "faceid"})
    ids = np.array(r.json()["face_ids"])
    assert ids.shape == (256, 256)
    assert set(np.unique(ids)).issubset({0, 1, 2, 3, 4, 5, 6})


def test_render_deterministic():
    sid = new_session()
    r1 = client.get(f"/sessions/{sid}/render").content
    r2 = client.get(f"/sessions/{sid}/render").content
    assert r1 == r2


def test_submit_strokes_returns_preview_without_committing():
    sid = new_session()
    payload, dv = extrude_strokes(unit_box())
    r = client.post(f"/sessions/{sid}/strokes", json=payload)
    assert r.status_code == 200
    body = r.json()["interpretation"]
    assert body["op"] == "Extrude"
    assert abs(body["preview_volume"] - ((1 / np.sqrt(3)) ** 3 + dv)) < 1e-3
    state = client.get(f"/sessions/{sid}").json()
    assert state["steps"] == []
    assert state["pending"] is not None


def test_empty_strokes_rejected_422():
    sid = new_session()
    r = client.post(f"/sessions/{sid}/strokes", json={"strokes": [], "camera": {}})
    assert r.status_code == 422


def test_confirm_then_undo_restores_state():
    sid = new_session()
    before = client.get(f"/sessions/{sid}/protocol").text
    vol_before = client.get(f"/sessions/{sid}").json()["volume"]
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{sid}/strokes", json=payload)
    client.post(f"/sessions/{sid}/confirm")
    assert len(client.get(f"/sessions/{sid}").json()["steps"]) == 1
    client.post(f"/sessions/{sid}/undo")
    after = client.get(f"/sessions/{sid}/protocol").text
    vol_after = client.get(f"/sessions/{sid}").json()["volume"]
    assert after == before
    assert vol_after == vol_before


def test_undo_clears_pending_first():
    sid = new_session()
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{sid}/strokes", json=payload)
    client.post(f"/sessions/{sid}/undo")
    state = client.get(f"/sessions/{sid}").json()
    assert state["pending"] is None
    assert state["steps"] == []
    r = client.post(f"/sessions/{sid}/undo")
    assert r.status_code == 409


def test_switch_option_flips_sign():
    sid = new_session()
    box = unit_box()
    f = top_face(box)
    # draw an add/subtract polygon near a corner from a slanted view so the
    # option is unambiguous, then flip it
    from strokecad.camera import make_camera
    from strokecad.geometry import unit
    from strokecad.operators import AddSubParams
    c = np.array([0.17, 0.17])
    sq = np.array([[c[0] - 0.07, c[1] - 0.07], [c[0] + 0.07, c[1] - 0.07],
                   [c[0] + 0.07, c[1] + 0.07], [c[0] - 0.07, c[1] + 0.07]])
    poly = np.concatenate([sq, np.full((4, 1), TOP)], axis=1)
    op = AddSubParams(face_id=f.id, base_polygon=poly, profile_length=0.3, option="-")
    vd = unit(np.array([-0.9, -0.9, -0.55]))
    curves = canonical_sketch(op, box, view_dir=vd)
    pts = np.concatenate([cv.points for cv in curves])
    cam = make_camera(pts, vd, np.array([0.0, 0.0, 1.0]))
    payload = {"strokes": [cam.project(cv.points).tolist() for cv in curves],
               "camera": cam.to_dict()}
    r = client.post(f"/sessions/{sid}/strokes", json=payload)
    assert r.status_code == 200
    first = r.json()["interpretation"]["params"]["option"]
    r2 = client.post(f"/sessions/{sid}/option")
    assert r2.status_code == 200
    second = r2.json()["interpretation"]["params"]["option"]
    assert {first, second} == {"+", "-"}


def test_tune_rejected_edit_leaves_state():
    sid = new_session()
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{sid}/strokes", json=payload)
    client.post(f"/sessions/{sid}/confirm")
    before = client.get(f"/sessions/{sid}/protocol").text
    r = client.patch(f"/sessions/{sid}/ops/0", json={"path": "offset", "value": 9.0})
    assert r.status_code == 409
    assert client.get(f"/sessions/{sid}/protocol").text == before


def test_tune_applies_valid_edit():
    sid = new_session()
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{sid}/strokes", json=payload)
    client.post(f"/sessions/{sid}/confirm")
    state = client.get(f"/sessions/{sid}").json()
    d0 = state["steps"][0]["params"]["offset"]
    r = client.patch(f"/sessions/{sid}/ops/0", json={"path": "offset", "value": d0 + 0.1})
    assert r.status_code == 200
    f = top_face(unit_box())
    assert abs(r.json()["volume"] - (state["volume"] + f.area * 0.1)) < 1e-3


def test_protocol_save_load_round_trip():
    sid = new_session()
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{sid}/strokes", json=payload)
    client.post(f"/sessions/{sid}/confirm")
    text = client.get(f"/sessions/{sid}/protocol").text
    sid2 = new_session()
    r = client.put(f"/sessions/{sid2}/protocol", content=text,
                   headers={"content-type": "application/json"})
    assert r.status_code == 200
    assert client.get(f"/sessions/{sid2}/protocol").text == text
    vol = client.get(f"/sessions/{sid2}").json()["volume"]
    assert abs(vol - execute(parse_protocol(text)).volume()) < 1e-12


def test_load_invalid_protocol_400_with_step():
    sid = new_session()
    bad = json.dumps({"version": 1, "steps": [
        {"op": "Extrude", "params": {"face_id": 99, "offset": 0.2}}]})
    r = client.put(f"/sessions/{sid}/protocol", content=bad,
                   headers={"content-type": "application/json"})
    assert r.status_code == 400
    assert "step" in json.dumps(r.json())


def test_state_model_always_matches_replay():
    sid = new_session()
    payload, _ = extrude_strokes(unit_box())
    client.post(f"/sessions/{sid}/strokes", json=payload)
    client.post(f"/sessions/{sid}/confirm")
    text = client.get(f"/sessions/{sid}/protocol").text
    vol = client.get(f"/sessions/{sid}").json()["volume"]
    assert abs(vol - execute(parse_protocol(text)).volume()) < 1e-12

"""Session-oriented HTTP API for the full modeling loop.

The server owns all 3D state: clients send strokes in normalized image
coordinates together with the camera that rendered their view, and receive
interpretations, previews, and protocol text back. Requests to one session are
serialized by a per-session lock; the engine itself is pure, so distinct
sessions run fully concurrently.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query, Response

from .camera import Camera, CameraError
from .fitting import HeuristicProvider, InterpretResult, interpret
from .fitting.fitters import FitError, build_context, fit_addsub, fit_sweep
from .mesh import MeshError, SolidModel
from .operators import AddSubParams, OperatorError, SweepParams, apply, params_to_dict
from .primitives import unit_box
from .protocol import Protocol, ProtocolError, edit_param, execute, parse_protocol, serialize_protocol
from .regularize import RegularizerConfig, regularize_operator, symmetry_complete
from .render import render_context, shaded_png_bytes

PREVIEW_TRIANGLE_BUDGET = 5000


@dataclass
class PendingInterpretation:
    result: InterpretResult
    preview: SolidModel
    ctx: object
    C: np.ndarray


@dataclass
class Session:
    id: str
    protocol: Protocol = field(default_factory=Protocol)
    model: SolidModel = field(default_factory=unit_box)
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    pending: PendingInterpretation | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


_SESSIONS: dict[str, Session] = {}
_REGISTRY_LOCK = threading.Lock()

app = FastAPI(title="strokecad studio service")


def _session(sid: str) -> Session:
    s = _SESSIONS.get(sid)
    if s is None:
        raise HTTPException(status_code=404, detail=f"no session {sid}")
    return s


def _camera_from_query(eye_dir, up, center, half_extent, model: SolidModel) -> Camera:
    if eye_dir is None:
        lo, hi = model.bbox()
        diag = float(np.linalg.norm(hi - lo)) or 1.0
        return Camera(eye_dir=-np.ones(3) / np.sqrt(3.0), up=np.array([0.0, 0.0, 1.0]),
                      center=(lo + hi) / 2.0, half_extent=0.75 * diag)
    try:
        return Camera(eye_dir=np.array(json.loads(eye_dir), dtype=np.float64),
                      up=np.array(json.loads(up or "[0,0,1]"), dtype=np.float64),
                      center=np.array(json.loads(center or "[0,0,0]"), dtype=np.float64),
                      half_extent=float(half_extent or 0.8))
    except (ValueError, CameraError) as err:
        raise HTTPException(status_code=422, detail=f"bad camera: {err}") from None


def _decimate_for_preview(model: SolidModel, budget: int = PREVIEW_TRIANGLE_BUDGET):
    """Display-only vertex-clustering decimation down to the triangle budget."""
    verts, tris = model.vertices, model.triangles
    if len(tris) <= budget:
        return verts, tris, False
    lo, hi = model.bbox()
    span = float((hi - lo).max()) or 1.0
    cell = span / 64.0
    for _ in range(12):
        keys = np.floor((verts - lo) / cell).astype(np.int64)
        _, remap = np.unique(keys, axis=0, return_inverse=True)
        t = remap[tris]
        keep = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 2] != t[:, 0])
        if keep.sum() <= budget:
            t = t[keep]
            used = np.unique(t)
            lookup = np.zeros(int(remap.max()) + 1, dtype=np.int64)
            lookup[used] = np.arange(len(used))
            centers = np.zeros((len(used), 3))
            counts = np.zeros(len(used))
            np.add.at(centers, lookup[remap], verts)
            np.add.at(counts, lookup[remap], 1.0)
            centers /= np.maximum(counts[:, None], 1.0)
            return centers, lookup[t], True
        cell *= 1.6
    return verts[:0], tris[:0], True


def _mesh_payload(model: SolidModel) -> dict:
    verts, tris, decimated = _decimate_for_preview(model)
    return {
        "vertices": np.round(verts, 9).tolist(),
        "triangles": np.asarray(tris, dtype=int).tolist(),
        "decimated": decimated,
    }


def _state_payload(s: Session) -> dict:
    return {
        "id": s.id,
        "steps": [{"op": st.op.op_name, "params": params_to_dict(st.op),
                   "label": st.label} for st in s.protocol.steps],
        "volume": s.model.volume(),
        "face_count": len(s.model.faces),
        "pending": _pending_payload(s.pending),
        "regularizer_enabled": s.regularizer.enabled,
    }


def _pending_payload(p: PendingInterpretation | None):
    if p is None:
        return None
    return {
        "op": p.result.operator.op_name,
        "params": params_to_dict(p.result.operator),
        "op_type": p.result.op_type,
        "ambiguous": p.result.ambiguous,
        "diagnostics": list(p.result.diagnostics),
        "preview": _mesh_payload(p.preview),
        "preview_volume": p.preview.volume(),
    }


@app.post("/sessions")
def create_session():
    sid = uuid.uuid4().hex[:12]
    with _REGISTRY_LOCK:
        _SESSIONS[sid] = Session(id=sid)
    return {"id": sid}


@app.get("/sessions/{sid}")
def get_session(sid: str):
    s = _session(sid)
    with s.lock:
        return _state_payload(s)


@app.delete("/sessions/{sid}")
def delete_session(sid: str):
    with _REGISTRY_LOCK:
        _SESSIONS.pop(sid, None)
    return {"ok": True}


@app.get("/sessions/{sid}/render")
def get_render(sid: str, eye_dir: str | None = Query(default=None),
               up: str | None = Query(default=None),
               center: str | None = Query(default=None),
               half_extent: float | None = Query(default=None),
               map: str = Query(default="shaded")):
    s = _session(sid)
    with s.lock:
        cam = _camera_from_query(eye_dir, up, center, half_extent, s.model)
        view = render_context(s.model, cam)
        if map == "faceid":
            return {"face_ids": view.Id.tolist(), "camera": cam.to_dict()}
        png = shaded_png_bytes(view)
    return Response(content=png, media_type="image/png")


@app.post("/sessions/{sid}/strokes")
def submit_strokes(sid: str, payload: dict = Body(...)):
    from .render import StrokeSet
    s = _session(sid)
    with s.lock:
        strokes = payload.get("strokes") or []
        if not strokes:
            raise HTTPException(status_code=422, detail={"stage": "input", "message": "no strokes"})
        try:
            cam = Camera.from_dict(payload["camera"])
            stroke_set = StrokeSet([np.asarray(p, dtype=np.float64) for p in strokes], cam)
        except (KeyError, ValueError, CameraError) as err:
            raise HTTPException(status_code=422,
                                detail={"stage": "input", "message": str(err)}) from None
        try:
            result = interpret(s.model, stroke_set, HeuristicProvider())
            face = s.model.face_by_id(result.face_id)
            op = regularize_operator(result.operator, face, s.regularizer)
            result = replace(result, operator=op)
            preview = apply(op, s.model)
        except (FitError, OperatorError, MeshError, Exception) as err:
            if isinstance(err, HTTPException):
                raise
            stage = getattr(err, "stage", type(err).__name__)
            raise HTTPException(status_code=422,
                                detail={"stage": str(stage), "message": str(err)}) from None
        ctx = build_context(s.model, stroke_set)
        _, C = HeuristicProvider().segment(ctx, result.op_type)
        s.pending = PendingInterpretation(result=result, preview=preview, ctx=ctx, C=C)
        return {"interpretation": _pending_payload(s.pending)}


@app.post("/sessions/{sid}/confirm")
def confirm(sid: str):
    s = _session(sid)
    with s.lock:
        if s.pending is None:
            raise HTTPException(status_code=409, detail="nothing pending")
        s.protocol = s.protocol.appended(s.pending.result.operator)
        s.model = s.pending.preview
        s.pending = None
        return _state_payload(s)


@app.post("/sessions/{sid}/undo")
def undo(sid: str):
    s = _session(sid)
    with s.lock:
        if s.pending is not None:
            s.pending = None
        elif len(s.protocol) > 0:
            s.protocol = s.protocol.without_last()
            s.model = execute(s.protocol)
        else:
            raise HTTPException(status_code=409, detail="nothing to undo")
        return _state_payload(s)


@app.post("/sessions/{sid}/option")
def switch_option(sid: str):
    s = _session(sid)
    with s.lock:
        if s.pending is None:
            raise HTTPException(status_code=409, detail="nothing pending")
        op = s.pending.result.operator
        if not isinstance(op, (AddSubParams, SweepParams)):
            raise HTTPException(status_code=409, detail="pending operator has no option")
        flipped = "-" if op.option == "+" else "+"
        fitter = fit_addsub if isinstance(op, AddSubParams) else fit_sweep
        face = s.model.face_by_id(s.pending.result.face_id)
        try:
            params, diags = fitter(s.pending.ctx, s.pending.C, face, force_option=flipped)
            params = regularize_operator(params, face, s.regularizer)
            preview = apply(params, s.model)
        except (FitError, OperatorError, MeshError) as err:
            raise HTTPException(status_code=422,
                                detail={"stage": "switch-option", "message": str(err)}) from None
        result = replace(s.pending.result, operator=params, diagnostics=tuple(diags))
        s.pending = PendingInterpretation(result=result, preview=preview,
                                          ctx=s.pending.ctx, C=s.pending.C)
        return {"interpretation": _pending_payload(s.pending)}


@app.patch("/sessions/{sid}/ops/{k}")
def tune(sid: str, k: int, payload: dict = Body(...)):
    s = _session(sid)
    with s.lock:
        try:
            s.protocol = edit_param(s.protocol, k, str(payload["path"]), payload["value"])
        except KeyError:
            raise HTTPException(status_code=422, detail="payload needs 'path' and 'value'") from None
        except ProtocolError as err:
            raise HTTPException(status_code=409, detail=str(err)) from None
        s.model = execute(s.protocol)
        return _state_payload(s)


@app.get("/sessions/{sid}/protocol")
def get_protocol(sid: str):
    s = _session(sid)
    with s.lock:
        return Response(content=serialize_protocol(s.protocol), media_type="application/json")


@app.put("/sessions/{sid}/protocol")
def put_protocol(sid: str, payload: dict = Body(...)):
    s = _session(sid)
    with s.lock:
        try:
            proto = parse_protocol(json.dumps(payload))
        except ProtocolError as err:
            raise HTTPException(status_code=400,
                                detail={"message": str(err), "step": err.step}) from None
        s.protocol = proto
        s.model = execute(proto)
        s.pending = None
        return _state_payload(s)


@app.post("/sessions/{sid}/symmetry")
def symmetry(sid: str, payload: dict = Body(...)):
    s = _session(sid)
    with s.lock:
        try:
            step = int(payload["step"])
            plane = int(payload["plane"])
        except (KeyError, ValueError):
            raise HTTPException(status_code=422, detail="payload needs 'step' and 'plane'") from None
        try:
            s.protocol = symmetry_complete(s.protocol, step, plane)
        except ProtocolError as err:
            raise HTTPException(status_code=409, detail=str(err)) from None
        s.model = execute(s.protocol)
        return _state_payload(s)


@app.patch("/sessions/{sid}/config")
def configure(sid: str, payload: dict = Body(...)):
    s = _session(sid)
    with s.lock:
        reg = payload.get("regularizer")
        if reg is not None:
            fields = {k: v for k, v in reg.items()
                      if k in ("enabled", "snap_fraction", "parallel_tol_deg",
                               "corner_tol_deg", "length_tol")}
            s.regularizer = replace(s.regularizer, **fields)
        return _state_payload(s)

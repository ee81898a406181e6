"""The modeling-sequence language: parse, serialize, replay, and edit protocols.

A protocol file is a JSON document: {"version": 1, "steps": [...]} where each
step is {"op": <name>, "params": {...}} plus an optional "label". Geometry is
stored in 3D model coordinates so a protocol replays independent of viewpoint.
Floats are emitted with shortest round-trip precision, so parse(serialize(p))
reproduces p bit-exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace

import numpy as np

from .mesh import SolidModel
from .operators import (OP_TYPES, Operator, OperatorError, SweepParams, apply,
                        params_from_dict, params_to_dict, sweep_axis, validate)
from .primitives import unit_box

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    def __init__(self, message: str, step: int | None = None, line: int | None = None,
                 column: int | None = None):
        loc = ""
        if step is not None:
            loc += f" (step {step})"
        if line is not None:
            loc += f" (line {line}, column {column})"
        super().__init__(message + loc)
        self.step = step
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ProtocolStep:
    op: Operator
    label: str | None = None


@dataclass(frozen=True)
class Protocol:
    steps: tuple[ProtocolStep, ...] = ()
    version: int = PROTOCOL_VERSION

    def __len__(self) -> int:
        return len(self.steps)

    def appended(self, op: Operator, label: str | None = None) -> "Protocol":
        return Protocol(steps=self.steps + (ProtocolStep(op, label),), version=self.version)

    def without_last(self) -> "Protocol":
        return Protocol(steps=self.steps[:-1], version=self.version)


def _find_line_col(text: str, needle: str) -> tuple[int | None, int | None]:
    pos = text.find(needle)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    column = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, column


def parse_protocol(text: str, validate_replay: bool = True) -> Protocol:
    """Parse protocol text; reports syntax errors with line/column and
    validates that the whole sequence replays from the base box."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProtocolError(f"syntax error: {err.msg}", line=err.lineno, column=err.colno) from None
    if not isinstance(doc, dict):
        raise ProtocolError("protocol document must be a JSON object")
    version = doc.get("version")
    if not isinstance(version, int):
        raise ProtocolError("missing or non-integer 'version'")
    raw_steps = doc.get("steps")
    if not isinstance(raw_steps, list):
        raise ProtocolError("missing 'steps' list")
    steps = []
    for k, raw in enumerate(raw_steps):
        if not isinstance(raw, dict):
            raise ProtocolError("step is not an object", step=k)
        name = raw.get("op")
        if name not in OP_TYPES:
            line, col = _find_line_col(text, json.dumps(name) if isinstance(name, str) else "")
            raise ProtocolError(f"unknown operator name {name!r}", step=k, line=line, column=col)
        params = raw.get("params")
        if not isinstance(params, dict):
            raise ProtocolError("step has no 'params' object", step=k)
        try:
            op = params_from_dict(name, params)
        except OperatorError as err:
            raise ProtocolError(str(err), step=k) from None
        label = raw.get("label")
        if label is not None and not isinstance(label, str):
            raise ProtocolError("step label must be a string", step=k)
        steps.append(ProtocolStep(op, label))
    proto = Protocol(steps=tuple(steps), version=version)
    if validate_replay:
        execute(proto)  # raises ProtocolError naming the failing step
    return proto


def serialize_protocol(p: Protocol) -> str:
    """Canonical text form; floats use shortest round-trip decimals so the
    parse/serialize pair is bit-exact."""
    doc = {"version": p.version, "steps": []}
    for step in p.steps:
        entry = {"op": step.op.op_name, "params": params_to_dict(step.op)}
        if step.label is not None:
            entry["label"] = step.label
        doc["steps"].append(entry)
    return json.dumps(doc, indent=2) + "\n"


def execute(p: Protocol, up_to: int | None = None) -> SolidModel:
    """Replay steps 1..up_to from the base box (all steps when up_to is None)."""
    n = len(p.steps) if up_to is None else int(up_to)
    if not 0 <= n <= len(p.steps):
        raise ProtocolError(f"up_to={up_to} outside [0, {len(p.steps)}]")
    model = unit_box()
    for k in range(n):
        try:
            model = apply(p.steps[k].op, model)
        except Exception as err:
            raise ProtocolError(f"replay failed: {err}", step=k) from err
    return model


_PATH_RE = re.compile(r"^([a-z_]+)((?:\[\d+\])*)$")


def _parse_path(path: str) -> tuple[str, list[int]]:
    m = _PATH_RE.match(path)
    if not m:
        raise ProtocolError(f"bad parameter path {path!r}")
    name = m.group(1)
    indices = [int(x) for x in re.findall(r"\[(\d+)\]", m.group(2))]
    return name, indices


def _set_indexed(value, indices: list[int], new):
    if not indices:
        return new
    if isinstance(value, list):
        out = list(value)
        out[indices[0]] = _set_indexed(out[indices[0]], indices[1:], new)
        return out
    raise ProtocolError(f"cannot index scalar with {indices}")


def _rescale_sweep_profile(op: SweepParams, model: SolidModel,
                           new_d: float, new_r0: float, new_r1: float) -> np.ndarray:
    """Move the profile control points along with circle edits.

    Axial coordinates scale with the circle distance; radial distances scale
    by the local radius ratio at each control point's axial fraction, which
    keeps both endpoints on their circles and preserves the profile shape.
    """
    face = validate(op, model)
    axis = sweep_axis(op, face)
    ctrl = np.asarray(op.profile, dtype=np.float64)
    h = (ctrl - op.base_center) @ axis
    radial = ctrl - op.base_center - h[:, None] * axis[None, :]
    r = np.linalg.norm(radial, axis=1)
    rdir = np.where(r[:, None] > 1e-12, radial / np.where(r[:, None] > 1e-12, r[:, None], 1.0),
                    np.zeros_like(radial))
    u = np.clip(h / op.offset_distance, 0.0, 1.0)
    old_lerp = (1.0 - u) * op.base_radius + u * op.offset_radius
    new_lerp = (1.0 - u) * new_r0 + u * new_r1
    scale = np.where(old_lerp > 1e-12, new_lerp / np.where(old_lerp > 1e-12, old_lerp, 1.0), 1.0)
    new_h = h * (new_d / op.offset_distance)
    new_r = r * scale
    return op.base_center[None, :] + new_h[:, None] * axis[None, :] + new_r[:, None] * rdir


def edit_param(p: Protocol, step: int, path: str, value) -> Protocol:
    """Edit one parameter of one step and revalidate the protocol by replay.

    Sweep circle-distance and radius edits rescale the profile control points
    proportionally so the endpoints stay on both circles. A failed revalidation
    rejects the edit and leaves the protocol unchanged.
    """
    if not 0 <= step < len(p.steps):
        raise ProtocolError(f"step {step} out of range")
    old = p.steps[step].op
    name, indices = _parse_path(path)
    d = params_to_dict(old)
    if name not in d:
        raise ProtocolError(f"step {step} ({old.op_name}) has no parameter {name!r}")

    if isinstance(old, SweepParams) and name in ("offset_distance", "base_radius", "offset_radius"):
        if indices:
            raise ProtocolError(f"{name} is a scalar")
        model = execute(p, step)
        new_d = float(value) if name == "offset_distance" else old.offset_distance
        new_r0 = float(value) if name == "base_radius" else old.base_radius
        new_r1 = float(value) if name == "offset_radius" else old.offset_radius
        if min(new_d, new_r0, new_r1) <= 0:
            raise ProtocolError(f"{name} must be positive")
        profile = _rescale_sweep_profile(old, model, new_d, new_r0, new_r1)
        d[name] = float(value)
        d["profile"] = [[float(x) for x in row] for row in profile]
    else:
        d[name] = _set_indexed(d[name], indices, value)

    try:
        new_op = params_from_dict(old.op_name, d)
    except OperatorError as err:
        raise ProtocolError(str(err), step=step) from None
    steps = list(p.steps)
    steps[step] = replace(p.steps[step], op=new_op)
    candidate = Protocol(steps=tuple(steps), version=p.version)
    execute(candidate)  # revalidate; raises and leaves `p` unchanged on failure
    return candidate

import json
from pathlib import Path

import numpy as np
import pytest

from strokecad.cli import main
from strokecad.datagen import GenConfig, generate_record, write_record
from strokecad.operators import ExtrudeParams
from strokecad.primitives import unit_box
from strokecad.protocol import Protocol, serialize_protocol


def top_face_id(m):
    return max(m.faces, key=lambda f: float(f.normal[2])).id


def test_replay_prints_summary_and_exports_obj(tmp_path, capsys):
    p = Protocol().appended(ExtrudeParams(face_id=top_face_id(unit_box()), offset=0.3))
    proto_file = tmp_path / "model.s2c.json"
    proto_file.write_text(serialize_protocol(p))
    obj_file = tmp_path / "model.obj"
    rc = main(["replay", str(proto_file), "--export", str(obj_file)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "steps replayed: 1/1" in out
    assert "volume:" in out
    assert obj_file.exists()
    from strokecad.mesh import SolidModel
    model = SolidModel.from_obj(obj_file.read_text())
    assert model.volume() > 0


def test_replay_up_to_zero_is_base_box(tmp_path, capsys):
    p = Protocol().appended(ExtrudeParams(face_id=top_face_id(unit_box()), offset=0.3))
    proto_file = tmp_path / "model.s2c.json"
    proto_file.write_text(serialize_protocol(p))
    rc = main(["replay", str(proto_file), "--up-to", "0"])
    out = capsys.readouterr().out
    assert rc == 0
    assert f"{(1 / np.sqrt(3)) ** 3:.9f}" in out


def test_replay_bad_file_fails(tmp_path, capsys):
    proto_file = tmp_path / "bad.s2c.json"
    proto_file.write_text("{not json")
    rc = main(["replay", str(proto_file)])
    assert rc == 1


def test_datagen_and_evaluate_round_trip(tmp_path, capsys):
    out_dir = tmp_path / "ds"
    rc = main(["datagen", "--out", str(out_dir), "--per-length", "2",
               "--lengths", "1", "--seed", "3", "--noise-level", "1"])
    assert rc == 0
    samples = sorted(out_dir.iterdir())
    assert len(samples) == 2
    assert (samples[0] / "meta.json").exists()
    assert (samples[0] / "strokes.json").exists()
    assert (samples[0] / "depth.s2cd").exists()
    capsys.readouterr()
    # evaluating the ground truth against itself scores perfectly
    rc = main(["evaluate", "--pred", str(out_dir), "--gt", str(out_dir)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "Face IoU(%)" in out
    assert "100.00" in out

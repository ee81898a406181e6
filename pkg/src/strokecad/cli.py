"""Command-line entry points: replay, datagen, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _cmd_replay(args) -> int:
    from .protocol import ProtocolError, execute, parse_protocol
    text = Path(args.file).read_text(encoding="utf-8")
    try:
        proto = parse_protocol(text, validate_replay=False)
        up_to = len(proto) if args.up_to is None else args.up_to
        model = execute(proto, up_to)
    except ProtocolError as err:
        print(f"replay failed: {err}", file=sys.stderr)
        return 1
    print(f"steps replayed: {up_to}/{len(proto)}")
    for k, step in enumerate(proto.steps[:up_to]):
        label = f"  # {step.label}" if step.label else ""
        print(f"  {k:2d}: {step.op.op_name}{label}")
    print(f"volume: {model.volume():.9f}")
    print(f"planar faces: {len(model.faces)}")
    print(f"triangles: {len(model.triangles)}")
    if args.export:
        Path(args.export).write_text(model.to_obj(), encoding="utf-8")
        print(f"exported OBJ to {args.export}")
    return 0


def _cmd_datagen(args) -> int:
    from .datagen import GenConfig, write_dataset
    cfg = GenConfig(protocols_per_length=args.per_length,
                    lengths=tuple(int(x) for x in args.lengths.split(",")),
                    noise_level=args.noise_level, seed=args.seed)
    paths = write_dataset(cfg, args.out)
    print(f"wrote {len(paths)} samples to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    from .metrics import curve_accuracy, face_iou
    from .render import read_s2cd
    gt_dirs = sorted(p for p in Path(args.gt).iterdir() if p.is_dir())
    pred_root = Path(args.pred)
    per_type: dict[str, list] = {}
    for gt_dir in gt_dirs:
        meta = json.loads((gt_dir / "meta.json").read_text(encoding="utf-8"))
        pred_dir = pred_root / gt_dir.name
        if not pred_dir.exists():
            continue
        F_gt = read_s2cd(gt_dir / "face_gt.s2cd")
        C_gt = read_s2cd(gt_dir / "curve_gt.s2cd")
        M = read_s2cd(gt_dir / "mask.s2cd")
        fp = pred_dir / "face.s2cd"
        cp = pred_dir / "curve.s2cd"
        F_pred = read_s2cd(fp if fp.exists() else pred_dir / "face_gt.s2cd")
        C_pred = read_s2cd(cp if cp.exists() else pred_dir / "curve_gt.s2cd")
        rec = per_type.setdefault(meta["op_type"], [])
        rec.append((face_iou(F_pred, F_gt), curve_accuracy(C_pred, C_gt, M)))
    if not per_type:
        print("no overlapping samples between --pred and --gt", file=sys.stderr)
        return 1
    print(f"{'Operator':<24} | {'Face IoU(%)':>11} | {'Curve Acc. (%)':>14} | {'n':>5}")
    print("-" * 63)
    for op_type in sorted(per_type):
        vals = np.asarray(per_type[op_type])
        print(f"{op_type:<24} | {vals[:, 0].mean():11.2f} | {vals[:, 1].mean():14.2f} "
              f"| {len(vals):5d}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="strokecad",
                                     description="stroke-to-CAD engine tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", help="replay a protocol file from the base box")
    p.add_argument("file")
    p.add_argument("--up-to", type=int, default=None)
    p.add_argument("--export", metavar="OBJ", default=None, help="write the result as ASCII OBJ")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("datagen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-length", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-level", type=int, choices=(0, 1, 2, 3), default=1)
    p.add_argument("--lengths", default="1,2,3,4")
    p.set_defaults(func=_cmd_datagen)

    p = sub.add_parser("evaluate", help="segmentation metrics of predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the studio HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

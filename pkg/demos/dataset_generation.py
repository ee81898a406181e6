"""
Synthetic dataset generation
============================

Generates a handful of training samples (random protocols, sampled cameras,
perturbed strokes, rendered maps) and writes PNG visualizations of the map
stack for the first few.
"""

from pathlib import Path

import numpy as np

from strokecad.datagen import GenConfig, generate_dataset, write_record
from strokecad.render import map_to_png

out = Path("dataset_demo")
out.mkdir(exist_ok=True)

# %% desk-scale config: 3 protocols per sequence length, training-level noise
cfg = GenConfig(protocols_per_length=3, lengths=(1, 2), noise_level=1, seed=42)

records = []
for rec in generate_dataset(cfg):
    records.append(rec)
    write_record(rec, out)
    print(f"sample {rec.sample_id:02d}: {rec.op_type:<24} prefix={rec.prefix_len} "
          f"view={rec.view_angle_deg:5.1f}deg zoom={rec.zoom:.2f} occ={rec.occlusion:.2f}")

# %% PNG visualization of the first sample's map stack
rec = records[0]
sample_dir = out / f"sample_{rec.sample_id:05d}"
map_to_png(sample_dir / "sketch.png", rec.maps.S)
map_to_png(sample_dir / "depth.png", rec.maps.D)
map_to_png(sample_dir / "normal.png", rec.maps.N)
map_to_png(sample_dir / "face_gt.png", rec.maps.F_gt)
map_to_png(sample_dir / "curve_gt.png", rec.maps.C_gt)
print(f"wrote PNG previews to {sample_dir}/")

# %% the dataset is reproducible: the same config yields byte-identical maps
again = next(iter(generate_dataset(cfg)))
print("deterministic:", np.array_equal(again.maps.D, records[0].maps.D))

"""Scene bundles: generate a synthetic scene, save it, load it back.

A bundle directory is manifest.json plus one float32 blob per tensor, so
anything that can write bytes can produce pipeline input.
"""
import tempfile
from pathlib import Path

import ovfusion as ov

cfg = ov.SynthConfig(n_classes=6, n_objects=4, n_frames=6, seed=7)
bundle = ov.gen_scene(cfg)
print(f"scene {bundle.scene_id}: {bundle.points.num_points} points, "
      f"{len(bundle.frames)} frames, d={bundle.dim}")
print("categories:", bundle.text.names)

violations = ov.validate_bundle(bundle)
print("validation violations:", violations or "none")

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "scene"
    ov.save_bundle(bundle, out)
    files = sorted(p.name for p in out.iterdir())
    print(f"wrote {len(files)} files, e.g. {files[:4]} ...")

    back = ov.load_bundle(out)
    print("round trip bit-identical:", ov.bundles_equal(bundle, back))

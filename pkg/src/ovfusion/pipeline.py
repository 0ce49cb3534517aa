"""End-to-end composition: pixels -> projection -> aggregation.

``run_pipeline`` wires the stages together with independent toggles for the
2D per-pixel filter and the 3D object-mask filter, which is what the
ablation grid drives.  With a toggle off, the corresponding baseline runs
instead (mask-centered assignment / unfiltered averaging).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .aggregate import (
    DEFAULT_RADIUS,
    PointFeatureField,
    aggregate,
    build_object_masks,
    fuse_unfiltered,
)
from .bundle import SceneBundle
from .pixels import DEFAULT_BETA, assign_pixel_features, baseline_pixel_features
from .projection import DEFAULT_EPS_DEPTH, gather_raw_features


def run_pipeline(
    bundle: SceneBundle,
    beta: float = DEFAULT_BETA,
    eps_depth: float = DEFAULT_EPS_DEPTH,
    radius: float = DEFAULT_RADIUS,
    use_2d_filter: bool = True,
    use_3d_filter: bool = True,
) -> PointFeatureField:
    """Produce the final per-point feature field for one scene."""
    assign = assign_pixel_features if use_2d_filter else baseline_pixel_features
    fields = [assign(frame, bundle.text, beta) for frame in bundle.frames]
    raw = gather_raw_features(bundle.points, bundle.frames, fields, eps_depth)
    if use_3d_filter:
        masks = build_object_masks(bundle.points, radius)
        return aggregate(bundle.points, masks, raw, bundle.text)
    return fuse_unfiltered(raw, bundle.text)


def save_point_field(field: PointFeatureField, path: str | Path) -> None:
    """Persist a point feature field with the bundle blob convention."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    n, d = field.features.shape
    (out / "pointfeat.bin").write_bytes(
        np.ascontiguousarray(field.features, dtype="<f4").tobytes()
    )
    (out / "pointlabels.bin").write_bytes(
        field.labels.astype("<f4").tobytes()
    )
    (out / "pointvalid.bin").write_bytes(
        field.valid.astype("<f4").tobytes()
    )
    meta = {"format": "point-field/1", "N": int(n), "d": int(d)}
    (out / "field.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_point_field(path: str | Path) -> PointFeatureField:
    root = Path(path)
    meta = json.loads((root / "field.json").read_text(encoding="utf-8"))
    n, d = int(meta["N"]), int(meta["d"])
    feats = np.frombuffer((root / "pointfeat.bin").read_bytes(), dtype="<f4")
    labels = np.frombuffer((root / "pointlabels.bin").read_bytes(), dtype="<f4")
    valid = np.frombuffer((root / "pointvalid.bin").read_bytes(), dtype="<f4")
    return PointFeatureField(
        features=feats.reshape(n, d).astype(np.float64),
        valid=valid.astype(bool),
        labels=labels.astype(np.int64),
    )

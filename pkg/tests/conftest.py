from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import ovfusion as ov


def make_text(rows: np.ndarray, names=None) -> ov.TextPrototypes:
    rows = np.asarray(rows, dtype=np.float32)
    names = names or [f"class_{i}" for i in range(rows.shape[0])]
    return ov.TextPrototypes(rows, names)


def eye_text(num_categories: int, dim: int) -> ov.TextPrototypes:
    rows = np.zeros((num_categories, dim), dtype=np.float32)
    rows[:num_categories, :num_categories] = np.eye(num_categories)
    return make_text(rows)


def minimal_bundle() -> ov.SceneBundle:
    """1 point, 0 frames, C=1, d=2."""
    return ov.SceneBundle(
        points=ov.PointSet(
            coords=np.array([[0.0, 0.0, 0.5]], dtype=np.float32),
            cluster_ids=np.array([0], dtype=np.int64),
        ),
        frames=[],
        text=make_text(np.array([[1.0, 0.0]]), ["thing"]),
        gt=np.array([0], dtype=np.int64),
        dim=2,
        scene_id="minimal",
        seed=0,
    )


def simple_camera(width=4, height=4, fx=1.0, fy=1.0, cx=0.0, cy=0.0) -> ov.CameraModel:
    return ov.CameraModel(
        fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
        pose=np.eye(4, dtype=np.float32),
    )


def make_frame(mask_probs, mask_embeddings, width=None, height=None, depth=None):
    """Frame with identity pose; geometry only matters for projection tests."""
    mask_probs = np.asarray(mask_probs, dtype=np.float32)
    n_pix = mask_probs.shape[0]
    if width is None:
        width = n_pix
        height = 1
    cam = ov.CameraModel(
        fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=width, height=height,
        pose=np.eye(4, dtype=np.float32),
    )
    if depth is None:
        depth = np.ones((height, width), dtype=np.float32)
    return ov.FrameObservation(
        camera=cam,
        depth=np.asarray(depth, dtype=np.float32),
        mask_probs=mask_probs,
        mask_embeddings=np.asarray(mask_embeddings, dtype=np.float32),
    )


@pytest.fixture(scope="session")
def tiny_cfg():
    return ov.SynthConfig(
        n_classes=4, dim=8, n_objects=3, points_per_object=40,
        n_frames=3, image_size=32, seed=101,
    )


@pytest.fixture(scope="session")
def tiny_bundle(tiny_cfg):
    return ov.gen_scene(tiny_cfg)

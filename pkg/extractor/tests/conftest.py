from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

BOXES = [
    {"center": (-0.8, 0.0), "size": (0.7, 0.7, 0.6), "color": (255, 0, 0)},
    {"center": (0.8, 0.0), "size": (0.7, 0.7, 0.6), "color": (0, 255, 0)},
]
CATEGORIES = ["red box", "green box"]
IMAGE_SIZE = 64
FOCAL = 48.0


def _box_surface_points(center, size, count, rng):
    sx, sy, sz = size
    cx, cy = center
    pts = []
    for _ in range(count):
        face = rng.integers(0, 5)
        u, v = rng.uniform(-0.5, 0.5, 2)
        if face == 0:
            p = (-0.5 * sx, u * sy, (v + 0.5) * sz)
        elif face == 1:
            p = (0.5 * sx, u * sy, (v + 0.5) * sz)
        elif face == 2:
            p = (u * sx, -0.5 * sy, (v + 0.5) * sz)
        elif face == 3:
            p = (u * sx, 0.5 * sy, (v + 0.5) * sz)
        else:
            p = (u * sx, v * sy, sz)
        pts.append((p[0] + cx, p[1] + cy, p[2]))
    return np.array(pts)


def _look_at(eye, target):
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    w2c = np.eye(4)
    w2c[:3, :3] = np.stack([right, down, fwd])
    w2c[:3, 3] = -w2c[:3, :3] @ eye
    return w2c


def _render(points, owners, w2c):
    rot, t = w2c[:3, :3], w2c[:3, 3]
    cam = points @ rot.T + t
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    ok = z > 0
    u = np.trunc(FOCAL * x / np.where(ok, z, 1.0) + IMAGE_SIZE / 2 + 0.5).astype(int)
    v = np.trunc(FOCAL * y / np.where(ok, z, 1.0) + IMAGE_SIZE / 2 + 0.5).astype(int)
    ok &= (u >= 0) & (u < IMAGE_SIZE) & (v >= 0) & (v < IMAGE_SIZE)

    zbuf = np.full((IMAGE_SIZE, IMAGE_SIZE), np.inf)
    idx = np.nonzero(ok)[0]
    np.minimum.at(zbuf, (v[idx], u[idx]), z[idx])
    winner = np.full((IMAGE_SIZE, IMAGE_SIZE), -1, dtype=np.int64)
    at_min = z[idx] == zbuf[v[idx], u[idx]]
    best = np.full((IMAGE_SIZE, IMAGE_SIZE), np.iinfo(np.int64).max)
    np.minimum.at(best, (v[idx][at_min], u[idx][at_min]), idx[at_min])
    seen = best < np.iinfo(np.int64).max
    winner[seen] = owners[best[seen]]

    depth_mm = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint16)
    depth_mm[seen] = np.round(zbuf[seen] * 1000.0).astype(np.uint16)
    color = np.zeros((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8)
    for b, box in enumerate(BOXES):
        color[winner == b] = box["color"]
    return color, depth_mm


def build_capture(root: Path, n_frames: int = 2, points_per_box: int = 130) -> Path:
    """Write a toy RGB-D capture + job file; returns the job path."""
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(12)
    pts = np.concatenate(
        [_box_surface_points(b["center"], b["size"], points_per_box, rng) for b in BOXES]
    )
    owners = np.repeat(np.arange(len(BOXES)), points_per_box)

    np.savetxt(root / "points.xyz", pts, fmt="%.9f")
    np.savetxt(root / "clusters.txt", owners, fmt="%d")
    np.savetxt(root / "labels.txt", owners, fmt="%d")

    frames = []
    for k in range(n_frames):
        angle = 2.0 * np.pi * k / max(n_frames, 4)
        eye = (3.4 * np.cos(angle), 3.4 * np.sin(angle), 2.2)
        w2c = _look_at(eye, (0.0, 0.0, 0.3))
        color, depth_mm = _render(pts, owners, w2c)
        c2w = np.linalg.inv(w2c)

        Image.fromarray(color).save(root / f"color_{k}.png")
        Image.fromarray(depth_mm).save(root / f"depth_{k}.png")
        np.savetxt(root / f"pose_{k}.txt", c2w, fmt="%.17g")
        (root / f"intrinsics_{k}.txt").write_text(
            f"{FOCAL} {FOCAL} {IMAGE_SIZE/2} {IMAGE_SIZE/2} {IMAGE_SIZE} {IMAGE_SIZE}\n"
        )
        frames.append(
            {
                "color": f"color_{k}.png",
                "depth": f"depth_{k}.png",
                "pose": f"pose_{k}.txt",
                "intrinsics": f"intrinsics_{k}.txt",
            }
        )

    job = {
        "frames": frames,
        "categories": CATEGORIES,
        "points": "points.xyz",
        "cluster_ids": "clusters.txt",
        "gt": "labels.txt",
        "encoder": "toy-color/v1",
        "mask_generator": "toy-color/v1",
        "out": "bundle",
        "scene_id": "toy-capture",
    }
    (root / "job.json").write_text(json.dumps(job, indent=2))
    return root / "job.json"


@pytest.fixture(scope="session")
def capture_job(tmp_path_factory) -> Path:
    return build_capture(tmp_path_factory.mktemp("capture"))

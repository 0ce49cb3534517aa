"""Readers for the supported RGB-D capture layout.

Per frame:
  color       RGB image (PNG/JPEG, anything Pillow opens)
  depth       16-bit grayscale PNG in millimeters, 0 = no reading
  pose        text file, 4 rows of 4 floats, camera-to-world
  intrinsics  text file: fx fy cx cy width height

Scene-level:
  points      .xyz text (one "x y z" per line) or .npy of shape (N, 3)
  cluster ids / gt labels: one integer per line, or .npy of shape (N,)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


class ExtractError(RuntimeError):
    """Fatal extraction failure, always naming the offending file."""


def _require(path: Path, kind: str) -> Path:
    if not path.is_file():
        raise ExtractError(f"missing {kind} file: {path}")
    return path


def read_color(path: Path) -> np.ndarray:
    """(H, W, 3) float64 in [0, 1]."""
    with Image.open(_require(path, "color")) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    return rgb / 255.0


def read_depth(path: Path) -> np.ndarray:
    """(H, W) float32 meters; PNG stores millimeters."""
    with Image.open(_require(path, "depth")) as img:
        if img.mode not in ("I", "I;16", "I;16B", "L"):
            raise ExtractError(f"depth file {path} is not a 16-bit grayscale PNG")
        mm = np.asarray(img, dtype=np.float64)
    return (mm / 1000.0).astype(np.float32)


def read_pose_c2w(path: Path) -> np.ndarray:
    mat = np.loadtxt(_require(path, "pose"), dtype=np.float64)
    if mat.shape != (4, 4):
        raise ExtractError(f"pose file {path} must hold a 4x4 matrix")
    return mat


def pose_world_to_camera(c2w: np.ndarray) -> np.ndarray:
    """Invert a camera-to-world pose without a general solve."""
    rot = c2w[:3, :3]
    t = c2w[:3, 3]
    w2c = np.eye(4)
    w2c[:3, :3] = rot.T
    w2c[:3, 3] = -rot.T @ t
    return w2c


def read_intrinsics(path: Path) -> dict:
    vals = np.loadtxt(_require(path, "intrinsics"), dtype=np.float64).reshape(-1)
    if vals.size != 6:
        raise ExtractError(f"intrinsics file {path} must hold fx fy cx cy width height")
    return {
        "fx": float(vals[0]), "fy": float(vals[1]),
        "cx": float(vals[2]), "cy": float(vals[3]),
        "width": int(vals[4]), "height": int(vals[5]),
    }


def read_points(path: Path) -> np.ndarray:
    path = _require(path, "points")
    pts = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, dtype=np.float64)
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ExtractError(f"points file {path} must be N x 3")
    return pts.astype(np.float32)


def read_labels(path: Path, n: int, kind: str) -> np.ndarray:
    path = _require(path, kind)
    vals = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, dtype=np.int64)
    vals = np.atleast_1d(vals).astype(np.int64)
    if vals.shape != (n,):
        raise ExtractError(f"{kind} file {path} holds {vals.shape[0]} values, expected {n}")
    return vals

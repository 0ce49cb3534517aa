"""Pinhole projection of 3D points into frames with depth-occlusion checks.

A point contributes a frame's pixel feature only when it lands inside the
image, the depth map has a reading there, and that reading agrees with the
point's camera-space depth within ``eps_depth``.  Depth 0 is "no reading"
and always fails.  Pixel coordinates use nearest-pixel rounding (half away
from zero); no interpolation, since the features being lifted are
categorical in character and blending across object boundaries would
reintroduce exactly the noise the pipeline removes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import CameraModel, FrameObservation, PointSet
from .pixels import PixelFeatureField

DEFAULT_EPS_DEPTH = 0.05


@dataclass
class RawPointFeatures:
    """Per point, the (frame index, feature) pairs collected across frames."""

    entries: list[list[tuple[int, np.ndarray]]]

    @property
    def num_points(self) -> int:
        return len(self.entries)

    def count(self, i: int) -> int:
        return len(self.entries[i])

    def features_of(self, i: int) -> np.ndarray:
        """(k, d) array of point i's features, ascending frame order."""
        return np.array([f for _, f in self.entries[i]])


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.trunc(x + np.copysign(0.5, x))


def project_points(
    coords: np.ndarray,
    cam: CameraModel,
    depth: np.ndarray,
    eps_depth: float = DEFAULT_EPS_DEPTH,
) -> np.ndarray:
    """Project points into one frame; returns per-point pixel index or -1.

    A pixel index i encodes (u, v) as v*width + u.  -1 means the point is
    behind the camera, outside the image, has no depth reading, or is
    occluded (reading differs from its depth by more than eps_depth).
    """
    coords = np.asarray(coords, dtype=np.float64)
    rot = cam.rotation()
    cam_pts = coords @ rot.T + cam.translation()
    x, y, z = cam_pts[:, 0], cam_pts[:, 1], cam_pts[:, 2]

    ok = z > 0
    zs = np.where(ok, z, 1.0)  # avoid divide-by-zero on rejected points
    u = _round_half_away(cam.fx * x / zs + cam.cx)
    v = _round_half_away(cam.fy * y / zs + cam.cy)
    ok &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)

    ui = np.where(ok, u, 0).astype(np.int64)
    vi = np.where(ok, v, 0).astype(np.int64)
    reading = depth[vi, ui].astype(np.float64)
    ok &= (reading > 0) & (np.abs(reading - z) <= eps_depth)
    return np.where(ok, vi * cam.width + ui, -1)


def project_point(
    p: np.ndarray,
    cam: CameraModel,
    depth: np.ndarray,
    eps_depth: float = DEFAULT_EPS_DEPTH,
) -> int | None:
    """Single-point version of ``project_points``; None when not visible."""
    idx = int(project_points(np.asarray(p, dtype=np.float64)[None, :], cam, depth, eps_depth)[0])
    return None if idx < 0 else idx


def gather_raw_features(
    points: PointSet,
    frames: list[FrameObservation],
    fields: list[PixelFeatureField],
    eps_depth: float = DEFAULT_EPS_DEPTH,
) -> RawPointFeatures:
    """Collect every visible valid pixel feature for every point.

    Frames are visited in ascending index order, so each point's feature
    list is ordered by frame.  Invalid pixels contribute nothing.
    """
    if len(frames) != len(fields):
        raise ValueError(
            f"gather_raw_features: {len(frames)} frames but {len(fields)} pixel fields"
        )
    entries: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(points.num_points)]
    for k, (frame, field) in enumerate(zip(frames, fields)):
        idx = project_points(points.coords, frame.camera, frame.depth, eps_depth)
        hit = idx >= 0
        hit[hit] &= field.valid[idx[hit]]
        for i in np.nonzero(hit)[0]:
            entries[i].append((k, field.features[idx[i]]))
    return RawPointFeatures(entries)

"""Scene bundle data model and its on-disk directory format.

A scene bundle is the unit of work for the whole toolkit: one point cloud,
the RGB-D frames observing it (as depth + mask-probability + mask-embedding
tensors, never raw images), the per-category text prototypes, and optional
ground-truth point labels.

On disk a bundle is a directory holding ``manifest.json`` plus one raw blob
per tensor.  Every blob is row-major, little-endian, 32-bit IEEE-754 floats;
shapes live only in the manifest.  Integer tensors (ground truth, cluster
ids) are stored as float32 too, which is exact for the small values they
carry.  The format is deliberately dumb so that independently written
producers can emit byte-identical bundles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_TAG = "scene-bundle/1"
IGNORE_LABEL = -1

# max |R^T R - I| allowed for a pose rotation block
ROTATION_TOL = 1e-6


class BundleError(ValueError):
    """Raised when a bundle directory or in-memory bundle is malformed."""


@dataclass
class TextPrototypes:
    """One embedding row per category, plus the category names."""

    rows: np.ndarray          # (C, d) float32
    names: list[str]

    @property
    def num_categories(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])


@dataclass
class CameraModel:
    """Pinhole intrinsics plus a 4x4 world-to-camera rigid transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: np.ndarray          # (4, 4) float32, world-to-camera

    def rotation(self) -> np.ndarray:
        return np.asarray(self.pose[:3, :3], dtype=np.float64)

    def translation(self) -> np.ndarray:
        return np.asarray(self.pose[:3, 3], dtype=np.float64)


@dataclass
class FrameObservation:
    """One RGB-D frame reduced to tensors.

    ``mask_probs`` is the pixel-to-mask matrix: row i gives the probability
    that pixel i (row-major index v*width+u) belongs to each of the frame's
    m candidate masks.  ``mask_embeddings`` holds one feature vector per
    mask.  Depth 0 means "no reading" and always fails visibility checks.
    """

    camera: CameraModel
    depth: np.ndarray           # (height, width) float32, meters
    mask_probs: np.ndarray      # (height*width, m) float32 in [0, 1]
    mask_embeddings: np.ndarray  # (m, d) float32

    @property
    def num_masks(self) -> int:
        return int(self.mask_probs.shape[1])


@dataclass
class PointSet:
    """Point coordinates plus exactly one clustering side-channel.

    Either ``cluster_ids`` (direct ids, -1 = unclustered) or
    ``cluster_offsets`` (per-point shift toward the cluster center) is
    present, never both.
    """

    coords: np.ndarray                    # (N, 3) float32, meters
    cluster_ids: np.ndarray | None = None      # (N,) int64, >= -1
    cluster_offsets: np.ndarray | None = None  # (N, 3) float32

    @property
    def num_points(self) -> int:
        return int(self.coords.shape[0])


@dataclass
class SceneBundle:
    """Everything needed to run the pipeline on one scene."""

    points: PointSet
    frames: list[FrameObservation]
    text: TextPrototypes
    gt: np.ndarray | None       # (N,) int64 in {-1, .., C-1}, None if unlabeled
    dim: int
    scene_id: str
    seed: int
    extras: dict = field(default_factory=dict)  # producer metadata, persisted verbatim


# ---------------------------------------------------------------------------
# blob I/O


def _write_blob(path: Path, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    path.write_bytes(data.tobytes())


def _read_blob(path: Path, shape: tuple[int, ...], name: str) -> np.ndarray:
    if not path.is_file():
        raise BundleError(f"{name}: missing blob file {path.name}")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise BundleError(
            f"{name}: blob {path.name} holds {len(raw)} bytes, manifest shape "
            f"{shape} needs {expected}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise BundleError(f"{name}: non-finite values in {path.name}")
    return np.array(arr)  # own, writable copy


def _labels_to_f32(labels: np.ndarray) -> np.ndarray:
    return np.asarray(labels, dtype=np.int64).astype("<f4")


def _f32_to_labels(arr: np.ndarray, name: str) -> np.ndarray:
    rounded = np.rint(arr)
    if not np.array_equal(rounded, arr):
        raise BundleError(f"{name}: non-integer label values in blob")
    return rounded.astype(np.int64)


# ---------------------------------------------------------------------------
# save / load


def save_bundle(bundle: SceneBundle, path: str | Path) -> None:
    """Write ``bundle`` to directory ``path``; save + load is the identity.

    Two saves of the same bundle produce byte-identical directories.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    pts = bundle.points
    manifest: dict = {
        "format": FORMAT_TAG,
        "scene_id": bundle.scene_id,
        "seed": int(bundle.seed),
        "d": int(bundle.dim),
        "C": bundle.text.num_categories,
        "N": pts.num_points,
        "categories": list(bundle.text.names),
        "points": "points.bin",
        "text": "text.bin",
        "gt": "gt.bin" if bundle.gt is not None else None,
        "extras": bundle.extras,
    }
    _write_blob(out / "points.bin", pts.coords)
    _write_blob(out / "text.bin", bundle.text.rows)
    if bundle.gt is not None:
        _write_blob(out / "gt.bin", _labels_to_f32(bundle.gt))

    if pts.cluster_ids is not None:
        manifest["cluster_mode"] = "ids"
        manifest["clusters"] = "cluster_ids.bin"
        _write_blob(out / "cluster_ids.bin", _labels_to_f32(pts.cluster_ids))
    else:
        manifest["cluster_mode"] = "offsets"
        manifest["clusters"] = "cluster_offsets.bin"
        _write_blob(out / "cluster_offsets.bin", pts.cluster_offsets)

    frames_meta = []
    for k, frame in enumerate(bundle.frames):
        cam = frame.camera
        names = {
            "depth": f"frame_{k}_depth.bin",
            "maskprobs": f"frame_{k}_maskprobs.bin",
            "maskemb": f"frame_{k}_maskemb.bin",
            "pose": f"frame_{k}_pose.bin",
            "intrinsics": f"frame_{k}_intrinsics.bin",
        }
        frames_meta.append(
            {"width": cam.width, "height": cam.height, "m": frame.num_masks, **names}
        )
        _write_blob(out / names["depth"], frame.depth)
        _write_blob(out / names["maskprobs"], frame.mask_probs)
        _write_blob(out / names["maskemb"], frame.mask_embeddings)
        _write_blob(out / names["pose"], cam.pose)
        intr = np.array([cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height])
        _write_blob(out / names["intrinsics"], intr)
    manifest["frames"] = frames_meta

    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (out / "manifest.json").write_text(text, encoding="utf-8")


def load_bundle(path: str | Path) -> SceneBundle:
    """Load a bundle directory, raising ``BundleError`` on any defect."""
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise BundleError(f"manifest: missing file {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"manifest: invalid JSON ({exc})") from exc

    if manifest.get("format") != FORMAT_TAG:
        raise BundleError(f"manifest: unknown format tag {manifest.get('format')!r}")

    d = int(manifest["d"])
    num_cat = int(manifest["C"])
    n = int(manifest["N"])

    coords = _read_blob(root / manifest["points"], (n, 3), "points")
    text_rows = _read_blob(root / manifest["text"], (num_cat, d), "text")
    names = [str(s) for s in manifest["categories"]]
    if len(names) != num_cat:
        raise BundleError("categories: name count does not match C")

    gt = None
    if manifest.get("gt"):
        gt = _f32_to_labels(_read_blob(root / manifest["gt"], (n,), "gt"), "gt")

    mode = manifest.get("cluster_mode")
    cluster_ids = cluster_offsets = None
    if mode == "ids":
        cluster_ids = _f32_to_labels(
            _read_blob(root / manifest["clusters"], (n,), "cluster_ids"), "cluster_ids"
        )
    elif mode == "offsets":
        cluster_offsets = _read_blob(root / manifest["clusters"], (n, 3), "cluster_offsets")
    else:
        raise BundleError(f"cluster_mode: unknown value {mode!r}")

    frames = []
    for k, meta in enumerate(manifest["frames"]):
        w, h, m = int(meta["width"]), int(meta["height"]), int(meta["m"])
        tag = f"frames[{k}]"
        depth = _read_blob(root / meta["depth"], (h, w), f"{tag}.depth")
        probs = _read_blob(root / meta["maskprobs"], (h * w, m), f"{tag}.mask_probs")
        emb = _read_blob(root / meta["maskemb"], (m, d), f"{tag}.mask_embeddings")
        pose = _read_blob(root / meta["pose"], (4, 4), f"{tag}.pose")
        intr = _read_blob(root / meta["intrinsics"], (6,), f"{tag}.intrinsics")
        if int(intr[4]) != w or int(intr[5]) != h:
            raise BundleError(f"{tag}.intrinsics: width/height disagree with manifest")
        cam = CameraModel(
            fx=float(intr[0]), fy=float(intr[1]), cx=float(intr[2]), cy=float(intr[3]),
            width=w, height=h, pose=pose,
        )
        frames.append(FrameObservation(cam, depth, probs, emb))

    bundle = SceneBundle(
        points=PointSet(coords, cluster_ids, cluster_offsets),
        frames=frames,
        text=TextPrototypes(text_rows, names),
        gt=gt,
        dim=d,
        scene_id=str(manifest["scene_id"]),
        seed=int(manifest["seed"]),
        extras=dict(manifest.get("extras") or {}),
    )
    violations = validate_bundle(bundle)
    if violations:
        raise BundleError("invariant violation: " + "; ".join(violations))
    return bundle


# ---------------------------------------------------------------------------
# validation


def _check_finite(violations: list[str], name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        violations.append(f"{name}: non-finite values")


def validate_bundle(bundle: SceneBundle) -> list[str]:
    """Return a list of human-readable invariant violations (empty = valid)."""
    v: list[str] = []
    pts = bundle.points

    if pts.coords.ndim != 2 or pts.coords.shape[1] != 3:
        v.append("points.coords: expected shape (N, 3)")
        return v
    n = pts.num_points
    if n < 1:
        v.append("points.coords: N must be >= 1")
    _check_finite(v, "points.coords", pts.coords)

    has_ids = pts.cluster_ids is not None
    has_off = pts.cluster_offsets is not None
    if has_ids == has_off:
        v.append("points: exactly one of cluster_ids / cluster_offsets must be present")
    if has_ids:
        if pts.cluster_ids.shape != (n,):
            v.append("points.cluster_ids: length mismatch")
        elif np.any(pts.cluster_ids < -1):
            v.append("points.cluster_ids: ids must be >= -1")
    if has_off and pts.cluster_offsets.shape != (n, 3):
        v.append("points.cluster_offsets: expected shape (N, 3)")

    text = bundle.text
    if text.num_categories < 1:
        v.append("text.rows: C must be >= 1")
    if text.rows.ndim != 2 or text.dim != bundle.dim:
        v.append("text.rows: embedding dim disagrees with bundle d")
    _check_finite(v, "text.rows", text.rows)
    if text.rows.ndim == 2 and np.any(np.linalg.norm(text.rows.astype(np.float64), axis=1) == 0.0):
        v.append("text.rows: zero-norm prototype row")
    if len(text.names) != text.num_categories:
        v.append("text.names: name count does not match C")

    if bundle.gt is not None:
        if bundle.gt.shape != (n,):
            v.append("gt: length does not match point count")
        else:
            if np.any((bundle.gt < -1) | (bundle.gt >= text.num_categories)):
                v.append("gt: labels outside {-1, .., C-1}")

    for k, frame in enumerate(bundle.frames):
        tag = f"frames[{k}]"
        cam = frame.camera
        if not (cam.fx > 0 and cam.fy > 0):
            v.append(f"{tag}.intrinsics: fx, fy must be > 0")
        if not (0 <= cam.cx < cam.width and 0 <= cam.cy < cam.height):
            v.append(f"{tag}.intrinsics: principal point outside image")
        if cam.pose.shape != (4, 4):
            v.append(f"{tag}.pose: expected 4x4 matrix")
        else:
            rot = cam.pose[:3, :3].astype(np.float64)
            err = np.max(np.abs(rot.T @ rot - np.eye(3)))
            if not err < ROTATION_TOL:
                v.append(f"{tag}.pose: rotation block not orthonormal (err={err:.2e})")
            elif np.linalg.det(rot) < 0:
                v.append(f"{tag}.pose: rotation block has negative determinant")
            if not np.allclose(cam.pose[3], [0, 0, 0, 1]):
                v.append(f"{tag}.pose: last row must be [0, 0, 0, 1]")

        if frame.depth.shape != (cam.height, cam.width):
            v.append(f"{tag}.depth: shape disagrees with intrinsics")
        else:
            _check_finite(v, f"{tag}.depth", frame.depth)
            if np.any(frame.depth < 0):
                v.append(f"{tag}.depth: negative depth reading")

        if frame.mask_probs.ndim != 2 or frame.mask_embeddings.ndim != 2:
            v.append(f"{tag}: mask_probs and mask_embeddings must be 2-D")
            continue
        m = frame.num_masks
        if frame.mask_probs.shape != (cam.height * cam.width, m):
            v.append(f"{tag}.mask_probs: expected shape (width*height, m)")
        else:
            _check_finite(v, f"{tag}.mask_probs", frame.mask_probs)
            if np.any((frame.mask_probs < 0) | (frame.mask_probs > 1)):
                v.append(f"{tag}.mask_probs: entries outside [0, 1]")
        if frame.mask_embeddings.shape != (m, bundle.dim):
            v.append(f"{tag}.mask_embeddings: expected shape (m, d)")
        else:
            _check_finite(v, f"{tag}.mask_embeddings", frame.mask_embeddings)

    return v


def bundles_equal(a: SceneBundle, b: SceneBundle) -> bool:
    """Field-for-field equality, bitwise on all tensors."""
    def eq(x, y):
        if x is None or y is None:
            return x is None and y is None
        return x.shape == y.shape and np.array_equal(x, y)

    if (a.scene_id, a.seed, a.dim, a.text.names, a.extras) != (
        b.scene_id, b.seed, b.dim, b.text.names, b.extras
    ):
        return False
    if not (
        eq(a.points.coords, b.points.coords)
        and eq(a.points.cluster_ids, b.points.cluster_ids)
        and eq(a.points.cluster_offsets, b.points.cluster_offsets)
        and eq(a.text.rows, b.text.rows)
        and eq(a.gt, b.gt)
    ):
        return False
    if len(a.frames) != len(b.frames):
        return False
    for fa, fb in zip(a.frames, b.frames):
        ca, cb = fa.camera, fb.camera
        if (ca.fx, ca.fy, ca.cx, ca.cy, ca.width, ca.height) != (
            cb.fx, cb.fy, cb.cx, cb.cy, cb.width, cb.height
        ):
            return False
        if not (
            eq(ca.pose, cb.pose)
            and eq(fa.depth, fb.depth)
            and eq(fa.mask_probs, fb.mask_probs)
            and eq(fa.mask_embeddings, fb.mask_embeddings)
        ):
            return False
    return True

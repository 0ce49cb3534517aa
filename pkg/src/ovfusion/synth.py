"""Synthetic scene bundles with controllable 2D- and 3D-stage noise.

Scenes are disjoint axis-aligned boxes on a ground plane, observed by a
ring of cameras with exact z-buffered depth, one mask per visible object
per frame, and orthonormal text prototypes.  Noiseless scenes are exactly
recoverable, which turns the generator into a ground-truth oracle for the
two denoising stages:

* 2D noise adds a wrong candidate mask on a pixel (the big-mask capture
  failure): the pixel's candidate set becomes ambiguous, and per-pixel
  voting can resolve it.  The wrong mask is always drawn from categories
  *above* the pixel's own, so the lowest-index tie-break provably recovers
  the truth when the 2D filter is on; pixels of the top category are left
  alone.  Mask-centered baseline assignment instead hands these pixels to
  the wrong mask outright.
* 3D noise replaces a pixel's assignment entirely with a wrong-category
  mask (the unscreened cross-frame fusion failure): no per-pixel vote can
  fix it, only the object-level 3D filter can.

Noise never touches ground truth, point coordinates, or camera geometry.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bundle import (
    CameraModel,
    FrameObservation,
    PointSet,
    SceneBundle,
    TextPrototypes,
)
from .pixels import DEFAULT_BETA, classify_rows
from .projection import DEFAULT_EPS_DEPTH, _round_half_away
from .aggregate import DEFAULT_RADIUS
from .pipeline import run_pipeline
from .semantics import classify_points, evaluate


class SynthError(RuntimeError):
    """Raised when a scene layout cannot be satisfied."""


@dataclass
class SynthConfig:
    n_classes: int = 6
    dim: int = 16
    n_objects: int = 4
    points_per_object: int = 150
    n_frames: int = 6
    image_size: int = 64
    p2d: float = 0.0           # wrong-candidate rate, per covered pixel
    p3d: float = 0.0           # replacement rate, per covered pixel
    sigma: float = 0.0         # gaussian noise on mask embeddings
    seed: int = 0
    cluster_mode: str = "offsets"   # offsets | ids
    noise_seed: int | None = None   # defaults to seed + 1
    arena: float | None = None      # half-extent of the layout square; derived if None

    def __post_init__(self):
        for name in ("p2d", "p3d"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"SynthConfig: {name} must be in [0, 1]")
        if self.sigma < 0:
            raise ValueError("SynthConfig: sigma must be >= 0")
        if self.cluster_mode not in ("offsets", "ids"):
            raise ValueError(f"SynthConfig: unknown cluster_mode {self.cluster_mode!r}")
        if self.dim < self.n_classes:
            warnings.warn(
                "SynthConfig: dim < n_classes, prototypes cannot be orthonormal",
                stacklevel=2,
            )


def orthonormal_prototypes(n_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random orthonormal category prototypes (rows), float32.

    Falls back to plain row normalization when dim < n_classes.
    """
    if dim >= n_classes:
        a = rng.standard_normal((dim, n_classes))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        rows = q.T
    else:
        rows = rng.standard_normal((n_classes, dim))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def _arena_half_extent(cfg: SynthConfig) -> float:
    if cfg.arena is not None:
        return cfg.arena
    return max(2.0, 1.1 * np.sqrt(float(cfg.n_objects)))


def _sample_layout(cfg: SynthConfig, rng: np.random.Generator):
    """Disjoint axis-aligned boxes: centers, sizes and a class per object."""
    arena = _arena_half_extent(cfg)
    gap = 0.3
    centers = np.zeros((cfg.n_objects, 2))
    sizes = np.zeros((cfg.n_objects, 3))
    placed = 0
    for _ in range(max(1000, 400 * cfg.n_objects)):
        if placed == cfg.n_objects:
            break
        size = rng.uniform([0.5, 0.5, 0.6], [0.8, 0.8, 1.0])
        lim = max(arena - 0.5 * max(size[0], size[1]), 0.0)
        center = rng.uniform(-lim, lim, size=2)
        ok = True
        for j in range(placed):
            sep_x = 0.5 * (size[0] + sizes[j, 0]) + gap
            sep_y = 0.5 * (size[1] + sizes[j, 1]) + gap
            if abs(center[0] - centers[j, 0]) < sep_x and abs(center[1] - centers[j, 1]) < sep_y:
                ok = False
                break
        if ok:
            centers[placed] = center
            sizes[placed] = size
            placed += 1
    if placed < cfg.n_objects:
        raise SynthError(
            f"gen_scene: could not place {cfg.n_objects} disjoint objects after retries"
        )
    classes = rng.choice(
        cfg.n_classes, size=cfg.n_objects, replace=cfg.n_objects > cfg.n_classes
    ).astype(np.int64)
    return centers, sizes, classes


def _sample_surface_points(
    center: np.ndarray, size: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Points on a box's four side faces and top face (never the bottom)."""
    sx, sy, sz = size
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy])
    face = rng.choice(5, size=count, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=count)
    v = rng.uniform(-0.5, 0.5, size=count)
    pts = np.zeros((count, 3))
    for i in range(count):
        if face[i] == 0:
            pts[i] = [-0.5 * sx, u[i] * sy, (v[i] + 0.5) * sz]
        elif face[i] == 1:
            pts[i] = [0.5 * sx, u[i] * sy, (v[i] + 0.5) * sz]
        elif face[i] == 2:
            pts[i] = [u[i] * sx, -0.5 * sy, (v[i] + 0.5) * sz]
        elif face[i] == 3:
            pts[i] = [u[i] * sx, 0.5 * sy, (v[i] + 0.5) * sz]
        else:
            pts[i] = [u[i] * sx, v[i] * sy, sz]
    pts[:, 0] += center[0]
    pts[:, 1] += center[1]
    return pts


def _ring_camera(
    angle: float, ring_radius: float, height: float, target: np.ndarray, image_size: int
) -> CameraModel:
    eye = np.array([ring_radius * np.cos(angle), ring_radius * np.sin(angle), height])
    fwd = target - eye
    fwd /= np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])        # rows: camera x, y, z in world
    pose = np.eye(4)
    pose[:3, :3] = rot
    pose[:3, 3] = -rot @ eye
    s = image_size
    return CameraModel(
        fx=0.75 * s, fy=0.75 * s, cx=s / 2.0, cy=s / 2.0,
        width=s, height=s, pose=pose.astype(np.float32),
    )


def _render_frame(
    cam: CameraModel, coords: np.ndarray, object_of_point: np.ndarray
):
    """Exact z-buffer over the sampled points: depth map + winning object."""
    pts = coords.astype(np.float64)
    rot = cam.rotation()
    cam_pts = pts @ rot.T + cam.translation()
    x, y, z = cam_pts[:, 0], cam_pts[:, 1], cam_pts[:, 2]
    ok = z > 0
    zs = np.where(ok, z, 1.0)
    u = _round_half_away(cam.fx * x / zs + cam.cx)
    v = _round_half_away(cam.fy * y / zs + cam.cy)
    ok &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)

    h, w = cam.height, cam.width
    zbuf = np.full((h, w), np.inf)
    idx = np.nonzero(ok)[0]
    ui = u[idx].astype(np.int64)
    vi = v[idx].astype(np.int64)
    np.minimum.at(zbuf, (vi, ui), z[idx])

    winner = np.full((h, w), -1, dtype=np.int64)
    at_min = z[idx] == zbuf[vi, ui]
    big = np.full((h, w), np.iinfo(np.int64).max)
    np.minimum.at(big, (vi[at_min], ui[at_min]), idx[at_min])
    seen = big < np.iinfo(np.int64).max
    winner[seen] = object_of_point[big[seen]]

    depth = np.where(np.isfinite(zbuf), zbuf, 0.0).astype(np.float32)
    return depth, winner


def gen_scene(cfg: SynthConfig) -> SceneBundle:
    """Generate a fully labeled scene bundle, deterministic in cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    prototypes = orthonormal_prototypes(cfg.n_classes, cfg.dim, rng)
    centers, sizes, classes = _sample_layout(cfg, rng)

    coords_list = []
    for o in range(cfg.n_objects):
        coords_list.append(
            _sample_surface_points(centers[o], sizes[o], cfg.points_per_object, rng)
        )
    coords = np.concatenate(coords_list).astype(np.float32)
    object_of_point = np.repeat(np.arange(cfg.n_objects), cfg.points_per_object)
    gt = classes[object_of_point]

    arena = _arena_half_extent(cfg)
    target = np.array([0.0, 0.0, 0.4])
    ring_radius = arena + 2.2
    height = 2.6

    frames = []
    for k in range(cfg.n_frames):
        angle = 2.0 * np.pi * k / cfg.n_frames
        cam = _ring_camera(angle, ring_radius, height, target, cfg.image_size)
        depth, winner = _render_frame(cam, coords, object_of_point)
        visible = np.unique(winner[winner >= 0])
        m = visible.size
        probs = np.zeros((cam.height * cam.width, m), dtype=np.float32)
        flat_winner = winner.reshape(-1)
        embs = np.zeros((m, cfg.dim), dtype=np.float32)
        for j, obj in enumerate(visible):
            probs[flat_winner == obj, j] = 1.0
            noise = cfg.sigma * rng.standard_normal(cfg.dim) if cfg.sigma > 0 else 0.0
            embs[j] = (prototypes[classes[obj]].astype(np.float64) + noise).astype(
                np.float32
            )
        frames.append(FrameObservation(cam, depth, probs, embs))

    obj_centers3 = np.column_stack(
        [centers[:, 0], centers[:, 1], 0.5 * sizes[:, 2]]
    ).astype(np.float32)
    if cfg.cluster_mode == "ids":
        points = PointSet(coords, cluster_ids=object_of_point.astype(np.int64))
    else:
        offsets = (obj_centers3[object_of_point] - coords).astype(np.float32)
        points = PointSet(coords, cluster_offsets=offsets)

    return SceneBundle(
        points=points,
        frames=frames,
        text=TextPrototypes(prototypes, [f"class_{i}" for i in range(cfg.n_classes)]),
        gt=gt,
        dim=cfg.dim,
        scene_id=f"synth-{cfg.seed}",
        seed=cfg.seed,
    )


def inject_noise(
    bundle: SceneBundle,
    p2d: float,
    p3d: float,
    seed: int,
    emb_sigma: float = 0.0,
) -> SceneBundle:
    """Return a copy of ``bundle`` with 2D and 3D stage noise injected.

    Wrong-category masks reuse an existing mask of that category in the
    frame when one exists, otherwise a fresh mask (category prototype plus
    optional gaussian noise) is appended.  Ground truth, coordinates and
    cameras are untouched; a fixed seed gives an identical corruption
    pattern.
    """
    rng = np.random.default_rng(seed)
    n_classes = bundle.text.num_categories
    prototypes = bundle.text.rows.astype(np.float64)

    new_frames = []
    for frame in bundle.frames:
        probs = frame.mask_probs.copy()
        m0 = frame.num_masks
        covered = np.nonzero(probs.max(axis=1) > 0)[0] if m0 else np.empty(0, np.int64)
        if covered.size == 0 or n_classes < 2:
            new_frames.append(
                FrameObservation(frame.camera, frame.depth.copy(), probs,
                                 frame.mask_embeddings.copy())
            )
            continue

        mask_classes = classify_rows(frame.mask_embeddings, bundle.text) if m0 else []
        true_col = np.argmax(probs[covered], axis=1)
        true_class = np.asarray(mask_classes)[true_col]

        first_col: dict[int, int] = {}
        for j in range(m0):
            first_col.setdefault(int(mask_classes[j]), j)
        extra_embs: list[np.ndarray] = []

        def col_for(cat: int) -> int:
            if cat not in first_col:
                noise = emb_sigma * rng.standard_normal(bundle.dim) if emb_sigma > 0 else 0.0
                extra_embs.append((prototypes[cat] + noise).astype(np.float32))
                first_col[cat] = m0 + len(extra_embs) - 1
            return first_col[cat]

        edits_add: list[tuple[int, int]] = []
        edits_replace: list[tuple[int, int]] = []
        hit2 = rng.random(covered.size) < p2d
        for i in np.nonzero(hit2)[0]:
            t = int(true_class[i])
            if t >= n_classes - 1:
                continue  # no higher category to capture this pixel
            wrong = int(rng.integers(t + 1, n_classes))
            edits_add.append((int(covered[i]), col_for(wrong)))
        hit3 = rng.random(covered.size) < p3d
        for i in np.nonzero(hit3)[0]:
            t = int(true_class[i])
            wrong = int(rng.integers(0, n_classes - 1))
            if wrong >= t:
                wrong += 1
            edits_replace.append((int(covered[i]), col_for(wrong)))

        m_new = m0 + len(extra_embs)
        out = np.zeros((probs.shape[0], m_new), dtype=np.float32)
        out[:, :m0] = probs
        for pix, col in edits_add:
            out[pix, col] = 1.0
        for pix, col in edits_replace:
            out[pix, :] = 0.0
            out[pix, col] = 1.0
        embs = frame.mask_embeddings
        if extra_embs:
            embs = np.concatenate([embs, np.stack(extra_embs)])
        new_frames.append(
            FrameObservation(frame.camera, frame.depth.copy(), out, embs.astype(np.float32))
        )

    points = PointSet(
        bundle.points.coords.copy(),
        None if bundle.points.cluster_ids is None else bundle.points.cluster_ids.copy(),
        None if bundle.points.cluster_offsets is None else bundle.points.cluster_offsets.copy(),
    )
    return SceneBundle(
        points=points,
        frames=new_frames,
        text=TextPrototypes(bundle.text.rows.copy(), list(bundle.text.names)),
        gt=None if bundle.gt is None else bundle.gt.copy(),
        dim=bundle.dim,
        scene_id=bundle.scene_id,
        seed=bundle.seed,
        extras=dict(bundle.extras),
    )


ABLATION_CELLS = (
    (False, False),
    (True, False),
    (False, True),
    (True, True),
)


def ablation_matrix(
    cfg: SynthConfig,
    beta: float = DEFAULT_BETA,
    eps_depth: float = DEFAULT_EPS_DEPTH,
    radius: float = DEFAULT_RADIUS,
) -> list[dict]:
    """Run the 2x2 filter grid on one noisy scene; metrics against gt.

    Cells run on the same injected bundle, ordered (2D, 3D): off/off,
    on/off, off/on, on/on.
    """
    bundle = gen_scene(cfg)
    noise_seed = cfg.noise_seed if cfg.noise_seed is not None else cfg.seed + 1
    noisy = inject_noise(bundle, cfg.p2d, cfg.p3d, noise_seed, emb_sigma=cfg.sigma)
    rows = []
    for f2, f3 in ABLATION_CELLS:
        field = run_pipeline(
            noisy, beta=beta, eps_depth=eps_depth, radius=radius,
            use_2d_filter=f2, use_3d_filter=f3,
        )
        pred = classify_points(field, noisy.text)
        report = evaluate(pred, noisy.gt, noisy.text.num_categories)
        rows.append(
            {"filter_2d": f2, "filter_3d": f3, "miou": report.miou, "acc": report.acc}
        )
    return rows

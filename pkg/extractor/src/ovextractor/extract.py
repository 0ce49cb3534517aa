"""The extraction pipeline: RGB-D capture -> scene bundle directory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import make_encoder, make_mask_generator
from .bundlefmt import write_bundle
from .capture import (
    ExtractError,
    pose_world_to_camera,
    read_color,
    read_depth,
    read_intrinsics,
    read_labels,
    read_points,
    read_pose_c2w,
)


@dataclass
class FramePaths:
    color: Path
    depth: Path
    pose: Path
    intrinsics: Path


@dataclass
class ExtractionJob:
    frames: list[FramePaths]
    categories: list[str]
    points: Path
    out: Path
    cluster_ids: Path | None = None
    gt: Path | None = None
    encoder: str = "toy-color/v1"
    mask_generator: str = "toy-color/v1"
    stride: int = 1
    seed: int = 0
    scene_id: str = "capture"

    def __post_init__(self):
        if self.stride < 1:
            raise ExtractError("stride must be >= 1")
        if not self.frames:
            raise ExtractError("job lists no frames")
        if not self.categories:
            raise ExtractError("job lists no categories")


def load_job(path: str | Path, overrides: dict | None = None) -> ExtractionJob:
    """Build a job from a JSON file; relative paths resolve next to it."""
    jpath = Path(path)
    if not jpath.is_file():
        raise ExtractError(f"missing job file: {jpath}")
    data = json.loads(jpath.read_text(encoding="utf-8"))
    data.update(overrides or {})
    base = jpath.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        frames = [
            FramePaths(
                color=resolve(f["color"]),
                depth=resolve(f["depth"]),
                pose=resolve(f["pose"]),
                intrinsics=resolve(f["intrinsics"]),
            )
            for f in data["frames"]
        ]
        return ExtractionJob(
            frames=frames,
            categories=list(data["categories"]),
            points=resolve(data["points"]),
            out=resolve(data["out"]),
            cluster_ids=resolve(data["cluster_ids"]) if data.get("cluster_ids") else None,
            gt=resolve(data["gt"]) if data.get("gt") else None,
            encoder=data.get("encoder", "toy-color/v1"),
            mask_generator=data.get("mask_generator", "toy-color/v1"),
            stride=int(data.get("stride", 1)),
            seed=int(data.get("seed", 0)),
            scene_id=str(data.get("scene_id", "capture")),
        )
    except KeyError as exc:
        raise ExtractError(f"job file {jpath} is missing key {exc}") from exc


def extract(job: ExtractionJob) -> Path:
    """Run the encoder + mask generator over the capture, write the bundle.

    Returns the bundle directory.  All validation failures name the file
    that caused them; the emitted bundle records the model identifiers,
    prompt template and stride in the manifest extras.
    """
    encoder = make_encoder(job.encoder)
    maskgen = make_mask_generator(job.mask_generator)

    points = read_points(job.points)
    n = points.shape[0]
    cluster_ids = read_labels(job.cluster_ids, n, "cluster_ids") if job.cluster_ids else None
    gt = read_labels(job.gt, n, "gt") if job.gt else None

    text_rows = encoder.encode_text(job.categories)
    if gt is not None and gt.max(initial=-1) >= len(job.categories):
        raise ExtractError(f"gt file {job.gt} labels exceed the category count")

    frames_out = []
    for paths in job.frames[:: job.stride]:
        color = read_color(paths.color)
        depth = read_depth(paths.depth)
        intr = read_intrinsics(paths.intrinsics)
        h, w = color.shape[:2]
        if depth.shape != (h, w):
            raise ExtractError(
                f"depth {paths.depth} shape {depth.shape} disagrees with color {paths.color}"
            )
        if (intr["width"], intr["height"]) != (w, h):
            raise ExtractError(
                f"intrinsics {paths.intrinsics} disagree with image size of {paths.color}"
            )
        pose = pose_world_to_camera(read_pose_c2w(paths.pose))

        masks = maskgen.masks(color)
        m = len(masks)
        probs = np.zeros((h * w, m), dtype=np.float32)
        embs = np.zeros((m, encoder.dim), dtype=np.float32)
        for j, mask in enumerate(masks):
            probs[:, j] = np.clip(mask.reshape(-1), 0.0, 1.0)
            embs[j] = encoder.encode_region(color, mask)
        frames_out.append(
            {
                "depth": depth,
                "mask_probs": probs,
                "mask_embeddings": embs,
                "pose_w2c": pose,
                **intr,
            }
        )

    write_bundle(
        job.out,
        scene_id=job.scene_id,
        seed=job.seed,
        categories=job.categories,
        text_rows=text_rows,
        points=points,
        cluster_ids=cluster_ids,
        gt=gt,
        frames=frames_out,
        extras={
            "extractor": {
                "encoder": encoder.identifier,
                "mask_generator": maskgen.identifier,
                "prompt_template": encoder.prompt_template,
                "stride": job.stride,
            }
        },
    )
    return job.out

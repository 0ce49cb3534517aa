"""Writer for the scene-bundle directory format.

Implemented against the format contract (manifest.json + row-major
little-endian float32 blobs), independently of the consumer package, so
that byte-level interchange is an actual guarantee rather than shared code.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_TAG = "scene-bundle/1"


def write_blob(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_bundle(
    out: Path,
    *,
    scene_id: str,
    seed: int,
    categories: list[str],
    text_rows: np.ndarray,          # (C, d)
    points: np.ndarray,             # (N, 3)
    cluster_ids: np.ndarray | None,  # (N,) ints, or None -> all -1
    gt: np.ndarray | None,          # (N,) ints in {-1..C-1}
    frames: list[dict],             # depth (H,W), mask_probs (H*W, m),
                                    # mask_embeddings (m, d), pose_w2c (4,4),
                                    # fx, fy, cx, cy, width, height
    extras: dict,
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    n = int(points.shape[0])
    c, d = int(text_rows.shape[0]), int(text_rows.shape[1])
    if cluster_ids is None:
        cluster_ids = np.full(n, -1, dtype=np.int64)

    manifest: dict = {
        "format": FORMAT_TAG,
        "scene_id": scene_id,
        "seed": int(seed),
        "d": d,
        "C": c,
        "N": n,
        "categories": list(categories),
        "points": "points.bin",
        "text": "text.bin",
        "gt": "gt.bin" if gt is not None else None,
        "cluster_mode": "ids",
        "clusters": "cluster_ids.bin",
        "extras": extras,
    }
    write_blob(out / "points.bin", points)
    write_blob(out / "text.bin", text_rows)
    write_blob(out / "cluster_ids.bin", np.asarray(cluster_ids, dtype=np.int64))
    if gt is not None:
        write_blob(out / "gt.bin", np.asarray(gt, dtype=np.int64))

    frames_meta = []
    for k, frame in enumerate(frames):
        names = {
            "depth": f"frame_{k}_depth.bin",
            "maskprobs": f"frame_{k}_maskprobs.bin",
            "maskemb": f"frame_{k}_maskemb.bin",
            "pose": f"frame_{k}_pose.bin",
            "intrinsics": f"frame_{k}_intrinsics.bin",
        }
        h, w = frame["depth"].shape
        m = int(frame["mask_probs"].shape[1])
        frames_meta.append({"width": w, "height": h, "m": m, **names})
        write_blob(out / names["depth"], frame["depth"])
        write_blob(out / names["maskprobs"], frame["mask_probs"])
        write_blob(out / names["maskemb"], frame["mask_embeddings"])
        write_blob(out / names["pose"], frame["pose_w2c"])
        intr = np.array(
            [frame["fx"], frame["fy"], frame["cx"], frame["cy"], w, h], dtype=np.float64
        )
        write_blob(out / names["intrinsics"], intr)
    manifest["frames"] = frames_meta

    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

"""Per-pixel feature assignment from candidate masks.

Each pixel gathers the embeddings of every mask whose probability exceeds
the gate threshold, votes a category among them by cosine classification,
drops the candidates that disagree, and average-pools the rest.  Pixels
with no candidate are invalid and carry an all-zero feature.

``baseline_pixel_features`` is the no-filter counterpart used by ablations:
each pixel simply takes its strongest mask's embedding, later masks winning
ties.  That reproduces the failure mode where a large overlapping mask
captures pixels of a smaller object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import FrameObservation, TextPrototypes

DEFAULT_BETA = 0.5


@dataclass
class PixelFeatureField:
    """Pooled per-pixel features for one frame (invalid pixels are zero)."""

    features: np.ndarray   # (n_pix, d) float64
    valid: np.ndarray      # (n_pix,) bool
    labels: np.ndarray     # (n_pix,) int64, -1 where invalid

    @property
    def num_pixels(self) -> int:
        return int(self.valid.shape[0])


def candidate_masks(row: np.ndarray, beta: float) -> np.ndarray:
    """Indices of masks whose probability strictly exceeds ``beta``, ascending."""
    row = np.asarray(row)
    return np.nonzero(row > beta)[0]


def _unit_rows(rows: np.ndarray, what: str) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError(f"{what}: zero-norm embedding")
    return rows / norms


def classify_rows(rows: np.ndarray, text: TextPrototypes) -> np.ndarray:
    """Cosine-argmax category index for each row; ties go to the lowest index."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    sims = _unit_rows(rows, "embedding") @ _unit_rows(text.rows, "text.rows").T
    return np.argmax(sims, axis=1).astype(np.int64)


def classify_embedding(f: np.ndarray, text: TextPrototypes) -> int:
    """Category of a single embedding under cosine similarity."""
    return int(classify_rows(np.asarray(f)[None, :], text)[0])


def vote_and_filter(
    cands: np.ndarray, text: TextPrototypes
) -> tuple[int, np.ndarray]:
    """Vote the modal category of ``cands`` and keep only the agreeing ones.

    Ties resolve to the lowest category index; the retained candidates keep
    their original order.  Raises on an empty candidate list.
    """
    cands = np.asarray(cands, dtype=np.float64)
    if cands.ndim == 1:
        cands = cands[None, :]
    if cands.shape[0] == 0:
        raise ValueError("vote_and_filter: empty candidate list")
    labels = classify_rows(cands, text)
    counts = np.bincount(labels, minlength=text.num_categories)
    label = int(np.argmax(counts))
    return label, cands[labels == label]


def assign_pixel_features(
    frame: FrameObservation, text: TextPrototypes, beta: float = DEFAULT_BETA
) -> PixelFeatureField:
    """Threshold-gate, vote, filter and average-pool every pixel of a frame.

    Equivalent to running candidate_masks + vote_and_filter + mean per pixel,
    but vectorized over pixels.  The pooled mean is accumulated in ascending
    mask order with a float64 accumulator, so outputs are bit-reproducible.
    """
    n_pix = frame.mask_probs.shape[0]
    m = frame.num_masks
    d = text.dim
    if m == 0:
        return PixelFeatureField(
            features=np.zeros((n_pix, d)),
            valid=np.zeros(n_pix, dtype=bool),
            labels=np.full(n_pix, -1, dtype=np.int64),
        )

    gate = frame.mask_probs > beta                      # (n_pix, m)
    mask_labels = classify_rows(frame.mask_embeddings, text)
    emb = frame.mask_embeddings.astype(np.float64)

    counts = np.zeros((n_pix, text.num_categories), dtype=np.int64)
    for j in range(m):
        counts[gate[:, j], mask_labels[j]] += 1
    valid = counts.sum(axis=1) > 0
    labels = np.where(valid, np.argmax(counts, axis=1), -1).astype(np.int64)

    sums = np.zeros((n_pix, d))
    kept = np.zeros(n_pix, dtype=np.int64)
    for j in range(m):
        sel = gate[:, j] & (labels == mask_labels[j])
        sums[sel] += emb[j]
        kept[sel] += 1
    features = sums / np.maximum(kept, 1)[:, None]
    features[~valid] = 0.0
    return PixelFeatureField(features=features, valid=valid, labels=labels)


def baseline_pixel_features(
    frame: FrameObservation, text: TextPrototypes, beta: float = DEFAULT_BETA
) -> PixelFeatureField:
    """Mask-centered assignment with no voting (the 2D filter switched off).

    Each pixel takes the embedding of its maximum-probability candidate;
    probability ties go to the highest mask index, modeling the bias toward
    large late-listed masks that object-level voting is meant to correct.
    Validity matches assign_pixel_features (some probability above beta).
    """
    n_pix = frame.mask_probs.shape[0]
    m = frame.num_masks
    d = text.dim
    if m == 0:
        return PixelFeatureField(
            features=np.zeros((n_pix, d)),
            valid=np.zeros(n_pix, dtype=bool),
            labels=np.full(n_pix, -1, dtype=np.int64),
        )

    gate = frame.mask_probs > beta
    valid = gate.any(axis=1)
    # argmax over reversed columns -> ties resolve to the highest index
    rev = frame.mask_probs[:, ::-1]
    sel = (m - 1) - np.argmax(rev, axis=1)

    mask_labels = classify_rows(frame.mask_embeddings, text)
    emb = frame.mask_embeddings.astype(np.float64)
    features = np.where(valid[:, None], emb[sel], 0.0)
    labels = np.where(valid, mask_labels[sel], -1).astype(np.int64)
    return PixelFeatureField(features=features, valid=valid, labels=labels)

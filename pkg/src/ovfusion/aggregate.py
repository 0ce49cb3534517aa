"""Object-level screening and pooling of raw point features.

Points are grouped into object masks (directly from cluster ids, or by
single-linkage grouping of offset-shifted points).  Each mask votes a
category over all raw features it contains, screens out the features that
disagree, then pools:

* a point with m >= 1 surviving features of its own averages those;
* a point with m = 0 inherits the mean of the mask's whole keep-set;
* unassigned points (mask -1) fall back to unfiltered self-averaging;
* a mask with no raw features at all yields invalid points.

``fuse_unfiltered`` is the no-filter baseline for ablations: every point
averages all of its raw features with no screening.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .bundle import PointSet, TextPrototypes
from .pixels import classify_embedding, classify_rows
from .projection import RawPointFeatures

DEFAULT_RADIUS = 0.1


@dataclass
class ObjectMasks:
    """Dense mask id per point (-1 = unassigned)."""

    mask_of_point: np.ndarray  # (N,) int64 in [-1, mask_count)
    mask_count: int


@dataclass
class PointFeatureField:
    """Final per-point features; invalid points carry label -1."""

    features: np.ndarray  # (N, d) float64
    valid: np.ndarray     # (N,) bool
    labels: np.ndarray    # (N,) int64


class _UnionFind:
    """Array union-find with path compression, for single-linkage grouping."""

    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, i: int) -> int:
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:
            p[i], i = root, p[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_object_masks(points: PointSet, radius: float = DEFAULT_RADIUS) -> ObjectMasks:
    """Derive object masks from whichever clustering side-channel is present.

    Direct ids are relabeled densely (ascending by original id).  Offsets
    shift each point toward its cluster center; shifted points within
    ``radius`` of each other are merged single-linkage via union-find.
    Points with non-finite offsets stay unassigned.
    """
    n = points.num_points
    if points.cluster_ids is not None:
        ids = points.cluster_ids
        assigned = ids >= 0
        uniq, inverse = np.unique(ids[assigned], return_inverse=True)
        out = np.full(n, -1, dtype=np.int64)
        out[assigned] = inverse
        return ObjectMasks(out, int(uniq.size))
    if points.cluster_offsets is None:
        raise ValueError("build_object_masks: neither cluster_ids nor cluster_offsets present")

    offsets = points.cluster_offsets.astype(np.float64)
    shifted = points.coords.astype(np.float64) + offsets
    usable = np.all(np.isfinite(shifted), axis=1)
    out = np.full(n, -1, dtype=np.int64)
    idx = np.nonzero(usable)[0]
    if idx.size == 0:
        return ObjectMasks(out, 0)

    uf = _UnionFind(idx.size)
    tree = cKDTree(shifted[idx])
    for a, b in tree.query_pairs(r=radius, output_type="ndarray"):
        uf.union(int(a), int(b))

    # dense ids in order of first appearance (ascending point index)
    root_to_id: dict[int, int] = {}
    for local in range(idx.size):
        root = uf.find(local)
        if root not in root_to_id:
            root_to_id[root] = len(root_to_id)
        out[idx[local]] = root_to_id[root]
    return ObjectMasks(out, len(root_to_id))


def vote_mask_label(
    raw_features: np.ndarray, text: TextPrototypes
) -> tuple[int, np.ndarray] | None:
    """Vote the modal category over a mask's raw features.

    Returns (label, keep) where ``keep`` flags the features classified as
    the voted label, or None when the mask has no raw features.  Ties go to
    the lowest category index.
    """
    feats = np.asarray(raw_features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats.reshape(0, 0) if feats.size == 0 else feats[None, :]
    if feats.shape[0] == 0:
        return None
    labels = classify_rows(feats, text)
    counts = np.bincount(labels, minlength=text.num_categories)
    label = int(np.argmax(counts))
    return label, labels == label


def aggregate(
    points: PointSet,
    masks: ObjectMasks,
    raw: RawPointFeatures,
    text: TextPrototypes,
) -> PointFeatureField:
    """Screen raw features per object mask and pool final point features."""
    n = points.num_points
    if raw.num_points != n or masks.mask_of_point.shape[0] != n:
        raise ValueError("aggregate: point count mismatch between inputs")
    d = text.dim
    features = np.zeros((n, d))
    valid = np.zeros(n, dtype=bool)
    labels = np.full(n, -1, dtype=np.int64)

    for mid in range(masks.mask_count):
        members = np.nonzero(masks.mask_of_point == mid)[0]
        owners: list[int] = []
        feats: list[np.ndarray] = []
        for i in members:
            for _, f in raw.entries[i]:
                owners.append(i)
                feats.append(f)
        outcome = vote_mask_label(np.array(feats) if feats else np.empty((0, d)), text)
        if outcome is None:
            continue  # mask with no raw features anywhere: points stay invalid
        label, keep = outcome
        stacked = np.asarray(feats, dtype=np.float64)
        kept = stacked[keep]
        mask_mean = kept.sum(axis=0) / kept.shape[0]
        owners_arr = np.asarray(owners, dtype=np.int64)
        for i in members:
            mine = keep & (owners_arr == i)
            m_count = int(np.count_nonzero(mine))
            if m_count >= 1:
                features[i] = stacked[mine].sum(axis=0) / m_count
            else:
                features[i] = mask_mean
            valid[i] = True
            labels[i] = label

    # unassigned points: unfiltered self-average, no invalidation of coverage
    for i in np.nonzero(masks.mask_of_point == -1)[0]:
        if raw.count(i) == 0:
            continue
        own = raw.features_of(i).astype(np.float64)
        mean = own.sum(axis=0) / own.shape[0]
        if not mean.any():
            continue  # exact cancellation: nothing classifiable
        features[i] = mean
        valid[i] = True
        labels[i] = classify_embedding(mean, text)

    return PointFeatureField(features=features, valid=valid, labels=labels)


def fuse_unfiltered(
    raw: RawPointFeatures, text: TextPrototypes
) -> PointFeatureField:
    """Plain per-point averaging of raw features (the 3D filter switched off)."""
    n = raw.num_points
    d = text.dim
    features = np.zeros((n, d))
    valid = np.zeros(n, dtype=bool)
    labels = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if raw.count(i) == 0:
            continue
        own = raw.features_of(i).astype(np.float64)
        mean = own.sum(axis=0) / own.shape[0]
        if not mean.any():
            continue
        features[i] = mean
        valid[i] = True
        labels[i] = classify_embedding(mean, text)
    return PointFeatureField(features=features, valid=valid, labels=labels)

"""Key-space candidate search and full-score re-ranking."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .descriptor import Descriptor, load_descriptor, save_descriptor
from .errors import (DegenerateDescriptorError, InvalidParameterError, NoCandidateError,
                     ProbeError, ShapeMismatchError)
from .matching import MatchScore, score_pair

DEFAULT_TOPK = 25


@dataclass
class DescriptorIndex:
    """Exact Euclidean KD-tree over retrieval keys."""

    keys: np.ndarray
    frame_ids: np.ndarray
    descriptors: list = field(default_factory=list)
    tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        self.keys = np.ascontiguousarray(self.keys, dtype=np.float64)
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        self.keys.setflags(write=False)
        self.tree = cKDTree(self.keys)
        self._row = {int(f): i for i, f in enumerate(self.frame_ids)}

    def __len__(self):
        return len(self.frame_ids)

    def descriptor(self, frame_id) -> Descriptor:
        return self.descriptors[self._row[int(frame_id)]]


def build_index(descriptors, frame_ids=None) -> DescriptorIndex:
    descriptors = list(descriptors)
    if not descriptors:
        raise InvalidParameterError("cannot index an empty descriptor set")
    lengths = {len(d.key) for d in descriptors}
    if len(lengths) != 1:
        raise ShapeMismatchError(f"inconsistent key lengths: {sorted(lengths)}")
    if frame_ids is None:
        frame_ids = np.arange(len(descriptors))
    if len(frame_ids) != len(descriptors):
        raise InvalidParameterError("frame_ids and descriptors differ in length")
    if len(set(int(f) for f in frame_ids)) != len(frame_ids):
        raise InvalidParameterError("frame_ids must be unique")
    keys = np.stack([d.key for d in descriptors])
    return DescriptorIndex(keys, frame_ids, descriptors)


def index_from_keys(keys, frame_ids=None) -> DescriptorIndex:
    """Index raw keys without descriptors (key-space search only)."""
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or len(keys) == 0:
        raise InvalidParameterError("keys must be a non-empty 2-D array")
    if frame_ids is None:
        frame_ids = np.arange(len(keys))
    return DescriptorIndex(keys, frame_ids)


def query_topk(index: DescriptorIndex, key, K: int):
    """The ``min(K, N)`` nearest keys as ``(frame_ids, distances)``, ascending.

    Exact: everything within the K-th tree distance is re-measured and sorted
    by (distance, frame_id), so ties at the cut are resolved by frame id.
    """
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    key = np.asarray(key, dtype=np.float64)
    k = min(int(K), len(index))
    d, _ = index.tree.query(key, k=k)
    radius = float(np.atleast_1d(d)[-1])
    cand = np.asarray(index.tree.query_ball_point(key, radius * (1 + 1e-9) + 1e-12),
                      dtype=np.int64)
    dist = np.linalg.norm(index.keys[cand] - key, axis=1)
    order = np.lexsort((index.frame_ids[cand], dist))[:k]
    return index.frame_ids[cand[order]], dist[order]


def rerank(index: DescriptorIndex, query: Descriptor, candidates, mode: str = "fused"):
    """Score ``query`` against each candidate frame and keep the best.

    Ties in distance go to the smaller frame id; degenerate pairings score
    distance 1.  Returns ``(frame_id, MatchScore)``.
    """
    best = None
    for fid in candidates:
        fid = int(fid)
        try:
            score = score_pair(index.descriptor(fid), query, mode)
        except DegenerateDescriptorError:
            score = MatchScore(0, 0.0, 0.0, 0.0, 1.0, mode, 0, True)
        if best is None or (score.distance, fid) < (best[1].distance, best[0]):
            best = (fid, score)
    if best is None:
        raise NoCandidateError("no retrieval candidate")
    return best


def retrieve_best(index: DescriptorIndex, query: Descriptor, K: int = DEFAULT_TOPK,
                  exclusion=(), mode: str = "fused"):
    """Best-scoring frame among the top-K key neighbours not in ``exclusion``.

    Raises NoCandidateError if every candidate is excluded.
    """
    ids, _ = query_topk(index, query.key, K)
    excluded = {int(e) for e in exclusion}
    return rerank(index, query, [f for f in ids if int(f) not in excluded], mode)


def save_index(directory, index: DescriptorIndex, extra: dict | None = None):
    """Write one descriptor file per frame plus ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    files = []
    for fid, desc in zip(index.frame_ids, index.descriptors):
        name = f"{int(fid):06d}.desc"
        save_descriptor(os.path.join(directory, name), desc)
        files.append(name)
    manifest = {
        "format": "probe-index",
        "version": 1,
        "frame_ids": [int(f) for f in index.frame_ids],
        "files": files,
        "config": index.descriptors[0].config.to_dict() if index.descriptors else None,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_index(directory) -> DescriptorIndex:
    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("format") != "probe-index":
        raise ProbeError(f"{directory}: not an index manifest")
    descs = [load_descriptor(os.path.join(directory, n)) for n in manifest["files"]]
    return build_index(descs, manifest["frame_ids"])

"""Scan and pose ingestion, voxel downsampling."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyCloudError, InvalidParameterError, MalformedFileError,
                     PoseParseError)

_POINT_DTYPE = np.dtype("<f4")
_POINT_BYTES = 16


@dataclass
class PointCloud:
    """Points in the sensor frame, shape (N, 3), meters.

    Non-finite rows are removed on construction; ``n_dropped`` counts them.
    """

    points: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidParameterError(f"points must have shape (N, 3), got {pts.shape}")
        finite = np.isfinite(pts).all(axis=1)
        if not finite.all():
            self.n_dropped += int((~finite).sum())
            pts = pts[finite]
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self):
        return self.points


@dataclass
class Trajectory:
    frame_ids: np.ndarray
    positions: np.ndarray
    yaws: np.ndarray | None = None

    def __post_init__(self):
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if len(self.frame_ids) != len(self.positions):
            raise InvalidParameterError("frame_ids and positions differ in length")
        if np.any(np.diff(self.frame_ids) <= 0):
            raise InvalidParameterError("frame_ids must be strictly increasing")
        if not np.isfinite(self.positions).all():
            raise InvalidParameterError("positions must be finite")
        if self.yaws is not None:
            self.yaws = np.asarray(self.yaws, dtype=np.float64)

    def __len__(self):
        return len(self.frame_ids)

    def arc_length(self) -> np.ndarray:
        """Cumulative along-trajectory distance at each frame (horizontal)."""
        steps = np.linalg.norm(np.diff(self.positions[:, :2], axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def subset(self, idx) -> "Trajectory":
        idx = np.asarray(idx)
        return Trajectory(self.frame_ids[idx], self.positions[idx],
                          None if self.yaws is None else self.yaws[idx])


def load_scan_bin(path) -> PointCloud:
    """Read a KITTI-style ``.bin`` scan (float32 x, y, z, intensity per point)."""
    size = os.path.getsize(path)
    if size % _POINT_BYTES:
        raise MalformedFileError(
            f"{path}: {size} bytes is not a multiple of {_POINT_BYTES}")
    raw = np.fromfile(path, dtype=_POINT_DTYPE).reshape(-1, 4)
    return PointCloud(raw[:, :3])


def save_scan_bin(path, cloud: PointCloud, intensity=None):
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    out = np.zeros((len(pts), 4), dtype=_POINT_DTYPE)
    out[:, :3] = pts
    if intensity is not None:
        out[:, 3] = intensity
    out.tofile(path)


def load_poses(path) -> Trajectory:
    """Read a pose file with one row-major 3x4 transform per line.

    Frame ids are line indices (blank lines are skipped but still counted).
    """
    ids, positions, yaws = [], [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 12:
                raise PoseParseError(
                    f"{path}:{lineno}: expected 12 fields, got {len(fields)}", lineno)
            try:
                vals = np.array([float(v) for v in fields])
            except ValueError as exc:
                raise PoseParseError(f"{path}:{lineno}: {exc}", lineno) from None
            if not np.isfinite(vals).all():
                raise PoseParseError(f"{path}:{lineno}: non-finite value", lineno)
            T = vals.reshape(3, 4)
            ids.append(len(ids))
            positions.append(T[:, 3])
            yaws.append(math.atan2(T[1, 0], T[0, 0]))
    return Trajectory(np.array(ids, dtype=np.int64), np.array(positions).reshape(-1, 3),
                      np.array(yaws))


def save_poses(path, positions, yaws=None):
    positions = np.asarray(positions, dtype=np.float64)
    yaws = np.zeros(len(positions)) if yaws is None else np.asarray(yaws)
    with open(path, "w") as f:
        for p, yaw in zip(positions, yaws):
            c, s = math.cos(yaw), math.sin(yaw)
            T = np.array([[c, -s, 0, p[0]], [s, c, 0, p[1]], [0, 0, 1, p[2]]])
            f.write(" ".join(repr(float(v)) for v in T.ravel()) + "\n")


def voxel_indices(points: np.ndarray, v: float) -> np.ndarray:
    return np.floor(points / v).astype(np.int64)


def voxel_downsample(cloud: PointCloud, v: float) -> PointCloud:
    """Replace the points of each occupied voxel of edge ``v`` by their centroid."""
    if not v > 0:
        raise InvalidParameterError(f"voxel size must be positive, got {v}")
    if len(cloud) == 0:
        raise EmptyCloudError("cannot downsample an empty cloud")
    pts = cloud.points
    idx = voxel_indices(pts, v)
    idx -= idx.min(axis=0)
    span = idx.max(axis=0) + 1
    if float(span[0]) * float(span[1]) * float(span[2]) < 2.0 ** 62:
        # mixed-radix code: 1-D unique is much faster and keeps lexicographic order
        code = (idx[:, 0] * span[1] + idx[:, 1]) * span[2] + idx[:, 2]
        _, inverse, counts = np.unique(code, return_inverse=True, return_counts=True)
    else:
        _, inverse, counts = np.unique(idx, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    centroids = np.stack([np.bincount(inverse, weights=pts[:, k], minlength=len(counts))
                          for k in range(3)], axis=1) / counts[:, None]
    return PointCloud(centroids, n_dropped=cloud.n_dropped)

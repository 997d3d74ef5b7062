import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from probe_lpr.errors import (EmptyCloudError, InvalidParameterError, MalformedFileError,
                              PoseParseError)
from probe_lpr.pointcloud import (PointCloud, Trajectory, load_poses, load_scan_bin,
                                  save_poses, save_scan_bin, voxel_downsample, voxel_indices)


class TestScanLoader:
    def test_single_point(self, tmp_path):
        p = tmp_path / "a.bin"
        p.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
        cloud = load_scan_bin(p)
        np.testing.assert_array_equal(cloud.points, [[1.0, 2.0, 3.0]])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "a.bin"
        p.write_bytes(b"")
        assert len(load_scan_bin(p)) == 0

    def test_bad_length(self, tmp_path):
        p = tmp_path / "a.bin"
        p.write_bytes(b"\0" * 17)
        with pytest.raises(MalformedFileError):
            load_scan_bin(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_scan_bin(tmp_path / "nope.bin")

    def test_non_finite_dropped(self, tmp_path):
        p = tmp_path / "a.bin"
        p.write_bytes(struct.pack("<12f", 1, 2, 3, 0, np.nan, 0, 0, 0, 4, 5, np.inf, 0))
        cloud = load_scan_bin(p)
        assert len(cloud) == 1
        assert cloud.n_dropped == 2

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        pts = rng.normal(0, 30, (500, 3)).astype(np.float32)
        p = tmp_path / "a.bin"
        save_scan_bin(p, PointCloud(pts.astype(np.float64)))
        back = load_scan_bin(p).points.astype(np.float32)
        assert back.tobytes() == pts.tobytes()


class TestPoses:
    def _write(self, path, rows):
        path.write_text("\n".join(" ".join(str(v) for v in r) for r in rows) + "\n")

    def test_identity_translation(self, tmp_path):
        p = tmp_path / "poses.txt"
        self._write(p, [[1, 0, 0, 5, 0, 1, 0, 0, 0, 0, 1, 0]])
        traj = load_poses(p)
        np.testing.assert_array_equal(traj.positions, [[5, 0, 0]])
        assert traj.yaws[0] == 0.0

    def test_quarter_turn(self, tmp_path):
        p = tmp_path / "poses.txt"
        self._write(p, [[0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0]])
        assert abs(load_poses(p).yaws[0] - math.pi / 2) <= 1e-9

    def test_wrong_arity_names_line(self, tmp_path):
        p = tmp_path / "poses.txt"
        self._write(p, [[1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0], [1] * 11])
        with pytest.raises(PoseParseError) as exc:
            load_poses(p)
        assert exc.value.line_number == 2
        assert ":2:" in str(exc.value)

    def test_garbage_value(self, tmp_path):
        p = tmp_path / "poses.txt"
        p.write_text("1 0 0 x 0 1 0 0 0 0 1 0\n")
        with pytest.raises(PoseParseError):
            load_poses(p)

    def test_save_load_round_trip(self, tmp_path):
        pos = np.array([[0.0, 0, 0], [3, 4, 0], [3, 10, 1]])
        yaws = np.array([0.0, 1.0, -2.0])
        save_poses(tmp_path / "p.txt", pos, yaws)
        traj = load_poses(tmp_path / "p.txt")
        np.testing.assert_allclose(traj.positions, pos)
        np.testing.assert_allclose(traj.yaws, yaws, atol=1e-12)
        np.testing.assert_allclose(traj.arc_length(), [0, 5, 11])

    def test_frame_ids_increasing(self):
        with pytest.raises(InvalidParameterError):
            Trajectory([0, 2, 1], np.zeros((3, 3)))


class TestVoxelDownsample:
    def test_same_voxel(self):
        out = voxel_downsample(PointCloud([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]]), 0.5)
        np.testing.assert_allclose(out.points, [[0.15, 0.15, 0.15]])

    def test_distinct_voxels(self):
        out = voxel_downsample(PointCloud([[0.1, 0, 0], [0.6, 0, 0]]), 0.5)
        assert len(out) == 2

    def test_boundary_goes_to_higher_voxel(self):
        assert voxel_indices(np.array([[0.5, -0.5, 0.0]]), 0.5).tolist() == [[1, -1, 0]]

    def test_output_voxels_distinct(self):
        rng = np.random.default_rng(3)
        cloud = PointCloud(rng.uniform(-5, 5, (5000, 3)))
        out = voxel_downsample(cloud, 0.5)
        idx = [tuple(int(math.floor(c / 0.5)) for c in p) for p in out.points]
        assert len(set(idx)) == len(idx)
        assert len(out) <= len(cloud)

    def test_errors(self):
        with pytest.raises(InvalidParameterError):
            voxel_downsample(PointCloud([[0, 0, 0]]), 0.0)
        with pytest.raises(EmptyCloudError):
            voxel_downsample(PointCloud(np.zeros((0, 3))), 0.5)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 200), st.just(3)),
                  elements=st.floats(-50, 50, allow_nan=False, width=32)),
           st.sampled_from([0.25, 0.5, 1.0]))
    def test_centroid_in_source_voxel_and_idempotent(self, pts, v):
        cloud = PointCloud(pts)
        once = voxel_downsample(cloud, v)
        src = {tuple(r) for r in voxel_indices(cloud.points, v).tolist()}
        got = {tuple(r) for r in voxel_indices(once.points, v).tolist()}
        assert got == src
        twice = voxel_downsample(once, v)
        assert {tuple(r) for r in voxel_indices(twice.points, v).tolist()} == got


def grouped_centroids(points, v):
    """Dictionary grouping by voxel, sorted lexicographically by voxel index."""
    groups = {}
    for p in points:
        key = tuple(math.floor(c / v) for c in p)
        groups.setdefault(key, []).append(p)
    return np.array([np.mean(groups[k], axis=0) for k in sorted(groups)])


class TestVoxelOracle:
    def test_matches_grouping(self):
        pts = np.random.default_rng(3).uniform(-20, 20, (3000, 3))
        pts[:500] = np.round(pts[:500])          # many points share voxels
        got = voxel_downsample(PointCloud(pts), 0.5).points
        np.testing.assert_allclose(got, grouped_centroids(pts, 0.5), rtol=1e-12, atol=1e-12)

    def test_wide_extent_fallback(self):
        pts = np.array([[0.0, 0.0, 0.0], [1e12, 1e12, 1e12], [1e-7, 0.0, 0.0]])
        got = voxel_downsample(PointCloud(pts), 1e-6).points
        np.testing.assert_allclose(got, grouped_centroids(pts, 1e-6))

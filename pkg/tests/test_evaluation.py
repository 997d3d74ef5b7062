import numpy as np
import pytest

from probe_lpr.config import PolarConfig
from probe_lpr.descriptor import make_descriptor
from probe_lpr.errors import InvalidParameterError
from probe_lpr.evaluation import (QueryRecord, ground_truth, multisession_eval, online_eval,
                                  pr_curve, subsample_by_distance)
from probe_lpr.pointcloud import Trajectory
from probe_lpr.synth import SceneSpec, loop_sequence, render_scan, square_loop_poses

from conftest import loop_descriptors, random_descriptor


def traj_xy(xy):
    xy = np.asarray(xy, dtype=float)
    return Trajectory(np.arange(len(xy)), np.column_stack([xy, np.zeros(len(xy))]))


def rec(qid, d, gt, correct, matched=True):
    return QueryRecord(qid, qid + 100 if matched else None, d, gt, correct)


# Hand enumeration of the sweep for the 4-record toy set (3 ground-truth positives):
#   tau=0.10: TP=1 FP=0 FN=2 -> P=1,   R=1/3
#   tau=0.15: TP=1 FP=1 FN=2 -> P=1/2, R=1/3
#   tau=0.20: TP=2 FP=1 FN=1 -> P=2/3, R=2/3
# AUC = 1/3 * 1 + 0 + 1/3 * (1/2 + 2/3) / 2 = 19/36
TOY = [rec(0, 0.10, True, True), rec(1, 0.15, False, False), rec(2, 0.20, True, True),
       rec(3, float("inf"), True, False, matched=False)]


class TestGroundTruth:
    def test_boundary(self):
        q = traj_xy([[0, 0]])
        db = traj_xy([[0, 0], [10.0, 0], [0, 10.01], [6, 8]])
        np.testing.assert_array_equal(ground_truth(q, db, 10.0), [[True, True, False, True]])

    def test_height_ignored(self):
        q = Trajectory([0], [[0, 0, 0]])
        db = Trajectory([0], [[0, 0, 50]])
        assert ground_truth(q, db)[0, 0]

    def test_errors(self):
        with pytest.raises(InvalidParameterError):
            ground_truth(traj_xy([[0, 0]]), traj_xy([[0, 0]]), 0.0)


class TestPRCurve:
    def test_toy(self):
        pr = pr_curve(TOY)
        np.testing.assert_allclose(pr.thresholds, [0.10, 0.15, 0.20])
        np.testing.assert_allclose(pr.precision, [1, 0.5, 2 / 3])
        np.testing.assert_allclose(pr.recall, [1 / 3, 1 / 3, 2 / 3])
        assert pr.auc == pytest.approx(19 / 36, abs=1e-12)
        assert pr.recall_at_1 == pytest.approx(2 / 3)
        assert pr.f1_max == pytest.approx(2 / 3)
        assert not pr.degenerate

    def test_all_correct(self):
        pr = pr_curve([rec(i, 0.0, True, True) for i in range(5)])
        assert (pr.auc, pr.recall_at_1, pr.f1_max) == (1.0, 1.0, 1.0)

    def test_all_wrong(self):
        pr = pr_curve([rec(i, 0.1 * i, True, False) for i in range(5)])
        assert pr.auc == 0.0 and pr.recall_at_1 == 0.0

    def test_no_positives(self):
        pr = pr_curve([rec(i, 0.3, False, False) for i in range(3)])
        assert pr.degenerate and pr.auc == 0.0 and pr.pr_points == []

    def test_duplicate_thresholds(self):
        doubled = TOY + [rec(10 + r.query_id, r.distance, r.gt_positive, r.correct,
                             r.matched_id is not None) for r in TOY]
        assert pr_curve(doubled).auc == pytest.approx(pr_curve(TOY).auc, abs=1e-12)

    def test_random_properties(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = 40
            gt = rng.random(n) < 0.6
            correct = gt & (rng.random(n) < 0.7)
            d = np.round(rng.random(n), 2)
            pr = pr_curve([rec(i, d[i], gt[i], correct[i]) for i in range(n)])
            assert np.all(np.diff(pr.recall) >= 0)
            assert 0 <= pr.auc <= 1
            p, r = np.array(pr.precision), np.array(pr.recall)
            f1 = np.where(p + r > 0, 2 * p * r / np.maximum(p + r, 1e-300), 0)
            assert pr.f1_max >= f1.max() - 1e-15


@pytest.fixture(scope="module")
def near_loop():
    # revisits 1 m off the first pass (half-spacing stagger, no lateral offset)
    return loop_descriptors(seed=0, side=60.0, spacing=2.0, lateral_offset=0.0)


class TestOnline:
    def test_no_revisits(self):
        rng = np.random.default_rng(2)
        descs = [random_descriptor(rng) for _ in range(30)]
        rep = online_eval(descs, traj_xy([[4.0 * i, 0] for i in range(30)]))
        assert rep.records and not any(r.gt_positive for r in rep.records)
        assert rep.pr.degenerate and rep.auc == 0.0
        assert rep.summary()["degenerate"]

    def test_short_sequence(self):
        rng = np.random.default_rng(3)
        rep = online_eval([random_descriptor(rng) for _ in range(3)],
                          traj_xy([[0, 0], [1, 0], [2, 0]]))
        assert rep.records == [] and rep.pr.degenerate

    def test_count_mismatch(self):
        with pytest.raises(InvalidParameterError):
            online_eval([random_descriptor(np.random.default_rng(0))], traj_xy([[0, 0], [1, 0]]))

    def test_loop_recall(self, near_loop):
        descs, traj = near_loop
        rep = online_eval(descs, traj)
        assert sum(r.gt_positive for r in rep.records) >= 100
        assert rep.recall_at_1 >= 0.95

    def test_exclusion_zone(self, near_loop):
        descs, traj = near_loop
        arc = dict(zip(traj.frame_ids.tolist(), traj.arc_length()))
        rep = online_eval(descs, traj, exclusion=25.0)
        for r in rep.records:
            assert arc[r.query_id] - arc[r.matched_id] > 25.0

    def test_deterministic(self, near_loop, tmp_path):
        descs, traj = near_loop
        a = online_eval(descs[:150], traj.subset(np.arange(150)))
        b = online_eval(descs[:150], traj.subset(np.arange(150)), jobs=3)
        assert a.to_json() == b.to_json()
        a.write(tmp_path / "a")
        b.write(tmp_path / "b")
        for name in ("report.json", "pr_curve.csv", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "summary.csv").read_text().startswith("# settings: ")


def _sessions(sigma_t, shift=2.0):
    seq = loop_sequence(seed=4, side=80.0, spacing=4.0, n_structures=200,
                        spec=SceneSpec(points_per_structure=150))
    xy, yaw = square_loop_poses(80.0, 4.0)
    spec = SceneSpec(points_per_structure=150)
    cfg = PolarConfig(sigma_t=sigma_t)
    streams = np.random.SeedSequence(99).spawn(len(xy))
    db = [make_descriptor(render_scan(seq.world, (p[0], p[1], a), spec,
                                      np.random.default_rng(s)), cfg)
          for p, a, s in zip(xy, yaw, streams)]
    q = [make_descriptor(render_scan(seq.world, (p[0] + shift, p[1], a), spec,
                                     np.random.default_rng(s)), cfg)
         for p, a, s in zip(xy, yaw, streams)]
    return q, traj_xy(xy + [shift, 0]), db, traj_xy(xy)


class TestMultisession:
    def test_copy(self):
        descs, traj = loop_descriptors(seed=0, side=60.0, spacing=2.0, lateral_offset=0.0)
        n = len(traj) // 2
        first = traj.subset(np.arange(n))
        rep = multisession_eval(descs[:n], first, descs[:n], first, db_spacing=None)
        assert rep.recall_at_1 == 1.0
        assert all(r.distance <= 1e-6 for r in rep.records)

    def test_disjoint(self):
        rng = np.random.default_rng(8)
        q = [random_descriptor(rng) for _ in range(5)]
        db = [random_descriptor(rng) for _ in range(5)]
        rep = multisession_eval(q, traj_xy([[i, 0] for i in range(5)]), db,
                                traj_xy([[i, 60] for i in range(5)]))
        assert not any(r.gt_positive for r in rep.records) and rep.pr.degenerate

    def test_translated_session(self):
        r1 = {}
        for s in (0.0, 2.0):
            q, qt, db, dbt = _sessions(s)
            r1[s] = multisession_eval(q, qt, db, dbt, db_spacing=None).recall_at_1
        assert r1[2.0] >= r1[0.0]

    def test_subsample(self):
        t = traj_xy([[i, 0] for i in range(21)])
        np.testing.assert_array_equal(subsample_by_distance(t, 5.0), [0, 5, 10, 15, 20])

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            multisession_eval([], traj_xy([[0, 0]]), [], traj_xy([[0, 0]]))

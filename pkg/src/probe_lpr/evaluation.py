"""Single-session (online) and multi-session place-recognition evaluation.

Protocol: every query keeps only its best re-ranked match.  A threshold on
the match distance sweeps out the precision-recall curve; a declared match
is a true positive when the matched frame lies within ``d_gt`` of the query.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidParameterError
from .pointcloud import Trajectory
from .retrieval import DEFAULT_TOPK, index_from_keys, query_topk, rerank

DEFAULT_DGT = 10.0
DEFAULT_EXCLUSION = 25.0
DEFAULT_DB_SPACING = 5.0


@dataclass
class QueryRecord:
    query_id: int
    matched_id: int | None
    distance: float
    gt_positive: bool
    correct: bool
    delta_star: int | None = None
    cosine: float | None = None
    kl_jaccard: float | None = None


@dataclass
class PRResult:
    thresholds: list
    precision: list
    recall: list
    auc: float
    f1_max: float
    recall_at_1: float
    degenerate: bool

    @property
    def pr_points(self):
        return list(zip(self.precision, self.recall))


@dataclass
class EvalReport:
    records: list
    pr: PRResult
    mode: str
    settings: dict = field(default_factory=dict)

    @property
    def auc(self):
        return self.pr.auc

    @property
    def recall_at_1(self):
        return self.pr.recall_at_1

    @property
    def f1_max(self):
        return self.pr.f1_max

    @property
    def pr_points(self):
        return self.pr.pr_points

    def summary(self) -> dict:
        n_pos = sum(r.gt_positive for r in self.records)
        return {"mode": self.mode, "n_queries": len(self.records), "n_gt_positive": n_pos,
                "auc": self.auc, "recall_at_1": self.recall_at_1, "f1_max": self.f1_max,
                "degenerate": self.pr.degenerate}

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "settings": self.settings,
                "pr_curve": {"threshold": self.pr.thresholds, "precision": self.pr.precision,
                             "recall": self.pr.recall},
                "records": [asdict(r) for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, directory, stem="report"):
        """Write ``<stem>.json``, ``pr_curve.csv`` and ``summary.csv``."""
        os.makedirs(directory, exist_ok=True)
        snapshot = json.dumps(self.settings, sort_keys=True)
        with open(os.path.join(directory, f"{stem}.json"), "w") as f:
            f.write(self.to_json())
        with open(os.path.join(directory, "pr_curve.csv"), "w", newline="") as f:
            f.write(f"# settings: {snapshot}\n")
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall"])
            for row in zip(self.pr.thresholds, self.pr.precision, self.pr.recall):
                w.writerow([repr(float(v)) for v in row])
        with open(os.path.join(directory, "summary.csv"), "w", newline="") as f:
            f.write(f"# settings: {snapshot}\n")
            s = self.summary()
            w = csv.writer(f, lineterminator="\n")
            w.writerow(list(s))
            w.writerow([repr(v) if isinstance(v, float) else v for v in s.values()])


def ground_truth(traj_q: Trajectory, traj_db: Trajectory, d_gt: float = DEFAULT_DGT):
    """Boolean matrix: query i and database j lie within ``d_gt`` (horizontal, inclusive)."""
    if d_gt <= 0:
        raise InvalidParameterError("d_gt must be positive")
    if len(traj_q) == 0 or len(traj_db) == 0:
        raise InvalidParameterError("trajectories must be non-empty")
    return cdist(traj_q.positions[:, :2], traj_db.positions[:, :2]) <= d_gt


def pr_curve(records) -> PRResult:
    """Precision-recall sweep over every observed match distance.

    AUC integrates precision over recall with the trapezoid rule, starting
    from recall 0 at the first point's precision.  With no ground-truth
    positives the result is all zeros and flagged ``degenerate``.
    """
    records = list(records)
    gt = np.array([r.gt_positive for r in records], dtype=bool)
    n_pos = int(gt.sum())
    if n_pos == 0:
        return PRResult([], [], [], 0.0, 0.0, 0.0, True)
    matched = np.array([r.matched_id is not None for r in records], dtype=bool)
    correct = np.array([r.correct for r in records], dtype=bool)
    dist = np.array([r.distance for r in records], dtype=np.float64)
    taus = np.unique(dist[matched])

    precision, recall, f1 = [], [], []
    for tau in taus:
        declared = matched & (dist <= tau)
        tp = int((declared & correct).sum())
        fp = int((declared & ~correct).sum())
        fn = int((~declared & gt).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)

    if taus.size:
        rec = np.concatenate([[0.0], recall])
        prec = np.concatenate([[precision[0]], precision])
        auc = float(np.sum(np.diff(rec) * (prec[1:] + prec[:-1]) / 2))
    else:
        auc = 0.0
    r1 = float((correct & gt).sum() / n_pos)
    return PRResult([float(t) for t in taus], precision, recall, auc,
                    float(max(f1, default=0.0)), r1, False)


def _best_among_prefix(index, desc, K, n_eligible, mode):
    """Re-rank the K nearest keys among rows ``< n_eligible``."""
    k = K
    while True:
        ids, _ = query_topk(index, desc.key, k)
        elig = ids[ids < n_eligible][:K]
        if len(elig) >= min(K, n_eligible) or k >= len(index):
            break
        k = min(4 * k, len(index))
    return rerank(index, desc, elig, mode)


def _record(qi, fid, score, gt_row, query_ids, db_ids, gt_pos):
    correct = bool(gt_row[fid])
    return QueryRecord(int(query_ids[qi]), int(db_ids[fid]), float(score.distance), bool(gt_pos),
                       correct, int(score.delta_star), float(score.cosine),
                       float(score.kl_jaccard))


def online_eval(descriptors, trajectory: Trajectory, d_gt: float = DEFAULT_DGT,
                exclusion: float = DEFAULT_EXCLUSION, K: int = DEFAULT_TOPK,
                mode: str = "fused", jobs: int = 1) -> EvalReport:
    """Each query searches only frames more than ``exclusion`` meters earlier
    along the trajectory."""
    descriptors = list(descriptors)
    if len(descriptors) != len(trajectory):
        raise InvalidParameterError("descriptor and pose counts differ")
    arc = trajectory.arc_length()
    gt = ground_truth(trajectory, trajectory, d_gt)
    index = index_from_keys(np.stack([d.key for d in descriptors]))
    index.descriptors = descriptors
    n_elig = np.minimum(np.searchsorted(arc, arc - exclusion, side="left"),
                        np.arange(len(arc)))

    def run(i):
        n = int(n_elig[i])
        if n == 0:
            return None
        fid, score = _best_among_prefix(index, descriptors[i], K, n, mode)
        return _record(i, fid, score, gt[i], trajectory.frame_ids, trajectory.frame_ids,
                       gt[i, :n].any())

    records = _map(run, range(len(descriptors)), jobs)
    settings = {"protocol": "online", "d_gt": d_gt, "exclusion": exclusion, "topk": K,
                "score_mode": mode, "config": descriptors[0].config.to_dict()}
    return EvalReport(records, pr_curve(records), "online", settings)


def subsample_by_distance(trajectory: Trajectory, spacing: float = DEFAULT_DB_SPACING):
    """Indices of frames kept when walking the trajectory and keeping a frame
    each time ``spacing`` meters have been covered since the last kept one."""
    arc = trajectory.arc_length()
    keep, last = [], -np.inf
    for i, a in enumerate(arc):
        if a - last >= spacing:
            keep.append(i)
            last = a
    return np.array(keep, dtype=np.int64)


def multisession_eval(query_descriptors, query_traj: Trajectory, db_descriptors,
                      db_traj: Trajectory, d_gt: float = DEFAULT_DGT, K: int = DEFAULT_TOPK,
                      mode: str = "fused", db_spacing: float | None = DEFAULT_DB_SPACING,
                      jobs: int = 1) -> EvalReport:
    """Every query searches the whole (optionally subsampled) database session."""
    query_descriptors, db_descriptors = list(query_descriptors), list(db_descriptors)
    if not query_descriptors or not db_descriptors:
        raise InvalidParameterError("both sessions must be non-empty")
    if len(query_descriptors) != len(query_traj) or len(db_descriptors) != len(db_traj):
        raise InvalidParameterError("descriptor and pose counts differ")
    if db_spacing:
        keep = subsample_by_distance(db_traj, db_spacing)
        db_descriptors = [db_descriptors[i] for i in keep]
        db_traj = db_traj.subset(keep)
    gt = ground_truth(query_traj, db_traj, d_gt)
    index = index_from_keys(np.stack([d.key for d in db_descriptors]))
    index.descriptors = db_descriptors

    def run(i):
        fid, score = _best_among_prefix(index, query_descriptors[i], K, len(index), mode)
        return _record(i, fid, score, gt[i], query_traj.frame_ids, db_traj.frame_ids,
                       gt[i].any())

    records = _map(run, range(len(query_descriptors)), jobs)
    settings = {"protocol": "multisession", "d_gt": d_gt, "topk": K, "score_mode": mode,
                "db_spacing": db_spacing, "config": query_descriptors[0].config.to_dict()}
    return EvalReport(records, pr_curve(records), "multisession", settings)


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(fn, items))
    else:
        out = [fn(i) for i in items]
    return [r for r in out if r is not None]

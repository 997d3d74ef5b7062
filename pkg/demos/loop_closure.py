"""
Online loop-closure evaluation
==============================

A square block is driven twice.  The second pass is 3 m to the side of the
first and half the structures have changed in between.  Each frame queries
all frames more than 25 m earlier along the path; a match within 10 m of the
query counts as correct.
"""

from probe_lpr import PolarConfig, make_descriptor
from probe_lpr.evaluation import online_eval
from probe_lpr.synth import SceneSpec, loop_sequence

seq = loop_sequence(seed=0, lateral_offset=3.0, spec=SceneSpec(points_per_structure=100),
                    change_fraction=0.5)
print(f"{len(seq.clouds)} frames")

for sigma_t in (0.0, 2.0):
    cfg = PolarConfig(sigma_t=sigma_t)
    descs = [make_descriptor(c, cfg) for c in seq.clouds]
    for mode in ("cosine", "kl", "fused"):
        if sigma_t == 0.0 and mode != "fused":
            continue
        rep = online_eval(descs, seq.trajectory, mode=mode)
        print(f"sigma_t={sigma_t:g} {mode:6s}: AUC {rep.auc:.3f}  R@1 {rep.recall_at_1:.3f}  "
              f"F1max {rep.f1_max:.3f}")

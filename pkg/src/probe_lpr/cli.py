"""Command-line entry point: ``probe-lpr <subcommand>``.

Every option can also be set through an environment variable named
``PROBE_<DEST>`` (e.g. ``PROBE_SIGMA_T=0``); explicit flags win.

Exit codes: 0 success, 2 usage error, 3 I/O or malformed input,
4 degenerate data, 5 partial failure (some inputs failed).
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import PolarConfig
from .descriptor import load_descriptor, make_descriptor, save_descriptor
from .errors import (DegenerateDescriptorError, EmptyCloudError, EmptyDescriptorError,
                     MalformedFileError, PoseParseError, ProbeError, ShapeMismatchError)
from .evaluation import (DEFAULT_DB_SPACING, DEFAULT_DGT, DEFAULT_EXCLUSION, multisession_eval,
                         online_eval)
from .matching import SCORE_MODES, score_pair
from .pointcloud import Trajectory, load_poses, load_scan_bin, save_poses, save_scan_bin
from .retrieval import DEFAULT_TOPK, build_index, save_index
from .synth import SceneSpec, generate_scene, loop_sequence, robustness_sweep, rows_to_csv

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE, EXIT_PARTIAL = 0, 2, 3, 4, 5
ENV_PREFIX = "PROBE_"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _add_config_flags(p):
    g = p.add_argument_group("descriptor configuration")
    d = PolarConfig()
    g.add_argument("--rings", type=int, default=d.R)
    g.add_argument("--sectors", type=int, default=d.S)
    g.add_argument("--rmax", type=float, default=d.R_max, help="max range [m]")
    g.add_argument("--sigma-t", type=float, default=d.sigma_t,
                   help="translation uncertainty [m]; 0 gives binary occupancy")
    g.add_argument("--eps-b", type=float, default=d.eps_B)
    g.add_argument("--eps-u", type=float, default=d.eps_U)
    g.add_argument("--voxel", type=float, default=d.voxel, help="voxel size [m]; 0 disables")
    g.add_argument("--height-offset", type=float, default=d.height_offset)
    g.add_argument("--kernel-truncation", type=float, default=d.kernel_truncation)
    g.add_argument("--sigma-theta-cap", type=float, default=None,
                   help="angular width cap in sector cells (default sectors/4)")
    g.add_argument("--no-density-adaptive", action="store_true",
                   help="use the pure Jacobian angular width sigma_t / r")


def _config(args) -> PolarConfig:
    return PolarConfig(R=args.rings, S=args.sectors, R_max=args.rmax, sigma_t=args.sigma_t,
                       eps_B=args.eps_b, eps_U=args.eps_u, voxel=args.voxel or None,
                       height_offset=args.height_offset,
                       kernel_truncation=args.kernel_truncation,
                       sigma_theta_cap=args.sigma_theta_cap,
                       density_adaptive=not args.no_density_adaptive)


def _scan_paths(inputs, suffixes=(".bin",)):
    """Expand directories to their files with one of ``suffixes``; keep files as given."""
    paths = []
    for item in inputs:
        if os.path.isdir(item):
            found = [p for sfx in suffixes for p in glob.glob(os.path.join(item, f"*{sfx}"))]
            paths.extend(sorted(found))
        else:
            paths.append(item)
    return paths


def _load_trajectory(path, frame):
    traj = load_poses(path)
    if frame == "kitti":
        # camera frame: x right, y down, z forward; the ground plane is x-z
        pos = traj.positions[:, [0, 2, 1]]
        traj = Trajectory(traj.frame_ids, pos, traj.yaws)
    return traj


def _describe_many(paths, cfg, jobs):
    def one(path):
        t0 = time.perf_counter()
        try:
            desc = make_descriptor(load_scan_bin(path), cfg)
        except (OSError, ProbeError) as exc:
            return path, None, exc, 0.0
        return path, desc, None, time.perf_counter() - t0

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, paths))
    return [one(p) for p in paths]


def _timing_summary(times):
    if not times:
        return {}
    t = np.asarray(times) * 1e3
    return {"n": len(t), "mean_ms": float(t.mean()), "p50_ms": float(np.percentile(t, 50)),
            "p95_ms": float(np.percentile(t, 95)), "max_ms": float(t.max())}


def cmd_describe(args):
    cfg = _config(args)
    paths = _scan_paths(args.scans)
    if not paths:
        raise CliError("no scans found", EXIT_IO)
    os.makedirs(args.out, exist_ok=True)
    results = _describe_many(paths, cfg, args.jobs)
    times, failures = [], []
    for path, desc, exc, dt in results:
        if desc is None:
            failures.append({"scan": path, "error": f"{type(exc).__name__}: {exc}"})
            print(f"error: {path}: {exc}", file=sys.stderr)
            continue
        stem = os.path.splitext(os.path.basename(path))[0]
        save_descriptor(os.path.join(args.out, stem + ".desc"), desc)
        times.append(dt)
    summary = {"n_scans": len(paths), "n_ok": len(times), "failures": failures,
               "timing": _timing_summary(times), "config": cfg.to_dict()}
    with open(os.path.join(args.out, "describe_summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    tm = summary["timing"]
    if tm:
        print(f"described {len(times)}/{len(paths)} scans; construction mean "
              f"{tm['mean_ms']:.2f} ms, p50 {tm['p50_ms']:.2f} ms, p95 {tm['p95_ms']:.2f} ms")
    if failures and times:
        return EXIT_PARTIAL
    if failures:
        degenerate = (EmptyCloudError, EmptyDescriptorError, DegenerateDescriptorError)
        all_degen = all(isinstance(e, degenerate) for _, d, e, _ in results if d is None)
        return EXIT_DEGENERATE if all_degen else EXIT_IO
    return EXIT_OK


def _load_any(path, cfg):
    if path.endswith(".bin"):
        return make_descriptor(load_scan_bin(path), cfg)
    return load_descriptor(path)


def cmd_match(args):
    cfg = _config(args)
    a, b = _load_any(args.map, cfg), _load_any(args.query, cfg)
    score = score_pair(a, b, args.score_mode)
    out = score.to_dict()
    out["config"] = a.config.to_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_index(args):
    cfg = _config(args)
    descs = []
    for path in _scan_paths(args.inputs, (".bin", ".desc")):
        descs.append(_load_any(path, cfg))
    if not descs:
        raise CliError("no inputs found", EXIT_IO)
    save_index(args.out, build_index(descs))
    print(f"indexed {len(descs)} descriptors into {args.out}")
    return EXIT_OK


def _session(scans, poses, frame, cfg, jobs):
    paths = _scan_paths([scans])
    traj = _load_trajectory(poses, frame)
    if len(paths) != len(traj):
        raise CliError(f"{len(paths)} scans but {len(traj)} poses", EXIT_IO)
    results = _describe_many(paths, cfg, jobs)
    bad = [(p, e) for p, d, e, _ in results if d is None]
    if bad:
        raise CliError(f"{len(bad)} scans failed, first: {bad[0][0]}: {bad[0][1]}", EXIT_IO)
    return [d for _, d, _, _ in results], traj


def cmd_eval(args):
    cfg = _config(args)
    descs, traj = _session(args.scans, args.poses, args.pose_frame, cfg, args.jobs)
    if args.mode == "online":
        report = online_eval(descs, traj, d_gt=args.dgt, exclusion=args.exclusion,
                             K=args.topk, mode=args.score_mode, jobs=args.jobs)
    else:
        if not (args.db_scans and args.db_poses):
            raise CliError("multisession mode needs --db-scans and --db-poses", EXIT_USAGE)
        db, db_traj = _session(args.db_scans, args.db_poses, args.pose_frame, cfg, args.jobs)
        report = multisession_eval(descs, traj, db, db_traj, d_gt=args.dgt, K=args.topk,
                                   mode=args.score_mode, db_spacing=args.db_spacing or None,
                                   jobs=args.jobs)
    report.settings["inputs"] = {"scans": args.scans, "poses": args.poses,
                                 "db_scans": args.db_scans, "db_poses": args.db_poses,
                                 "pose_frame": args.pose_frame}
    report.write(args.out)
    s = report.summary()
    print(f"{s['mode']}: {s['n_queries']} queries, {s['n_gt_positive']} with a true revisit; "
          f"AUC {s['auc']:.4f}  R@1 {s['recall_at_1']:.4f}  F1max {s['f1_max']:.4f}"
          + ("  (degenerate: no positives)" if s["degenerate"] else ""))
    return EXIT_OK


def cmd_robustness(args):
    cfg = _config(args)
    spec = SceneSpec(seed=args.seed, n_structures=args.n_structures)
    rows = robustness_sweep(spec, _floats(args.offsets), _floats(args.sigma_t_values), cfg,
                            n_frames=args.frames)
    snapshot = json.dumps({"seed": args.seed, "n_structures": args.n_structures,
                           "frames": args.frames, "config": cfg.to_dict()}, sort_keys=True)
    text = rows_to_csv(rows, comments=[f"settings: {snapshot}"])
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args):
    os.makedirs(os.path.join(args.out, "velodyne"), exist_ok=True)
    if args.kind == "loop":
        seq = loop_sequence(seed=args.seed, side=args.side, spacing=args.spacing,
                            lateral_offset=args.lateral_offset,
                            spec=SceneSpec(points_per_structure=args.points_per_structure),
                            n_structures=args.n_structures, change_fraction=args.change_fraction)
        clouds, traj = seq.clouds, seq.trajectory
    else:
        clouds = [generate_scene(SceneSpec(seed=args.seed + i, n_structures=args.n_structures,
                                           points_per_structure=args.points_per_structure))
                  for i in range(args.frames)]
        traj = Trajectory(np.arange(len(clouds)), np.zeros((len(clouds), 3)), np.zeros(len(clouds)))
    for i, c in enumerate(clouds):
        save_scan_bin(os.path.join(args.out, "velodyne", f"{i:06d}.bin"), c)
    save_poses(os.path.join(args.out, "poses.txt"), traj.positions, traj.yaws)
    with open(os.path.join(args.out, "synth_config.json"), "w") as f:
        json.dump({k: v for k, v in vars(args).items() if k != "func"}, f, indent=2,
                  sort_keys=True)
    print(f"wrote {len(clouds)} scans to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="probe-lpr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="build descriptor files from .bin scans")
    p.add_argument("scans", nargs="+", help=".bin files or directories of them")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", help="score two descriptors (.desc) or scans (.bin)")
    p.add_argument("map")
    p.add_argument("query")
    p.add_argument("--score-mode", choices=SCORE_MODES, default="fused")
    _add_config_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("index", help="write a retrieval index directory")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval", help="online or multi-session evaluation")
    p.add_argument("--scans", required=True, help="directory of .bin scans")
    p.add_argument("--poses", required=True, help="pose file, one 3x4 matrix per line")
    p.add_argument("--mode", choices=("online", "multisession"), default="online")
    p.add_argument("--db-scans")
    p.add_argument("--db-poses")
    p.add_argument("--pose-frame", choices=("xy", "kitti"), default="xy",
                   help="'kitti' reads positions from a camera-frame pose file (ground = x-z)")
    p.add_argument("--score-mode", choices=SCORE_MODES, default="fused")
    p.add_argument("--topk", type=int, default=DEFAULT_TOPK)
    p.add_argument("--dgt", type=float, default=DEFAULT_DGT)
    p.add_argument("--exclusion", type=float, default=DEFAULT_EXCLUSION)
    p.add_argument("--db-spacing", type=float, default=DEFAULT_DB_SPACING,
                   help="multisession database subsampling [m]; 0 disables")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="similarity vs lateral translation sweep (CSV)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offsets", default="0,1,2,3,4")
    p.add_argument("--sigma-t-values", default="0,2,4")
    p.add_argument("--frames", type=int, default=7)
    p.add_argument("--n-structures", type=int, default=60)
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", help="write synthetic scans and poses")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("loop", "scene"), default="loop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=1, help="scene kind only")
    p.add_argument("--n-structures", type=int, default=360)
    p.add_argument("--points-per-structure", type=int, default=600)
    p.add_argument("--side", type=float, default=120.0, help="loop square side [m]")
    p.add_argument("--spacing", type=float, default=4.0, help="loop frame spacing [m]")
    p.add_argument("--lateral-offset", type=float, default=2.5)
    p.add_argument("--change-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    for sp in sub.choices.values():
        _apply_env(sp)
    return parser


def _apply_env(parser):
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help", "version"):
            continue
        raw = os.environ.get(ENV_PREFIX + action.dest.upper())
        if raw is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            action.default = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            action.default = action.type(raw) if action.type else raw
            action.required = False


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (EmptyCloudError, EmptyDescriptorError, DegenerateDescriptorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, MalformedFileError, PoseParseError, ShapeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

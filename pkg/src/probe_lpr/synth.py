"""Synthetic scenes and brute-force oracles.

Scenes are made of vertical structures (walls, pillars, boxes) standing on a
flat ground plane below the sensor.  Scans sample points on the structure
surfaces with range-dependent thinning and Gaussian noise; there is no beam
model and no occlusion.

The oracles here (``monte_carlo_mu``, ``brute_force_cc``) deliberately share
no code with :mod:`probe_lpr.descriptor` or :mod:`probe_lpr.matching`.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import PolarConfig
from .errors import DegenerateDescriptorError, InvalidParameterError
from .pointcloud import PointCloud, Trajectory

ARCHETYPES = ("wall", "pillar", "box")


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    n_structures: int = 60
    area: tuple = (160.0, 160.0)
    points_per_structure: int = 600
    noise_std: float = 0.03
    archetypes: tuple = ARCHETYPES
    sensor_height: float = 1.73
    clearance: float = 3.0
    # Points on structures farther than this are thinned by (falloff / r)^2.
    falloff_range: float = 30.0

    def __post_init__(self):
        if self.n_structures < 0:
            raise InvalidParameterError("n_structures must be >= 0")
        if self.noise_std < 0:
            raise InvalidParameterError("noise_std must be >= 0")
        bad = set(self.archetypes) - set(ARCHETYPES)
        if bad or not self.archetypes:
            raise InvalidParameterError(f"unknown archetypes {sorted(bad)}")


@dataclass(frozen=True)
class Structure:
    kind: str
    center: tuple
    height: float
    size: tuple          # wall: (length,), pillar: (radius,), box: (width, depth)
    yaw: float = 0.0

    @property
    def radius(self) -> float:
        """Radius of the horizontal footprint's bounding circle."""
        if self.kind == "wall":
            return 0.5 * self.size[0]
        if self.kind == "pillar":
            return self.size[0]
        return 0.5 * math.hypot(*self.size)

    def sample(self, rng, n: int) -> np.ndarray:
        """``n`` points on the vertical surfaces, heights measured from the ground."""
        if n <= 0:
            return np.zeros((0, 3))
        cx, cy = self.center
        z = rng.uniform(0.0, self.height, n)
        if self.kind == "wall":
            u = rng.uniform(-0.5, 0.5, n) * self.size[0]
            lx, ly = u, np.zeros(n)
        elif self.kind == "pillar":
            a = rng.uniform(0.0, 2 * math.pi, n)
            lx, ly = self.size[0] * np.cos(a), self.size[0] * np.sin(a)
        else:
            w, d = self.size
            corners = np.array([[-w, -d], [w, -d], [w, d], [-w, d], [-w, -d]]) / 2
            edges = np.array([w, d, w, d])
            t = rng.uniform(0.0, edges.sum(), n)
            k = np.minimum(np.searchsorted(np.cumsum(edges), t, side="right"), 3)
            frac = (t - np.concatenate([[0.0], np.cumsum(edges)[:-1]])[k]) / edges[k]
            xy = corners[k] + frac[:, None] * (corners[k + 1] - corners[k])
            lx, ly = xy[:, 0], xy[:, 1]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.column_stack([cx + c * lx - s * ly, cy + s * lx + c * ly, z])


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-12), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def make_world(spec: SceneSpec, bounds=None, keepout=None, rng=None):
    """Random structures inside ``bounds = (xmin, xmax, ymin, ymax)``.

    Structures are kept at least ``spec.clearance`` meters away from the
    ``keepout`` polyline (default: the origin).
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if bounds is None:
        ax, ay = spec.area
        bounds = (-ax / 2, ax / 2, -ay / 2, ay / 2)
    path = np.zeros((1, 2)) if keepout is None else np.asarray(keepout, float).reshape(-1, 2)
    segs = [(path[i], path[i + 1]) for i in range(len(path) - 1)] or [(path[0], path[0])]
    out = []
    tries = 0
    while len(out) < spec.n_structures:
        tries += 1
        if tries > 200 * max(spec.n_structures, 1):
            raise InvalidParameterError("could not place structures; area too small")
        kind = spec.archetypes[rng.integers(len(spec.archetypes))]
        center = (rng.uniform(bounds[0], bounds[1]), rng.uniform(bounds[2], bounds[3]))
        yaw = rng.uniform(0.0, math.pi)
        if kind == "wall":
            st = Structure(kind, center, rng.uniform(2.0, 8.0), (rng.uniform(5.0, 30.0),), yaw)
        elif kind == "pillar":
            st = Structure(kind, center, rng.uniform(3.0, 10.0), (rng.uniform(0.3, 1.5),), yaw)
        else:
            st = Structure(kind, center, rng.uniform(3.0, 15.0),
                           (rng.uniform(3.0, 12.0), rng.uniform(3.0, 12.0)), yaw)
        c = np.asarray(center)
        if min(_segment_distance(c, a, b) for a, b in segs) < spec.clearance + st.radius:
            continue
        out.append(st)
    return out


def render_scan(structures, pose, spec: SceneSpec, rng, R_max: float = 80.0) -> PointCloud:
    """Sample a scan of ``structures`` from sensor ``pose = (x, y, yaw)``.

    Returns points in the sensor frame (z measured from the sensor).
    """
    px, py, pyaw = pose
    chunks = []
    for st in structures:
        dist = math.hypot(st.center[0] - px, st.center[1] - py)
        if dist - st.radius >= R_max:
            continue
        chunks.append(st.sample(rng, spec.points_per_structure))
    if not chunks:
        return PointCloud(np.zeros((0, 3)))
    pts = np.concatenate(chunks)
    pts[:, 2] -= spec.sensor_height
    if spec.noise_std > 0:
        pts = pts + rng.normal(0.0, spec.noise_std, pts.shape)
    rng_xy = np.hypot(pts[:, 0] - px, pts[:, 1] - py)
    keep_p = np.minimum(1.0, (spec.falloff_range / np.maximum(rng_xy, 1e-9)) ** 2)
    pts = pts[rng.random(len(pts)) < keep_p]
    # world -> sensor
    local = transform_cloud(PointCloud(pts), 0.0, (-px, -py))
    return transform_cloud(local, -pyaw, (0.0, 0.0))


def generate_scene(spec: SceneSpec) -> PointCloud:
    """Deterministic scan of a random scene seen from the origin."""
    if spec.n_structures == 0:
        return PointCloud(np.zeros((0, 3)))
    rng = np.random.default_rng(spec.seed)
    world = make_world(spec, rng=rng)
    return render_scan(world, (0.0, 0.0, 0.0), spec, rng)


def transform_cloud(cloud, yaw: float, translation=(0.0, 0.0)) -> PointCloud:
    """Rotate (x, y) by ``yaw`` about z, then translate; z unchanged."""
    if not (math.isfinite(yaw) and all(math.isfinite(t) for t in translation)):
        raise InvalidParameterError("transform parameters must be finite")
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    c, s = math.cos(yaw), math.sin(yaw)
    out = pts.copy()
    out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + translation[0]
    out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + translation[1]
    return PointCloud(out)


@dataclass
class LoopSequence:
    clouds: list
    trajectory: Trajectory
    world: list = field(default_factory=list)


def square_loop_poses(side: float, spacing: float, start: float = 0.0, lateral: float = 0.0):
    """Poses every ``spacing`` m along a counter-clockwise square of side ``side``.

    ``lateral`` shifts the path to the left of the direction of travel and
    ``start`` shifts the first pose along the path.
    """
    perim = 4 * side
    s = np.arange(start, perim + start - 1e-9, spacing) % perim
    side_idx = np.minimum((s // side).astype(int), 3)
    u = s - side_idx * side
    corners = np.array([[0, 0], [side, 0], [side, side], [0, side]], float)
    dirs = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], float)
    normals = np.array([[0, 1], [-1, 0], [0, -1], [1, 0]], float)
    xy = corners[side_idx] + u[:, None] * dirs[side_idx] + lateral * normals[side_idx]
    yaw = np.arctan2(dirs[side_idx, 1], dirs[side_idx, 0])
    return xy, yaw


def loop_sequence(seed: int = 0, side: float = 120.0, spacing: float = 4.0,
                  lateral_offset: float = 2.5, n_structures: int = 360,
                  spec: SceneSpec | None = None, yaw_noise: float = 0.05,
                  change_fraction: float = 0.0) -> LoopSequence:
    """Two counter-clockwise passes around a square block.

    The second pass drives ``lateral_offset`` meters to the side of the first
    and is staggered by half a frame spacing, so every revisit is offset both
    laterally and longitudinally.  Before the second pass a
    ``change_fraction`` share of the structures is replaced by new random
    ones.  Each frame resamples the scene.
    """
    if not 0.0 <= change_fraction <= 1.0:
        raise InvalidParameterError("change_fraction must lie in [0, 1]")
    spec = spec or SceneSpec(seed=seed, n_structures=n_structures)
    spec = replace(spec, seed=seed, n_structures=n_structures)
    rng = np.random.default_rng(seed)
    margin = 90.0
    bounds = (-margin, side + margin, -margin, side + margin)
    corners = np.array([[0, 0], [side, 0], [side, side], [0, side], [0, 0]], float)
    world = make_world(spec, bounds=bounds, keepout=corners, rng=rng)
    n_change = int(round(change_fraction * len(world)))
    changed = set(rng.choice(len(world), n_change, replace=False).tolist()) if n_change else set()
    fresh = make_world(replace(spec, n_structures=n_change), bounds=bounds, keepout=corners,
                       rng=rng) if n_change else []
    world2 = [st for i, st in enumerate(world) if i not in changed] + fresh

    xy1, yaw1 = square_loop_poses(side, spacing)
    xy2, yaw2 = square_loop_poses(side, spacing, start=spacing / 2, lateral=lateral_offset)
    xy = np.concatenate([xy1, xy2])
    yaw = np.concatenate([yaw1, yaw2]) + rng.normal(0.0, yaw_noise, len(xy1) + len(xy2))
    worlds = [world] * len(xy1) + [world2] * len(xy2)
    streams = np.random.SeedSequence(seed).spawn(len(xy))
    clouds = [render_scan(w, (p[0], p[1], a), spec, np.random.default_rng(ss))
              for w, p, a, ss in zip(worlds, xy, yaw, streams)]
    positions = np.column_stack([xy, np.zeros(len(xy))])
    traj = Trajectory(np.arange(len(xy)), positions, yaw)
    return LoopSequence(clouds, traj, world)


# --- oracles --------------------------------------------------------------

def monte_carlo_mu(O, cfg: PolarConfig, n_samples: int = 20000, seed: int = 0,
                   chunk: int = 500):
    """Sample-mean estimate of expected occupancy under translation noise.

    Each sample draws one Cartesian offset ``N(0, sigma_t^2 I)``, moves every
    cell center by it, re-bins the moved centers into polar cells and reads
    ``O`` there (zero outside the grid).  Returns ``(mu_hat, stderr)``.
    """
    if n_samples < 1000:
        raise InvalidParameterError("n_samples must be >= 1000")
    O = np.asarray(O, dtype=np.float64)
    R, S = O.shape
    dr = cfg.R_max / R
    dth = 2 * math.pi / S
    if cfg.sigma_t == 0:
        return O.copy(), np.zeros_like(O)
    rng = np.random.default_rng(seed)
    rc = (np.arange(R) + 0.5) * dr
    tc = (np.arange(S) + 0.5) * dth
    cx = (rc[:, None] * np.cos(tc)[None, :]).ravel()
    cy = (rc[:, None] * np.sin(tc)[None, :]).ravel()
    flatO = np.append(O.ravel(), 0.0)       # last slot: outside the grid
    total = np.zeros(R * S)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        off = rng.normal(0.0, cfg.sigma_t, size=(n, 2))
        x = cx[None, :] + off[:, 0:1]
        y = cy[None, :] + off[:, 1:2]
        ring = np.floor(np.sqrt(x * x + y * y) / dr).astype(np.int64)
        ang = np.arctan2(y, x)
        ang[ang < 0] += 2 * math.pi
        sector = np.floor(ang / dth).astype(np.int64) % S
        idx = np.where(ring < R, ring * S + sector, R * S)
        total += flatO[idx].sum(axis=0)
        done += n
    mu_hat = (total / n_samples).reshape(R, S)
    stderr = np.sqrt(mu_hat * (1 - mu_hat) / n_samples)
    return mu_hat, stderr


def brute_force_cc(G_m, G_q):
    """Normalised circular cross-correlation by explicit loops."""
    G_m = np.asarray(G_m, dtype=np.float64)
    G_q = np.asarray(G_q, dtype=np.float64)
    if G_m.shape != G_q.shape:
        raise InvalidParameterError("grids differ in shape")
    R, S = G_m.shape
    a, b = G_m.tolist(), G_q.tolist()
    norm_m = math.sqrt(sum(v * v for row in a for v in row))
    norm_q = math.sqrt(sum(v * v for row in b for v in row))
    if norm_m == 0 or norm_q == 0:
        raise DegenerateDescriptorError("zero-norm grid")
    cc = []
    for d in range(S):
        acc = 0.0
        for r in range(R):
            ar, br = a[r], b[r]
            for s in range(S):
                acc += ar[s] * br[(s + d) % S]
        cc.append(acc / (norm_m * norm_q))
    return np.array(cc)


# --- translation robustness sweep -------------------------------------------

ROBUSTNESS_DIRECTIONS = (0.0, 120.0, 240.0)


def robustness_sweep(spec: SceneSpec, offsets=(0, 1, 2, 3, 4), sigma_t_values=(0.0, 2.0, 4.0),
                     cfg: PolarConfig | None = None, n_frames: int = 7,
                     directions=ROBUSTNESS_DIRECTIONS):
    """Mean and std of the KL Jaccard between a scene and laterally shifted copies.

    ``n_frames`` scenes (seeds ``spec.seed + i``) are each shifted by every
    offset in every direction (degrees); the pair is scored at the true
    rotation.  Returns a list of dict rows with keys offset_m, sigma_t,
    mean_jkl, std_jkl.
    """
    from .descriptor import make_descriptor
    from .matching import kl_jaccard

    if 0 not in [float(o) for o in offsets]:
        raise InvalidParameterError("offsets must include 0")
    cfg = cfg or PolarConfig()
    clouds = [generate_scene(replace(spec, seed=spec.seed + i)) for i in range(n_frames)]
    rows = []
    for sig in sigma_t_values:
        c = cfg.replace(sigma_t=float(sig))
        base = [make_descriptor(cl, c) for cl in clouds]
        for off in offsets:
            vals = []
            for cl, d0 in zip(clouds, base):
                for deg in directions:
                    a = math.radians(deg)
                    moved = transform_cloud(cl, 0.0, (off * math.cos(a), off * math.sin(a)))
                    d1 = make_descriptor(moved, c)
                    vals.append(kl_jaccard(d0.mu, d0.sigma, d1.mu, d1.sigma, c))
            rows.append({"offset_m": float(off), "sigma_t": float(sig),
                         "mean_jkl": float(np.mean(vals)), "std_jkl": float(np.std(vals))})
    return rows


def rows_to_csv(rows, header=("offset_m", "sigma_t", "mean_jkl", "std_jkl"), comments=()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()

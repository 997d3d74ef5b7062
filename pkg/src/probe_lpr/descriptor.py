"""Polar BEV descriptor with per-cell Bernoulli occupancy.

A scan is binned into an ``R x S`` polar grid holding the maximum (offset)
height per cell and a binary occupancy mask ``O``.  Isotropic Cartesian
translation noise of standard deviation ``sigma_t`` maps, to first order,
to independent polar perturbations with radial width ``sigma_t`` and angular
width ``sigma_t / r``.  The expected occupancy ``mu`` under that noise is a
separable blur of ``O``: a circular blur along each ring whose width shrinks
with range, then a zero-padded blur across rings.  The per-cell Bernoulli
standard deviation is ``sqrt(mu (1 - mu))``.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d
from scipy.special import erf

from .config import PolarConfig
from .errors import (EmptyCloudError, EmptyDescriptorError, MalformedFileError,
                     ShapeMismatchError)
from .pointcloud import PointCloud, voxel_downsample

__all__ = [
    "Descriptor", "build_polar_grid", "ring_density", "angular_kernel_width",
    "angular_kernel_widths", "gaussian_kernel", "angular_blur", "radial_blur",
    "marginalize_occupancy", "bernoulli_sigma", "ring_key", "make_descriptor",
    "roll_sectors", "save_descriptor", "load_descriptor", "dumps_descriptor",
    "loads_descriptor",
]


@dataclass(frozen=True, eq=False)
class Descriptor:
    G: np.ndarray
    O: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    row_spectra: np.ndarray
    frob_norm_G: float
    key: np.ndarray
    config: PolarConfig = field(default_factory=PolarConfig)

    @property
    def shape(self):
        return self.G.shape

    @classmethod
    def from_grids(cls, G, O, mu, cfg: PolarConfig) -> "Descriptor":
        """Assemble a descriptor from its grids, deriving everything else."""
        G = np.ascontiguousarray(G, dtype=np.float64)
        O = np.ascontiguousarray(O, dtype=np.uint8)
        mu = np.ascontiguousarray(mu, dtype=np.float64)
        if not (G.shape == O.shape == mu.shape == (cfg.R, cfg.S)):
            raise ShapeMismatchError(
                f"grids {G.shape}/{O.shape}/{mu.shape} do not match ({cfg.R}, {cfg.S})")
        sigma = bernoulli_sigma(mu)
        arrays = [G, O, mu, sigma]
        for a in arrays:
            a.setflags(write=False)
        spectra = np.fft.fft(G, axis=1)
        spectra.setflags(write=False)
        key = ring_key(G, mu)
        key.setflags(write=False)
        return cls(G, O, mu, sigma, spectra, float(np.linalg.norm(G)), key, cfg)


def build_polar_grid(cloud: PointCloud, cfg: PolarConfig):
    """Bin a cloud into the max-height grid ``G`` and occupancy mask ``O``.

    Points with horizontal range ``>= R_max`` are ignored.  Heights are
    ``z + height_offset`` clamped below at zero so that empty cells (0) never
    mix with negative heights.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    if len(pts) == 0:
        raise EmptyCloudError("cannot build a grid from an empty cloud")
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    rng = np.hypot(x, y)
    keep = rng < cfg.R_max
    if not keep.any():
        raise EmptyDescriptorError("no point lies within R_max")
    rng, x, y, z = rng[keep], x[keep], y[keep], z[keep]

    ring = np.minimum((rng / cfg.delta_r).astype(np.int64), cfg.R - 1)
    theta = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    sector = np.floor(theta / cfg.delta_theta).astype(np.int64) % cfg.S
    flat = ring * cfg.S + sector

    G = np.zeros(cfg.R * cfg.S)
    np.maximum.at(G, flat, np.maximum(z + cfg.height_offset, 0.0))
    O = (np.bincount(flat, minlength=cfg.R * cfg.S) > 0).astype(np.uint8)
    return G.reshape(cfg.R, cfg.S), O.reshape(cfg.R, cfg.S)


def ring_density(O) -> np.ndarray:
    """Fraction of occupied sectors in each ring."""
    O = np.asarray(O, dtype=np.float64)
    return O.mean(axis=1)


def angular_kernel_width(r: int, rho_r: float, cfg: PolarConfig) -> float:
    """Angular blur width of ring ``r`` in sector cells.

    The translation width is scaled by the square root of the ring's
    occupancy rate (when ``cfg.density_adaptive``), converted to an angle at
    the ring center and capped at ``cfg.sigma_theta_cap``.
    """
    r_center = (r + 0.5) * cfg.delta_r
    sigma_eff = cfg.sigma_t * (math.sqrt(rho_r) if cfg.density_adaptive else 1.0)
    return min(sigma_eff / (r_center * cfg.delta_theta), cfg.sigma_theta_cap)


def angular_kernel_widths(rho, cfg: PolarConfig) -> np.ndarray:
    """Vectorised :func:`angular_kernel_width` over all rings."""
    rho = np.asarray(rho, dtype=np.float64)
    r_center = (np.arange(cfg.R) + 0.5) * cfg.delta_r
    scale = np.sqrt(rho) if cfg.density_adaptive else np.ones_like(rho)
    width = cfg.sigma_t * scale / (r_center * cfg.delta_theta)
    return np.minimum(width, cfg.sigma_theta_cap)


def gaussian_kernel(sigma: float, truncation: float = 4.0) -> np.ndarray:
    """Odd-length 1-D Gaussian kernel in cell units, summing to one.

    Tap ``k`` holds the Gaussian mass of the cell interval ``[k - 1/2, k + 1/2]``,
    so a shift drawn from N(0, sigma^2) lands in cell ``k`` with exactly that
    probability.  Support is truncated at ``ceil(truncation * sigma)`` cells
    and renormalised.  ``sigma == 0`` gives the identity kernel ``[1]``.
    """
    if sigma <= 0:
        return np.ones(1)
    radius = max(1, int(math.ceil(truncation * sigma)))
    edges = (np.arange(-radius, radius + 2) - 0.5) / (sigma * math.sqrt(2.0))
    k = np.diff(0.5 * erf(edges))
    return k / k.sum()


def _fold_circular(kernel: np.ndarray, n: int) -> np.ndarray:
    """Wrap a centred kernel onto ``n`` circular taps (tap 0 = zero offset)."""
    radius = len(kernel) // 2
    offsets = np.arange(-radius, radius + 1) % n
    return np.bincount(offsets, weights=kernel, minlength=n)


def angular_blur(O, cfg: PolarConfig, widths=None) -> np.ndarray:
    """Blur every ring circularly with its own Gaussian width.

    Kernels wider than the ring are folded onto it, so each ring's sum is
    preserved exactly up to rounding.  Rings of zero width are copied.
    """
    O = np.asarray(O, dtype=np.float64)
    if widths is None:
        widths = angular_kernel_widths(ring_density(O), cfg)
    out = O.copy()
    rows = np.flatnonzero(widths > 0)
    if rows.size == 0:
        return out
    S = O.shape[1]
    kernels = np.stack([_fold_circular(gaussian_kernel(widths[r], cfg.kernel_truncation), S)
                        for r in rows])
    blurred = np.fft.irfft(np.fft.rfft(O[rows], axis=1) * np.fft.rfft(kernels, axis=1),
                           n=S, axis=1)
    out[rows] = blurred
    return out


def radial_blur(mu, cfg: PolarConfig) -> np.ndarray:
    """Blur across rings with the position-independent width ``sigma_t / delta_r``.

    Beyond the grid (inside ring 0 and past ``R_max``) the grid is padded with
    zeros.
    """
    mu = np.asarray(mu, dtype=np.float64)
    width = cfg.sigma_r_cells
    if width <= 0:
        return mu.copy()
    k = gaussian_kernel(width, cfg.kernel_truncation)
    return correlate1d(mu, k, axis=0, mode="constant", cval=0.0)


def marginalize_occupancy(O, cfg: PolarConfig) -> np.ndarray:
    """Expected occupancy of each cell under translation noise ``sigma_t``.

    Density scaling (when enabled) uses the occupancy rate of the raw mask.  With
    ``sigma_t == 0`` the result equals ``O``.
    """
    O = np.asarray(O)
    if cfg.sigma_t == 0:
        return O.astype(np.float64)
    mu = radial_blur(angular_blur(O, cfg), cfg)
    return np.clip(mu, 0.0, 1.0)


def bernoulli_sigma(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    return np.sqrt(mu * (1.0 - mu))


def ring_key(G, mu) -> np.ndarray:
    """Rotation-invariant retrieval key: per-ring means of ``G`` then of ``mu``."""
    G = np.asarray(G, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    # fsum is correctly rounded, hence independent of the sector order.
    S = G.shape[1]
    return np.array([math.fsum(row) / S for row in G] + [math.fsum(row) / S for row in mu])


def make_descriptor(cloud: PointCloud, cfg: PolarConfig | None = None) -> Descriptor:
    cfg = cfg or PolarConfig()
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    if len(cloud) == 0:
        raise EmptyCloudError("cannot describe an empty cloud")
    if cfg.voxel is not None:
        cloud = voxel_downsample(cloud, cfg.voxel)
    G, O = build_polar_grid(cloud, cfg)
    mu = marginalize_occupancy(O, cfg)
    return Descriptor.from_grids(G, O, mu, cfg)


def roll_sectors(desc: Descriptor, k: int) -> Descriptor:
    """Descriptor of the same scan rotated by ``k`` sectors counter-clockwise."""
    G = np.roll(desc.G, k, axis=1)
    O = np.roll(desc.O, k, axis=1)
    mu = np.roll(desc.mu, k, axis=1)
    return Descriptor.from_grids(G, O, mu, desc.config)


# --- serialization -------------------------------------------------------
#
# Layout (little-endian):
#   8s   magic  b"PROBEDSC"
#   u32  format version (1)
#   u32  R
#   u32  S
#   f64  R_max
#   f64  sigma_t
#   u32  n, length of the UTF-8 JSON config that follows
#   n    JSON object with every PolarConfig field
#   f64[R*S]  G      (row-major)
#   u8 [R*S]  O
#   f64[R*S]  mu
#   f64[R*S]  sigma
#   f64[2R]   key
# Row spectra and the Frobenius norm are recomputed on load.

MAGIC = b"PROBEDSC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIddI")


def dumps_descriptor(desc: Descriptor) -> bytes:
    cfg = desc.config
    meta = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, cfg.R, cfg.S, cfg.R_max, cfg.sigma_t,
                           len(meta)))
    buf.write(meta)
    buf.write(desc.G.astype("<f8").tobytes())
    buf.write(desc.O.astype("u1").tobytes())
    buf.write(desc.mu.astype("<f8").tobytes())
    buf.write(desc.sigma.astype("<f8").tobytes())
    buf.write(desc.key.astype("<f8").tobytes())
    return buf.getvalue()


def loads_descriptor(data: bytes) -> Descriptor:
    if len(data) < _HEADER.size:
        raise MalformedFileError("truncated descriptor header")
    magic, version, R, S, R_max, sigma_t, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFileError("not a descriptor file (bad magic)")
    if version != FORMAT_VERSION:
        raise MalformedFileError(f"unsupported descriptor version {version}")
    off = _HEADER.size
    cfg = PolarConfig.from_dict(json.loads(data[off:off + n].decode()))
    off += n
    if (cfg.R, cfg.S, cfg.R_max, cfg.sigma_t) != (R, S, R_max, sigma_t):
        raise MalformedFileError("descriptor header disagrees with embedded config")
    cells = R * S
    expected = off + cells * (8 * 3 + 1) + 2 * R * 8
    if len(data) != expected:
        raise MalformedFileError(f"descriptor body has {len(data)} bytes, expected {expected}")

    def take(dtype, count):
        nonlocal off
        a = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += a.nbytes
        return a.astype(np.dtype(dtype).newbyteorder("="))

    G = take("<f8", cells).reshape(R, S)
    O = take("u1", cells).reshape(R, S)
    mu = take("<f8", cells).reshape(R, S)
    sigma = take("<f8", cells).reshape(R, S)
    key = take("<f8", 2 * R)
    desc = Descriptor.from_grids(G, O, mu, cfg)
    # Stored sigma/key are authoritative; they equal the derived ones bit-for-bit
    # unless the file was produced elsewhere.
    for a in (sigma, key):
        a.setflags(write=False)
    return Descriptor(desc.G, desc.O, desc.mu, sigma, desc.row_spectra, desc.frob_norm_G,
                      key, cfg)


def save_descriptor(path, desc: Descriptor):
    with open(path, "wb") as f:
        f.write(dumps_descriptor(desc))


def load_descriptor(path) -> Descriptor:
    with open(path, "rb") as f:
        return loads_descriptor(f.read())

"""Rotation alignment and pairwise scoring of two descriptors.

Heading is resolved by circular cross-correlation of the max-height grids,
computed from the precomputed row spectra.  At the best shift the aligned
occupancy maps are compared cell by cell with a symmetric Bernoulli KL
divergence after shrinking uncertain cells toward 0.5; the mean divergence
over the soft union becomes a similarity ``exp(-mean)`` which is multiplied
by the cosine similarity at that shift.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .config import PolarConfig
from .descriptor import Descriptor
from .errors import (DegenerateDescriptorError, EmptyUnionError, InvalidParameterError,
                     ShapeMismatchError)

SCORE_MODES = ("fused", "cosine", "kl")

# Correlation values this close to the maximum count as ties.
_TIE_TOL = 1e-12
# Unions smaller than this are flagged in MatchScore.small_union.
SMALL_UNION = 5


@dataclass(frozen=True)
class MatchScore:
    delta_star: int
    cosine: float
    kl_jaccard: float
    similarity: float
    distance: float
    mode: str = "fused"
    union_size: int = 0
    empty_union: bool = False

    @property
    def small_union(self) -> bool:
        return self.union_size < SMALL_UNION

    def to_dict(self) -> dict:
        d = asdict(self)
        d["small_union"] = self.small_union
        return d


def _check_pair(m: Descriptor, q: Descriptor):
    if m.shape != q.shape:
        raise ShapeMismatchError(f"descriptor shapes differ: {m.shape} vs {q.shape}")
    if m.config.R_max != q.config.R_max:
        raise ShapeMismatchError("descriptors were built with different R_max")
    if m.frob_norm_G <= 0 or q.frob_norm_G <= 0:
        raise DegenerateDescriptorError("height grid has zero norm")


def circular_cross_correlation(m: Descriptor, q: Descriptor) -> np.ndarray:
    """Normalised correlation ``CC[d] = sum G_m[r, s] G_q[r, s + d] / (|G_m| |G_q|)``.

    Row spectra are summed before a single inverse transform, so the cost is
    O(R S + S log S) per pair.
    """
    _check_pair(m, q)
    cross = (np.conj(m.row_spectra) * q.row_spectra).sum(axis=0)
    cc = np.fft.ifft(cross).real
    return cc / (m.frob_norm_G * q.frob_norm_G)


def best_rotation(cc) -> int:
    """Index of the maximum of ``cc``; near-ties go to the smallest shift."""
    cc = np.asarray(cc, dtype=np.float64)
    top = cc.max()
    return int(np.flatnonzero(cc >= top - _TIE_TOL * max(1.0, abs(top)))[0])


def align_query(q: Descriptor, delta_star: int):
    """Shift query columns so that query sector ``s + delta_star`` lands on ``s``."""
    shift = -int(delta_star) % q.shape[1]
    return np.roll(q.mu, shift, axis=1), np.roll(q.sigma, shift, axis=1)


def shrink(mu, sigma, eps_B: float = 1e-6):
    """Pull occupancy toward 0.5 in proportion to its uncertainty, then clamp."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    p = mu * (1.0 - sigma) + 0.5 * sigma
    return np.clip(p, eps_B, 1.0 - eps_B)


def _logit(p):
    return np.log(p) - np.log1p(-p)


def symmetric_kl(p_m, p_q):
    """Mean of the two directed Bernoulli KL divergences.

    ``KL(a||b) + KL(b||a)`` collapses to ``(a - b) (logit a - logit b)``, which
    is exactly symmetric and non-negative in floating point.
    """
    p_m = np.asarray(p_m, dtype=np.float64)
    p_q = np.asarray(p_q, dtype=np.float64)
    return 0.5 * (p_m - p_q) * (_logit(p_m) - _logit(p_q))


def kl_jaccard(mu_m, sigma_m, mu_q, sigma_q, cfg: PolarConfig | None = None,
               return_union=False):
    """Similarity ``exp(-mean D)`` over cells where ``mu_m + mu_q > eps_U``.

    Raises EmptyUnionError when no cell passes the threshold.
    """
    cfg = cfg or PolarConfig()
    mu_m = np.asarray(mu_m, dtype=np.float64)
    mu_q = np.asarray(mu_q, dtype=np.float64)
    if mu_m.shape != mu_q.shape:
        raise ShapeMismatchError(f"occupancy shapes differ: {mu_m.shape} vs {mu_q.shape}")
    union = (mu_m + mu_q) > cfg.eps_U
    n = int(union.sum())
    if n == 0:
        raise EmptyUnionError("no cell in the soft union")
    p_m = shrink(mu_m[union], np.asarray(sigma_m)[union], cfg.eps_B)
    p_q = shrink(mu_q[union], np.asarray(sigma_q)[union], cfg.eps_B)
    j = float(np.exp(-symmetric_kl(p_m, p_q).mean()))
    return (j, n) if return_union else j


def score_pair(m: Descriptor, q: Descriptor, mode: str = "fused") -> MatchScore:
    """Score map ``m`` against query ``q``.

    ``mode`` picks the reported similarity: ``"fused"`` (KL Jaccard times
    cosine), ``"cosine"`` or ``"kl"``.  All three factors are always computed.
    An empty soft union yields distance 1 with ``empty_union`` set.
    """
    if mode not in SCORE_MODES:
        raise InvalidParameterError(f"score mode must be one of {SCORE_MODES}, got {mode!r}")
    cc = circular_cross_correlation(m, q)
    delta = best_rotation(cc)
    # Cauchy-Schwarz bound; FFT rounding can overshoot 1 by an ulp.
    cosine = float(np.clip(cc[delta], -1.0, 1.0))
    mu_q, sigma_q = align_query(q, delta)
    try:
        jkl, n = kl_jaccard(m.mu, m.sigma, mu_q, sigma_q, m.config, return_union=True)
    except EmptyUnionError:
        return MatchScore(delta, cosine, 0.0, 0.0, 1.0, mode, 0, True)
    if mode == "fused":
        sim = jkl * cosine
    elif mode == "cosine":
        sim = cosine
    else:
        sim = jkl
    return MatchScore(delta, cosine, jkl, sim, 1.0 - sim, mode, n, False)

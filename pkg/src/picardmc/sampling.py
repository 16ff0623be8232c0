"""Sampling laws on Gaussian blocks and the ordered unit simplex.

Points of the simplex ``S(m)`` are stored in decreasing order
``1 > tau_1 > ... > tau_m > 0``.  Their gap representation is
``(1 - tau_1, tau_1 - tau_2, ..., tau_{m-1} - tau_m, tau_m)``; the last entry
is the remainder.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .streams import RandomStream

MIN_GAP = 1e-300


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


@dataclass(frozen=True)
class GaussianBlock:
    """``m`` steps of ``d``-dimensional standard normal vectors.

    ``z`` has shape ``(m, d)``, or ``(size, m, d)`` for a batch.
    """

    m: int
    d: int
    z: np.ndarray

    def __post_init__(self):
        if self.z.shape[-2:] != (self.m, self.d):
            raise ValueError(f"block shape {self.z.shape} does not end in {(self.m, self.d)}")


@dataclass(frozen=True)
class SimplexPoint:
    """Point (or batch of points) of the decreasing unit simplex ``S(m)``.

    ``coords`` has shape ``(m,)`` or ``(size, m)``.
    """

    m: int
    coords: np.ndarray

    def __post_init__(self):
        if self.coords.shape[-1] != self.m:
            raise ValueError(f"coords last axis {self.coords.shape[-1]} != m={self.m}")

    @property
    def gaps(self) -> np.ndarray:
        c = self.coords
        upper = np.concatenate([np.ones(c.shape[:-1] + (1,)), c], axis=-1)
        steps = upper[..., :-1] - upper[..., 1:]
        return np.concatenate([steps, c[..., -1:]], axis=-1)

    def is_valid(self, atol: float = 1e-12) -> bool:
        c = self.coords
        if np.any(c >= 1.0) or np.any(c <= 0.0):
            return False
        if self.m > 1 and np.any(np.diff(c, axis=-1) >= 0.0):
            return False
        return bool(np.all(np.abs(self.gaps.sum(axis=-1) - 1.0) <= atol))


def _batch_shape(size: Optional[int]) -> tuple:
    return () if size is None else (int(size),)


def gaussian_block_sample(m: int, d: int, stream: RandomStream, size: Optional[int] = None) -> GaussianBlock:
    z = stream.generator().standard_normal(_batch_shape(size) + (m, d))
    return GaussianBlock(m, d, z)


def uniform_simplex_sample(m: int, stream: RandomStream, size: Optional[int] = None) -> SimplexPoint:
    """Uniform law on ``S(m)`` as descending order statistics of ``m`` uniforms."""
    u = stream.uniforms(_batch_shape(size) + (m,))
    return SimplexPoint(m, -np.sort(-u, axis=-1))


def simplex_from_uniforms(alphas: Sequence[float], u: np.ndarray) -> np.ndarray:
    """Map uniforms to a point of ``S(m)`` with gap-Dirichlet law.

    The gaps ``(g_1, ..., g_m, remainder)`` follow Dirichlet(alphas, 1).  The
    gaps are peeled off from the top by stick-breaking: the fraction of the
    remaining interval taken by gap ``j`` is Beta(alpha_j, 1 + sum of the later
    alphas), evaluated by the inverse regularized incomplete beta function.
    One uniform per gap is consumed.

    Parameters
    ----------
    alphas : sequence of float
        Concentration of each gap, top to bottom.
    u : ndarray, shape (..., m)
        Open-interval uniforms.

    Returns
    -------
    ndarray, shape (..., m)
        Decreasing simplex coordinates.
    """
    alphas = np.asarray(alphas, dtype=float)
    m = alphas.shape[0]
    if u.shape[-1] != m:
        raise ValueError(f"need {m} uniforms per point, got {u.shape[-1]}")
    tail = 1.0 + np.concatenate([np.cumsum(alphas[::-1])[::-1][1:], [0.0]])
    lo = np.nextafter(0.0, 1.0)
    hi = np.nextafter(1.0, 0.0)
    coords = np.empty_like(u, dtype=float)
    rem = np.ones(u.shape[:-1])
    for j in range(m):
        frac = np.clip(special.betaincinv(alphas[j], tail[j], u[..., j]), lo, hi)
        nxt = rem * (1.0 - frac)
        # a gap below one ulp of rem would vanish; keep the point strictly inside S(m)
        nxt = np.minimum(nxt, np.nextafter(rem, 0.0))
        rem = np.maximum(nxt, np.finfo(float).tiny)
        coords[..., j] = rem
    return coords


def dirichlet_chain_sample(alphas: Sequence[float], stream: RandomStream, size: Optional[int] = None) -> SimplexPoint:
    m = len(alphas)
    u = stream.uniforms(_batch_shape(size) + (m,))
    return SimplexPoint(m, simplex_from_uniforms(alphas, u))


def pb_half_sample(m: int, stream: RandomStream, size: Optional[int] = None) -> SimplexPoint:
    """Polygonal Beta PB(1/2, m): density proportional to the product of gap^(-1/2)."""
    return dirichlet_chain_sample([0.5] * m, stream, size)


def unit_ball_volume(m: int) -> float:
    if m < 0:
        raise DomainError(f"dimension must be non-negative, got {m}")
    return math.pi ** (m / 2) / math.gamma(1 + m / 2)


def pb_density(m: int, s) -> np.ndarray:
    """Density of PB(1/2, m) at ``s`` (a SimplexPoint or coordinate array)."""
    coords = s.coords if isinstance(s, SimplexPoint) else np.asarray(s, dtype=float)
    point = SimplexPoint(m, coords)
    gaps = point.gaps
    if np.any(gaps[..., :-1] < MIN_GAP) or np.any(gaps[..., -1] <= 0.0):
        raise DomainError("pb_density needs an interior point of S(m) (all gaps positive)")
    out = np.prod(gaps[..., :-1] ** -0.5, axis=-1) / unit_ball_volume(m)
    return out if out.ndim else float(out)


def dirichlet_simplex_integral(alphas: Sequence[float]) -> float:
    """Integral over ``S(m)`` of the product of gap^(-alpha_k).

    Equals prod Gamma(1 - alpha_k) / Gamma(1 + sum(1 - alpha_k)).
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("need at least one exponent")
    if any(a < 0.0 or a >= 1.0 for a in alphas):
        raise DomainError(f"exponents must lie in [0, 1), got {alphas}")
    log_num = sum(math.lgamma(1.0 - a) for a in alphas)
    return math.exp(log_num - math.lgamma(1.0 + sum(1.0 - a for a in alphas)))


def mittag_leffler_partial(beta: float, z: float, terms: int) -> float:
    """Partial sum ``sum_{n < terms} z^n / Gamma(1 + n beta)``.

    Terms are formed in log space; if one does not fit in a float the sum
    saturates to a signed infinity and a RuntimeWarning names the index.
    """
    if terms < 1:
        raise DomainError("terms must be >= 1")
    if beta <= 0:
        raise DomainError("beta must be positive")
    parts = [1.0]
    if z == 0.0:
        return 1.0
    log_abs = math.log(abs(z))
    for n in range(1, terms):
        log_term = n * log_abs - math.lgamma(1.0 + n * beta)
        if log_term > 709.0:
            warnings.warn(f"Mittag-Leffler term {n} overflows; sum saturated", RuntimeWarning, stacklevel=2)
            sign = -1.0 if (z < 0 and n % 2) else 1.0
            return sign * math.inf
        term = math.exp(log_term)
        parts.append(-term if (z < 0 and n % 2) else term)
    return math.fsum(parts)

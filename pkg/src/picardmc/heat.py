"""Heat kernel and the two base estimators of the heat semigroup.

The heat equation is normalized as ``u_t = 0.5 * Laplace(u) + f``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimate import DEFAULT_CHUNK, EstimateWithError, mc_mean
from .fields import TestField, forced_exact, heat_exact
from .sampling import DomainError, gaussian_block_sample
from .streams import RandomStream


def heat_kernel(x, t) -> np.ndarray:
    """``w_t(x) = (2 pi t)^(-d/2) exp(-||x||^2 / (2t))``; ``x`` has shape (..., d)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("heat kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    return (2 * np.pi * t) ** (-d / 2) * np.exp(-np.sum(x * x, axis=-1) / (2 * t))


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Evaluation sites: ``x`` of shape (P, d) and ``t`` of shape (P,), all t > 0."""

    x: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        t = np.atleast_1d(np.asarray(self.t, dtype=float))
        if x.shape[0] != t.shape[0]:
            raise ValueError("x and t must list the same number of points")
        if x.shape[0] == 0:
            raise DomainError("grid is empty")
        if np.any(t <= 0):
            raise DomainError("grid times must be positive")
        if len({tuple(r) for r in np.column_stack([x, t])}) != x.shape[0]:
            raise ValueError("grid points must be distinct")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], n: int, times: Sequence[float]) -> "SpaceTimeGrid":
        """Tensor grid with ``n`` points per axis on ``[lo, hi]`` at each listed time."""
        axes = [np.linspace(a, b, n) if n > 1 else np.array([(a + b) / 2]) for a, b in zip(lo, hi)]
        xs = np.array(list(itertools.product(*axes)), dtype=float)
        pts = [(x, t) for t in times for x in xs]
        return cls(np.array([p[0] for p in pts]), np.array([p[1] for p in pts], dtype=float))


def _check_t(t: float):
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")


def semigroup_mc(
    a: TestField, x, t: float, N: int, stream: RandomStream, chunk_size: int = DEFAULT_CHUNK, workers: int = 1
) -> EstimateWithError:
    """Average of ``a(x + xi_i sqrt(t))`` over standard normal ``xi_i``."""
    _check_t(t)
    x = np.asarray(x, dtype=float)

    def draw(count, st):
        xi = gaussian_block_sample(1, a.d, st, size=count).z[:, 0, :]
        return a(x + xi * math.sqrt(t))

    return mc_mean(draw, N, stream, chunk_size, workers)


def forced_mc(
    f: TestField, x, t: float, N: int, stream: RandomStream, chunk_size: int = DEFAULT_CHUNK, workers: int = 1
) -> EstimateWithError:
    """Average of ``t f(x + eta sqrt(t (1 - tau)), t tau)``; eta normal, tau uniform."""
    _check_t(t)
    x = np.asarray(x, dtype=float)

    def draw(count, st):
        eta = gaussian_block_sample(1, f.d, st.child(0), size=count).z[:, 0, :]
        tau = st.child(1).uniforms(count)
        y = x + eta * np.sqrt(t * (1.0 - tau))[:, None]
        return t * f(y, t * tau)

    return mc_mean(draw, N, stream, chunk_size, workers)


def heat_grid_mc(
    a: Optional[TestField],
    f: Optional[TestField],
    grid: SpaceTimeGrid,
    N: int,
    stream: RandomStream,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> EstimateWithError:
    """Depending-trial estimate of ``u_0`` on a whole grid.

    One sample set is shared by every grid point; the result holds arrays of
    shape (P,).  Initial data and forcing use independent substreams.
    """
    x, t = grid.x, grid.t
    d = grid.d

    def draw(count, st):
        out = np.zeros((count, len(grid)))
        if a is not None:
            xi = gaussian_block_sample(1, d, st.child(0), size=count).z[:, 0, :]
            out += a(x[None, :, :] + xi[:, None, :] * np.sqrt(t)[None, :, None])
        if f is not None:
            eta = gaussian_block_sample(1, d, st.child(1), size=count).z[:, 0, :]
            tau = st.child(2).uniforms(count)
            y = x[None] + eta[:, None, :] * np.sqrt(t[None, :] * (1.0 - tau[:, None]))[..., None]
            out += t[None, :] * f(y, t[None, :] * tau[:, None])
        return out

    return mc_mean(draw, N, stream, chunk_size, workers)


def u0_exact(a: Optional[TestField], f: Optional[TestField], x, t: float) -> float:
    """Exact ``u_0(x, t)`` from closed forms (initial part plus forced part)."""
    val = 0.0
    if a is not None:
        val += float(heat_exact(a, x, t))
    if f is not None:
        val += float(forced_exact(f, x, t))
    return val


def field_norm(values, p: float = math.inf, weights=None) -> float:
    """Discrete L_p (or sup) norm of a sampled field, max over components.

    Parameters
    ----------
    values : array, shape (P,) or (P, components)
    p : float
        ``>= 1`` or ``inf``.
    weights : array of shape (P,), optional
        Quadrature weights; default is the unit-measure grid ``1/P``.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0 or v.shape[0] == 0:
        raise DomainError("field_norm on an empty grid")
    if v.ndim == 1:
        v = v[:, None]
    if p < 1:
        raise DomainError("p must be >= 1")
    if math.isinf(p):
        return float(np.max(np.abs(v)))
    w = np.full(v.shape[0], 1.0 / v.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    per_comp = (w[:, None] * np.abs(v) ** p).sum(axis=0) ** (1.0 / p)
    return float(per_comp.max())

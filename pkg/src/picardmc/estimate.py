"""Estimate container and deterministic chunked Monte Carlo reduction."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .streams import RandomStream

DEFAULT_CHUNK = 65536

Number = Union[float, np.ndarray]


class EstimatorError(RuntimeError):
    """A sampled integrand value was not finite."""

    def __init__(self, message: str, sample_index: int):
        super().__init__(f"{message} (sample index {sample_index})")
        self.sample_index = sample_index


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo estimate with its sample count and standard error.

    ``stderr`` is the unbiased sample standard deviation over ``sqrt(n_samples)``;
    a single sample reports ``inf``.
    """

    value: Number
    n_samples: int
    stderr: Number
    variance_bound: Optional[float] = None

    def to_dict(self) -> dict:
        def conv(v):
            return np.asarray(v).tolist()
        out = {"value": conv(self.value), "n_samples": int(self.n_samples), "stderr": conv(self.stderr)}
        if self.variance_bound is not None:
            out["variance_bound"] = float(self.variance_bound)
        return out


# (count, mean, sum of squared deviations)
_Moments = Tuple[int, np.ndarray, np.ndarray]


def _moments(x: np.ndarray) -> _Moments:
    mean = x.mean(axis=0)
    return x.shape[0], mean, ((x - mean) ** 2).sum(axis=0)


def _merge(a: _Moments, b: _Moments) -> _Moments:
    na, ma, qa = a
    nb, mb, qb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), qa + qb + delta**2 * (na * nb / n)


def tree_reduce(parts: List[_Moments]) -> _Moments:
    """Pairwise reduction in index order; fixes the floating-point result."""
    while len(parts) > 1:
        nxt = [_merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def chunk_plan(n: int, chunk_size: int) -> List[int]:
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def mc_mean(
    sample_fn: Callable[[int, RandomStream], np.ndarray],
    n: int,
    stream: RandomStream,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
    variance_bound: Optional[float] = None,
) -> EstimateWithError:
    """Average ``n`` i.i.d. samples drawn chunk by chunk.

    Chunk ``i`` draws from ``stream.child(i)``; the result depends only on
    ``(stream, n, chunk_size)``, never on ``workers``.
    """
    sizes = chunk_plan(n, chunk_size)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    def run(i: int) -> _Moments:
        x = np.asarray(sample_fn(sizes[i], stream.child(i)), dtype=float)
        bad = ~np.isfinite(x)
        if bad.any():
            first = int(np.argwhere(bad.reshape(bad.shape[0], -1).any(axis=1))[0, 0])
            raise EstimatorError("non-finite integrand value", int(offsets[i]) + first)
        return _moments(x)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    count, mean, m2 = tree_reduce(parts)
    if count > 1:
        stderr = np.sqrt(m2 / (count - 1) / count)
    else:
        stderr = np.full_like(mean, np.inf)
    if np.ndim(mean) == 0:
        mean, stderr = float(mean), float(stderr)
    return EstimateWithError(mean, count, stderr, variance_bound)


def summarize(samples: np.ndarray, variance_bound: Optional[float] = None) -> EstimateWithError:
    """Estimate from an in-memory sample array (first axis = samples)."""
    x = np.asarray(samples, dtype=float)
    count, mean, m2 = _moments(x)
    stderr = np.sqrt(m2 / (count - 1) / count) if count > 1 else np.full_like(mean, np.inf)
    if np.ndim(mean) == 0:
        mean, stderr = float(mean), float(stderr)
    return EstimateWithError(mean, count, stderr, variance_bound)

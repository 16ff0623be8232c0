"""Confidence radii for sup-norm Monte Carlo errors and the choice of depth ``n``.

The tail of ``sqrt(N) ||u_{n,N} - u_n||`` is modelled as
``Q(v) = C v^(kappa - 1) exp(-v^2 / (2 sigma^2))`` for ``v >= 3 sigma``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .combinatorics import d_sequence
from .estimate import EstimateWithError


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class TailModel:
    C: float
    kappa: float
    sigma: float

    def __post_init__(self):
        if not (self.C > 0 and self.sigma > 0 and math.isfinite(self.C) and math.isfinite(self.sigma)):
            raise FitError("C and sigma must be positive and finite")
        # d/dv log Q = (kappa - 1)/v - v/sigma^2 < 0 on v >= 3 sigma iff kappa < 10
        if self.kappa >= 10:
            raise FitError(f"kappa={self.kappa} makes the tail increase somewhere above 3 sigma")

    def log_q(self, v: float) -> float:
        return math.log(self.C) + (self.kappa - 1) * math.log(v) - v * v / (2 * self.sigma**2)


def tail_probability(v: float, model: TailModel) -> float:
    if not v > 0:
        raise FitError("v must be positive")
    return math.exp(model.log_q(v))


def solve_quantile(delta: float, model: TailModel) -> float:
    """Root ``v >= 3 sigma`` of ``Q(v) = delta`` by bisection."""
    if not 0 < delta < 1:
        raise FitError("delta must lie in (0, 1)")
    lo = 3 * model.sigma
    target = math.log(delta)
    gap = model.log_q(lo) - target
    if abs(gap) <= 1e-12 * max(1.0, abs(target)):
        return lo
    if gap < 0:
        raise FitError(
            f"Q(3 sigma) = {tail_probability(lo, model):.3g} < delta = {delta}; "
            "no root above 3 sigma, choose a smaller delta"
        )
    hi = 2 * lo
    while model.log_q(hi) > target:
        hi *= 2
    return optimize.bisect(lambda v: model.log_q(v) - target, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=400)


def confidence_radius(v_delta: float, N: int) -> float:
    if N < 1:
        raise FitError("N must be >= 1")
    return v_delta / math.sqrt(N)


def empirical_tail_fit(
    replicate_norms: Sequence[float], kappa: float = 1.0, sigma: Optional[float] = None, min_replicates: int = 30
) -> TailModel:
    """Fit ``(C, sigma)`` to scaled replicate error norms.

    ``sigma`` defaults to the root mean square of the norms (the scale of a
    half-normal); a caller may supply a better one, e.g. the pointwise
    standard deviation.  ``C`` is chosen so that the model passes through
    the empirical 90th percentile: ``Q(v_90) = 0.1``.
    """
    x = np.asarray(replicate_norms, dtype=float)
    if x.size < min_replicates:
        raise FitError(f"need at least {min_replicates} replicates, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise FitError("replicate norms must be finite and non-negative")
    if np.ptp(x) == 0:
        raise FitError("degenerate replicates (no spread); the tail cannot be fitted")
    s = float(np.sqrt(np.mean(x**2))) if sigma is None else float(sigma)
    v90 = float(np.quantile(x, 0.9))
    if v90 <= 0:
        raise FitError("90th percentile is zero; degenerate replicates")
    C = 0.1 / (v90 ** (kappa - 1) * math.exp(-(v90**2) / (2 * s * s)))
    return TailModel(C, kappa, s)


def _exp_log(logv: float) -> float:
    try:
        return math.exp(logv)
    except OverflowError:
        return math.inf


def combined_error(q: float, n: int, N: int, C: float, d: int) -> float:
    """``C (q^n + D(n) / sqrt(N))`` with exact ``D(n)``."""
    D = d_sequence(n, d)
    return C * (q**n + _exp_log(math.log(D) - 0.5 * math.log(N)))


def optimal_n(q: float, N: int, C: float, d: int, n_max: int) -> int:
    """Argmin of :func:`combined_error` over ``1..n_max`` with ``D(n)^2 <= N``."""
    if n_max < 1:
        raise FitError("n_max must be >= 1")
    best, best_val = None, math.inf
    for n in range(1, n_max + 1):
        if d_sequence(n, d) ** 2 > N:
            continue
        val = combined_error(q, n, N, C, d)
        if val < best_val:
            best, best_val = n, val
    if best is None:
        raise FitError(f"no n in 1..{n_max} satisfies D(n) <= sqrt(N) for N={N}")
    return best


@dataclass(frozen=True)
class ConfidenceReport:
    delta: float
    v_delta: float
    radius: float
    n_samples: int
    model: Optional[TailModel] = None
    degenerate: bool = False
    n_replicates: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = asdict(self.model) if self.model else None
        return out


def _values(run) -> EstimateWithError:
    return run.values if hasattr(run, "values") else run


def ci_for_run(runs: Sequence, delta: float = 0.05, kappa: float = 1.0, min_replicates: int = 30) -> ConfidenceReport:
    """Confidence radius for one run from independent replicates.

    ``runs`` holds :class:`SolutionEstimate` or :class:`EstimateWithError`
    objects with equal sample counts.  The replicate mean serves as the
    centre; ``sigma`` is the largest pointwise per-sample standard
    deviation, and the quantile is clamped to ``v >= 3 sigma``.
    """
    if len(runs) < min_replicates:
        raise FitError(f"need at least {min_replicates} replicate runs, got {len(runs)}")
    ests = [_values(r) for r in runs]
    N = ests[0].n_samples
    if any(e.n_samples != N for e in ests):
        raise FitError("replicates must share the sample count")
    vals = np.array([np.asarray(e.value, dtype=float) for e in ests])
    centre = vals.mean(axis=0)
    flat = (vals - centre).reshape(len(ests), -1)
    norms = math.sqrt(N) * np.abs(flat).max(axis=1)
    if np.ptp(norms) == 0:
        return ConfidenceReport(delta, 0.0, 0.0, N, None, True, len(ests))
    sigma = math.sqrt(N) * float(np.sqrt(np.mean(np.array([np.asarray(e.stderr) for e in ests]) ** 2, axis=0)).max())
    if not sigma > 0:
        sigma = None
    model = empirical_tail_fit(norms, kappa, sigma, min_replicates)
    if model.log_q(3 * model.sigma) > math.log(delta):
        v = solve_quantile(delta, model)
    else:
        v = 3 * model.sigma
    return ConfidenceReport(delta, v, confidence_radius(v, N), N, model, False, len(ests))
